"""Per-edge utilities and the objectives built from them.

Every family acts elementwise on a full ``(n_types, n_sources)`` plan matrix;
callers mask out non-edges.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NonDifferentiable, ValidationError
from .network import Network, TypeDistribution

_CHECK_GRID = np.array([0.0, 1e-3, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0])


class UtilityFamily:
    """Elementwise utility ``u(pi)``; subclasses provide value and derivatives."""

    name = "custom"
    differentiable = True

    def value(self, pi: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, pi: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def second_derivative(self, pi: np.ndarray) -> Optional[np.ndarray]:
        return None

    @property
    def is_linear(self) -> bool:
        return False


@dataclass(frozen=True, eq=False)
class Linear(UtilityFamily):
    coef: np.ndarray
    name = "linear"

    def __post_init__(self):
        object.__setattr__(self, "coef", np.asarray(self.coef, dtype=float))

    def value(self, pi):
        return self.coef * pi

    def derivative(self, pi):
        return np.broadcast_to(self.coef, np.shape(pi)).astype(float)

    def second_derivative(self, pi):
        return np.zeros(np.shape(pi))

    @property
    def is_linear(self):
        return True


@dataclass(frozen=True, eq=False)
class Logarithmic(UtilityFamily):
    """``coef * log(1 + pi)``."""

    coef: np.ndarray
    name = "log"

    def __post_init__(self):
        object.__setattr__(self, "coef", np.asarray(self.coef, dtype=float))

    def value(self, pi):
        return self.coef * np.log1p(pi)

    def derivative(self, pi):
        return self.coef / (1.0 + np.asarray(pi, dtype=float))

    def second_derivative(self, pi):
        return -self.coef / (1.0 + np.asarray(pi, dtype=float)) ** 2


@dataclass(frozen=True, eq=False)
class Sqrt(UtilityFamily):
    """``coef * sqrt(pi)``; derivative is infinite at zero."""

    coef: np.ndarray
    name = "sqrt"

    def __post_init__(self):
        object.__setattr__(self, "coef", np.asarray(self.coef, dtype=float))

    def value(self, pi):
        return self.coef * np.sqrt(np.maximum(pi, 0.0))

    def derivative(self, pi):
        pi = np.asarray(pi, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(self.coef == 0, 0.0, 0.5 * self.coef / np.sqrt(np.maximum(pi, 0.0)))
        return d

    def second_derivative(self, pi):
        pi = np.asarray(pi, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.coef == 0, 0.0, -0.25 * self.coef * np.maximum(pi, 0.0) ** -1.5)


class Callback(UtilityFamily):
    """User-supplied elementwise utility.

    ``value`` and ``derivative`` take and return arrays of the plan's shape.
    Without a derivative the family cannot be used by gradient-based code.
    """

    name = "callback"

    def __init__(self, value: Callable, derivative: Callable | None = None,
                 second_derivative: Callable | None = None):
        self._value = value
        self._derivative = derivative
        self._second = second_derivative
        self.differentiable = derivative is not None

    def value(self, pi):
        return np.asarray(self._value(np.asarray(pi, dtype=float)), dtype=float)

    def derivative(self, pi):
        if self._derivative is None:
            raise NonDifferentiable("callback utility has no derivative")
        return np.asarray(self._derivative(np.asarray(pi, dtype=float)), dtype=float)

    def second_derivative(self, pi):
        if self._second is None:
            return None
        return np.asarray(self._second(np.asarray(pi, dtype=float)), dtype=float)


FAMILIES = {"linear": Linear, "log": Logarithmic, "sqrt": Sqrt}


class UtilityModel:
    """Target utilities ``t_xy`` and source utilities ``s_xy`` on a network.

    ``lipschitz_sum`` is the constant ``L_s + L_t`` used by the convergence
    diagnostics. When omitted it defaults to the largest per-edge derivative
    at zero times ``sqrt(2 |E|)``.
    """

    def __init__(self, network: Network, target: UtilityFamily, source: UtilityFamily,
                 lipschitz_sum: float | None = None, check: bool = True):
        self.network = network
        self.target = target
        self.source = source
        self._lipschitz_sum = lipschitz_sum
        if check:
            self._check_shape_and_monotonicity()

    @classmethod
    def linear(cls, network: Network, delta, gamma, lipschitz_sum=None) -> "UtilityModel":
        return cls(network, Linear(delta), Linear(gamma), lipschitz_sum)

    @classmethod
    def logarithmic(cls, network: Network, a_target, a_source, lipschitz_sum=None):
        return cls(network, Logarithmic(a_target), Logarithmic(a_source), lipschitz_sum)

    @property
    def is_linear(self) -> bool:
        return self.target.is_linear and self.source.is_linear

    @property
    def differentiable(self) -> bool:
        return self.target.differentiable and self.source.differentiable

    def _check_shape_and_monotonicity(self):
        mask = self.network.mask
        for side, fam in (("target", self.target), ("source", self.source)):
            coef = getattr(fam, "coef", None)
            if coef is not None and np.shape(coef) != mask.shape:
                raise ValidationError(
                    f"{side} coefficients shaped {np.shape(coef)}, network is {mask.shape}",
                    "utility matrix shape",
                )
            if not fam.differentiable:
                continue
            # increasing and concave: derivative >= 0 and nonincreasing on a grid
            grid = _CHECK_GRID[:, None, None] * np.ones(mask.shape)
            d = np.stack([fam.derivative(g) for g in grid])[:, mask]
            d = np.where(np.isnan(d), np.inf, d)
            if np.any(d < 0):
                raise ValidationError(f"{side} utility is decreasing somewhere", "increasing utility")
            with np.errstate(invalid="ignore"):
                steps = np.diff(d, axis=0)
            if np.any(steps[np.isfinite(steps)] > 1e-12 * (1 + np.abs(d[1:][np.isfinite(steps)]))):
                raise ValidationError(f"{side} utility is not concave", "concave utility")

    # elementwise helpers, masked to the edge set

    def edge_value(self, plan) -> np.ndarray:
        plan = np.asarray(plan, dtype=float)
        v = self.target.value(plan) + self.source.value(plan)
        return np.where(self.network.mask, v, 0.0)

    def edge_derivative(self, plan) -> np.ndarray:
        """``t'_xy + s'_xy`` on edges, zero elsewhere."""
        plan = np.asarray(plan, dtype=float)
        d = self.target.derivative(plan) + self.source.derivative(plan)
        return np.where(self.network.mask, d, 0.0)

    def edge_second_derivative(self, plan) -> np.ndarray | None:
        a = self.target.second_derivative(plan)
        b = self.source.second_derivative(plan)
        if a is None or b is None:
            return None
        return np.where(self.network.mask, a + b, 0.0)

    @property
    def lipschitz_sum(self) -> float:
        if self._lipschitz_sum is not None:
            return float(self._lipschitz_sum)
        d0 = self.edge_derivative(np.zeros(self.network.shape))[self.network.mask]
        if not np.all(np.isfinite(d0)):
            raise ValidationError(
                "utility derivative is unbounded at zero; pass lipschitz_sum explicitly",
                "finite Lipschitz constant",
            )
        return float(d0.max(initial=0.0) * np.sqrt(2 * self.network.n_edges))


def total_objective(plan, utility: UtilityModel, dist: TypeDistribution) -> float:
    """Population-weighted total utility of a plan (the quantity being maximized)."""
    per_edge = utility.edge_value(plan)
    return float((per_edge.sum(axis=1) * dist.counts).sum())


def expected_cost(plan, utility: UtilityModel, prob) -> float:
    """``F(plan) = sum_x prob[x] f(plan; x)``, i.e. minus the objective divided by N."""
    per_edge = utility.edge_value(plan)
    return float(-(per_edge.sum(axis=1) * np.asarray(prob, dtype=float)).sum())


def local_cost(plan, utility: UtilityModel, x: int) -> float:
    """Unweighted cost of type ``x``: minus its target and source utilities."""
    return float(-utility.edge_value(plan)[x].sum())


def subgradient_local_cost(plan, utility: UtilityModel, x: int) -> np.ndarray:
    """Gradient of :func:`local_cost` with respect to the full plan matrix."""
    if not utility.differentiable:
        raise NonDifferentiable("utility family has no derivative")
    plan = np.asarray(plan, dtype=float)
    g = np.zeros(utility.network.shape)
    row = -utility.edge_derivative(plan)[x]
    bad = ~np.isfinite(row) & utility.network.mask[x]
    if np.any(bad):
        cols = np.flatnonzero(bad)
        raise NonDifferentiable(
            f"utility not differentiable at pi={plan[x, cols].tolist()} (type {x}, sources {cols.tolist()})"
        )
    g[x] = np.where(utility.network.mask[x], row, 0.0)
    return g
