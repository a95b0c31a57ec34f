"""Consensus ADMM for the known-distribution transport problem.

Targets and sources each keep a copy of the plan (``plan_t``, ``plan_s``);
a consensus plan and one dual variable per edge tie them together. One
iteration updates every type row, then every source column, then the
consensus plan, then the duals.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._roots import group_sum_argmin, increasing_root
from .errors import MaxIterationsExceeded
from .network import Bounds, Network, TypeDistribution
from .projection import constraint_violation, project_groups
from .utility import UtilityModel, total_objective


@dataclass(frozen=True)
class ADMMConfig:
    eta: float = 1.0
    max_iterations: int = 50_000
    primal_tol: float = 1e-6
    dual_tol: float = 1e-7

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not (self.primal_tol > 0 and self.dual_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class ADMMState:
    plan_t: np.ndarray
    plan_s: np.ndarray
    plan: np.ndarray
    alpha: np.ndarray
    eta: float
    k: int = 0

    @classmethod
    def zeros(cls, network: Network, eta: float) -> "ADMMState":
        z = np.zeros(network.shape)
        return cls(z, z.copy(), z.copy(), z.copy(), eta, 0)


@dataclass
class ADMMTrace:
    objective: list = field(default_factory=list)
    primal_residual: list = field(default_factory=list)
    dual_residual: list = field(default_factory=list)
    violation: list = field(default_factory=list)
    plans: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.objective)


def _target_rows(state: ADMMState, utility: UtilityModel, bounds: Bounds,
                 dist: TypeDistribution) -> np.ndarray:
    net = utility.network
    mask = net.mask
    weight = dist.prob[:, None]
    W = mask.astype(float)
    eta = state.eta
    if utility.target.is_linear:
        free = state.plan + (weight * utility.target.coef - state.alpha) / eta
        return project_groups(np.where(mask, free, 0.0), W, bounds.p_lo, bounds.p_hi)

    t = utility.target
    center = state.plan

    def coords(lam):
        shift = state.alpha + lam[:, None] * W

        def h(p):
            return -weight * t.derivative(p) + shift + eta * (p - center)

        def dh(p):
            d2 = t.second_derivative(p)
            return None if d2 is None else -weight * d2 + eta

        sol = increasing_root(h, dh if t.second_derivative(center) is not None else None,
                              np.zeros(net.shape), center + 1.0)
        return np.where(mask, sol, 0.0)

    return group_sum_argmin(coords, W, bounds.p_lo, bounds.p_hi)


def _source_cols(state: ADMMState, utility: UtilityModel, bounds: Bounds,
                 dist: TypeDistribution) -> np.ndarray:
    net = utility.network
    mask = net.mask
    weight = dist.prob[:, None]
    Wt = (mask * dist.counts[:, None]).T
    eta = state.eta
    if utility.source.is_linear:
        free = state.plan + (weight * utility.source.coef + state.alpha) / eta
        return project_groups(np.where(mask, free, 0.0).T, Wt, bounds.q_lo, bounds.q_hi).T

    s = utility.source
    center = state.plan

    def coords(lam):
        shift = -state.alpha + lam[None, :] * Wt.T

        def h(p):
            return -weight * s.derivative(p) + shift + eta * (p - center)

        def dh(p):
            return -weight * s.second_derivative(p) + eta

        has_d2 = s.second_derivative(center) is not None
        sol = increasing_root(h, dh if has_d2 else None, np.zeros(net.shape), center + 1.0)
        return np.where(mask, sol, 0.0).T

    return group_sum_argmin(coords, Wt, bounds.q_lo, bounds.q_hi).T


def target_update(state: ADMMState, x: int, utility: UtilityModel, bounds: Bounds,
                  dist: TypeDistribution) -> np.ndarray:
    """New target-side row for type ``x`` (row of length ``n_sources``).

    Minimizes ``-P(x) sum t(pi) + sum alpha*pi + eta/2 |pi - plan|^2`` over
    the type's box-sum set. Rows are independent, so all of them are solved
    together and row ``x`` is returned.
    """
    return _target_rows(state, utility, bounds, dist)[x]


def source_update(state: ADMMState, y: int, utility: UtilityModel, bounds: Bounds,
                  dist: TypeDistribution) -> np.ndarray:
    """New source-side column for source ``y`` (length ``n_types``)."""
    return _source_cols(state, utility, bounds, dist)[:, y]


def consensus_update(plan_t, plan_s) -> np.ndarray:
    return 0.5 * (np.asarray(plan_t, dtype=float) + np.asarray(plan_s, dtype=float))


def dual_update(alpha, plan_t, plan_s, eta: float) -> np.ndarray:
    return np.asarray(alpha, dtype=float) + 0.5 * eta * (np.asarray(plan_t) - np.asarray(plan_s))


def admm_step(state: ADMMState, utility: UtilityModel, bounds: Bounds,
              dist: TypeDistribution) -> ADMMState:
    """One full iteration: targets, sources, consensus, duals."""
    plan_t = _target_rows(state, utility, bounds, dist)
    plan_s = _source_cols(state, utility, bounds, dist)
    plan = consensus_update(plan_t, plan_s)
    alpha = dual_update(state.alpha, plan_t, plan_s, state.eta)
    return replace(state, plan_t=plan_t, plan_s=plan_s, plan=plan, alpha=alpha, k=state.k + 1)


def admm_solve(network: Network, utility: UtilityModel, bounds: Bounds, dist: TypeDistribution,
               config: ADMMConfig = ADMMConfig(), keep_plans: bool = False,
               ) -> tuple[np.ndarray, ADMMTrace]:
    """Run ADMM from the all-zero state until both residual tolerances hold.

    Stops when ``max|plan_t - plan_s| <= primal_tol`` and the consensus plan
    moved by at most ``dual_tol``. Raises ``MaxIterationsExceeded`` (with the
    iterate of smallest primal residual and the trace) otherwise.
    """
    bounds.check(network)
    state = ADMMState.zeros(network, config.eta)
    trace = ADMMTrace()
    best_plan, best_res = state.plan, np.inf
    for _ in range(config.max_iterations):
        new = admm_step(state, utility, bounds, dist)
        r_pri = float(np.abs(new.plan_t - new.plan_s).max())
        r_dual = float(np.abs(new.plan - state.plan).max())
        trace.objective.append(total_objective(new.plan, utility, dist))
        trace.primal_residual.append(r_pri)
        trace.dual_residual.append(r_dual)
        trace.violation.append(constraint_violation(new.plan, network, bounds, dist.counts))
        if keep_plans:
            trace.plans.append(new.plan)
        state = new
        if r_pri < best_res:
            best_plan, best_res = state.plan, r_pri
        if r_pri <= config.primal_tol and r_dual <= config.dual_tol:
            trace.converged = True
            return state.plan, trace
    raise MaxIterationsExceeded(
        f"ADMM stopped after {config.max_iterations} iterations "
        f"(primal residual {trace.primal_residual[-1]:.3g}, dual {trace.dual_residual[-1]:.3g})",
        plan=best_plan,
        trace=trace,
    )
