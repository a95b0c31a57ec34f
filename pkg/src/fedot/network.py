"""Transport network, population model and plan constraints.

Plans are dense ``(n_types, n_sources)`` float arrays; entries outside the
edge set are held at zero and ``Network.mask`` marks the feasible edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

from .errors import DuplicateEdge, IsolatedNode, NetworkError, ValidationError

PROB_TOL = 1e-12


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Network:
    """Bipartite graph between target types and sources.

    Types and sources are addressed by dense indices; ``type_names`` and
    ``source_names`` keep the external identifiers.
    """

    type_names: tuple
    source_names: tuple
    edges: tuple  # sorted (type_index, source_index) pairs
    mask: np.ndarray = field(repr=False)
    sources_of: tuple = field(repr=False)  # Y_x per type index
    types_of: tuple = field(repr=False)  # X_y per source index

    @property
    def n_types(self) -> int:
        return len(self.type_names)

    @property
    def n_sources(self) -> int:
        return len(self.source_names)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_types, self.n_sources)

    def edge_values(self, plan: np.ndarray) -> np.ndarray:
        """Row-major vector of plan values on the edge set."""
        return np.asarray(plan, dtype=float)[self.mask]

    def plan_from_edges(self, values) -> np.ndarray:
        plan = np.zeros(self.shape)
        plan[self.mask] = np.asarray(values, dtype=float)
        return plan

    def zero_plan(self) -> np.ndarray:
        return np.zeros(self.shape)

    def check_plan(self, plan) -> np.ndarray:
        plan = np.asarray(plan, dtype=float)
        if plan.shape != self.shape:
            raise NetworkError(f"plan shape {plan.shape} != network shape {self.shape}")
        if np.any(plan[~self.mask] != 0.0):
            raise NetworkError("plan has mass outside the edge set")
        return plan

    def edge_labels(self) -> list[str]:
        return [f"{self.type_names[i]}_{self.source_names[j]}" for i, j in self.edges]

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.type_names == other.type_names
            and self.source_names == other.source_names
            and self.edges == other.edges
        )

    def __hash__(self):
        return hash((self.type_names, self.source_names, self.edges))


def build_network(
    types: Sequence[Hashable],
    sources: Sequence[Hashable],
    edges: Iterable[tuple[Hashable, Hashable]],
) -> Network:
    """Build a :class:`Network` from identifiers.

    Raises ``IsolatedNode`` when a type or a source has no incident edge and
    ``DuplicateEdge`` when an edge is listed twice.
    """
    types = tuple(types)
    sources = tuple(sources)
    if len(set(types)) != len(types):
        raise NetworkError("type identifiers are not unique")
    if len(set(sources)) != len(sources):
        raise NetworkError("source identifiers are not unique")
    t_index = {t: i for i, t in enumerate(types)}
    s_index = {s: j for j, s in enumerate(sources)}

    seen = set()
    for x, y in edges:
        if x not in t_index:
            raise NetworkError(f"edge references unknown type {x!r}")
        if y not in s_index:
            raise NetworkError(f"edge references unknown source {y!r}")
        e = (t_index[x], s_index[y])
        if e in seen:
            raise DuplicateEdge(f"edge ({x!r}, {y!r}) listed twice")
        seen.add(e)

    mask = np.zeros((len(types), len(sources)), dtype=bool)
    for i, j in seen:
        mask[i, j] = True
    for i, t in enumerate(types):
        if not mask[i].any():
            raise IsolatedNode("type", t)
    for j, s in enumerate(sources):
        if not mask[:, j].any():
            raise IsolatedNode("source", s)

    mask.setflags(write=False)
    return Network(
        type_names=types,
        source_names=sources,
        edges=tuple(sorted(seen)),
        mask=mask,
        sources_of=tuple(tuple(np.flatnonzero(mask[i])) for i in range(len(types))),
        types_of=tuple(tuple(np.flatnonzero(mask[:, j])) for j in range(len(sources))),
    )


def complete_network(n_types: int, n_sources: int) -> Network:
    """Complete bipartite network with identifiers ``1..n``."""
    types = list(range(1, n_types + 1))
    sources = list(range(1, n_sources + 1))
    return build_network(types, sources, [(x, y) for x in types for y in sources])


@dataclass(frozen=True, eq=False)
class Bounds:
    """Per-type received bounds (per node) and per-source shipped bounds (aggregate)."""

    p_lo: np.ndarray
    p_hi: np.ndarray
    q_lo: np.ndarray
    q_hi: np.ndarray

    def __post_init__(self):
        for name in ("p_lo", "p_hi", "q_lo", "q_hi"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.p_lo.shape != self.p_hi.shape or self.q_lo.shape != self.q_hi.shape:
            raise ValidationError("bound vectors have mismatched lengths", "bounds shape")
        if np.any(self.p_lo < 0) or np.any(self.p_lo > self.p_hi):
            raise ValidationError("need 0 <= p_lo <= p_hi for every type", "0 <= p_lo <= p_hi")
        if np.any(self.q_lo < 0) or np.any(self.q_lo > self.q_hi):
            raise ValidationError("need 0 <= q_lo <= q_hi for every source", "0 <= q_lo <= q_hi")

    @classmethod
    def upper(cls, p_hi, q_hi, p_lo=None, q_lo=None) -> "Bounds":
        """Bounds with lower limits defaulting to zero."""
        p_hi = np.asarray(p_hi, dtype=float)
        q_hi = np.asarray(q_hi, dtype=float)
        return cls(
            p_lo=np.zeros_like(p_hi) if p_lo is None else p_lo,
            p_hi=p_hi,
            q_lo=np.zeros_like(q_hi) if q_lo is None else q_lo,
            q_hi=q_hi,
        )

    def check(self, network: Network) -> "Bounds":
        if self.p_hi.shape != (network.n_types,) or self.q_hi.shape != (network.n_sources,):
            raise ValidationError(
                f"bounds sized ({self.p_hi.size}, {self.q_hi.size}) for a "
                f"{network.n_types}x{network.n_sources} network",
                "bounds shape",
            )
        return self

    def __eq__(self, other):
        if not isinstance(other, Bounds):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, n), getattr(other, n))
            for n in ("p_lo", "p_hi", "q_lo", "q_hi")
        )


@dataclass(frozen=True, eq=False)
class TypeDistribution:
    """Type proportions and total population; ``counts`` are kept real."""

    prob: np.ndarray
    population: float

    def __post_init__(self):
        object.__setattr__(self, "prob", _frozen(self.prob))
        if self.prob.ndim != 1 or self.prob.size == 0:
            raise ValidationError("prob must be a nonempty vector", "prob shape")
        if np.any(self.prob <= 0):
            raise ValidationError("every type needs prob > 0", "prob > 0")
        if abs(self.prob.sum() - 1.0) > PROB_TOL:
            raise ValidationError(
                f"prob sums to {self.prob.sum():.15g}, not 1", "sum(prob) == 1"
            )
        if not self.population > 0:
            raise ValidationError("population must be positive", "population > 0")

    @property
    def counts(self) -> np.ndarray:
        return self.prob * self.population

    def __len__(self):
        return self.prob.size

    def __eq__(self, other):
        if not isinstance(other, TypeDistribution):
            return NotImplemented
        return np.array_equal(self.prob, other.prob) and self.population == other.population


def feasibility_residual(plan, network: Network, bounds: Bounds, dist: TypeDistribution) -> float:
    """Euclidean distance from ``plan`` to the feasible plan polytope."""
    from .projection import constraint_violation, project_feasible_plan

    plan = np.asarray(plan, dtype=float)
    weights = dist.counts
    if constraint_violation(plan, network, bounds, weights) == 0.0:
        return 0.0
    projected, _ = project_feasible_plan(plan, network, bounds, weights)
    return float(np.linalg.norm(plan - projected))
