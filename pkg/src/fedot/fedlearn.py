"""Federated proximal learning of the transport plan under an unknown type distribution.

Each step reveals the type of one target node. Nodes of that type solve a
local proximal problem on their own row of the plan, the central planner
merges the row back and projects onto the constraint set built from the
empirical type distribution observed so far.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ._roots import increasing_root
from .instance import Instance
from .network import Bounds, TypeDistribution, feasibility_residual
from .projection import merge_local, project_feasible_plan
from .utility import UtilityModel, total_objective


@dataclass
class EmpiricalCounter:
    counts: np.ndarray
    k: int = 0

    @classmethod
    def empty(cls, n_types: int) -> "EmpiricalCounter":
        return cls(np.zeros(n_types, dtype=np.int64), 0)

    def add(self, x: int) -> "EmpiricalCounter":
        counts = self.counts.copy()
        counts[x] += 1
        return EmpiricalCounter(counts, self.k + 1)

    def pdf(self) -> np.ndarray:
        if self.k == 0:
            return np.zeros(self.counts.size)
        return self.counts / self.k


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``mu_k`` for ``k = 1, 2, ...``."""

    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in ("constant", "inverse_sqrt"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not self.value > 0:
            raise ValueError("step size must be positive")

    @classmethod
    def constant(cls, mu: float) -> "StepSchedule":
        return cls("constant", mu)

    @classmethod
    def inverse_sqrt(cls, c: float) -> "StepSchedule":
        return cls("inverse_sqrt", c)

    def __call__(self, k: int) -> float:
        if k < 1:
            raise ValueError("steps are numbered from 1")
        if self.kind == "constant":
            return self.value
        return self.value / math.sqrt(k)


@dataclass(frozen=True)
class ShiftEvent:
    """Switch the sampling distribution for every iteration after ``at_iteration``."""

    at_iteration: int
    new_distribution: TypeDistribution

    def __post_init__(self):
        if self.at_iteration < 1:
            raise ValueError("shift iteration must be >= 1")


@dataclass
class FLState:
    """Learner state after ``k`` steps.

    ``plan_sum`` and ``local_sum`` accumulate ``mu_i * plan(i-1)`` and
    ``mu_i * local(i)`` so that the step-weighted averages are exact running
    means.
    """

    plan: np.ndarray
    counter: EmpiricalCounter
    rng: np.random.Generator
    k: int = 0
    last_local: np.ndarray | None = None
    last_type: int | None = None
    last_mu: float | None = None
    mu1: float = 0.0
    mu2: float = 0.0
    plan_sum: np.ndarray | None = None
    local_sum: np.ndarray | None = None

    @classmethod
    def initial(cls, plan: np.ndarray, seed) -> "FLState":
        plan = np.asarray(plan, dtype=float)
        return cls(
            plan=plan,
            counter=EmpiricalCounter.empty(plan.shape[0]),
            rng=np.random.default_rng(seed),
            plan_sum=np.zeros_like(plan),
            local_sum=np.zeros_like(plan),
        )

    @property
    def averaged_plan(self) -> np.ndarray:
        if self.mu1 == 0:
            return self.plan.copy()
        return self.plan_sum / self.mu1

    @property
    def averaged_local(self) -> np.ndarray:
        if self.mu1 == 0:
            return self.plan.copy()
        return self.local_sum / self.mu1


def sample_type(rng: np.random.Generator, dist: TypeDistribution) -> int:
    return int(rng.choice(dist.prob.size, p=dist.prob))


def local_prox_update(plan, x: int, mu: float, utility: UtilityModel) -> np.ndarray:
    """Proximal step of type ``x``'s own cost; returns its new row.

    Solves ``min -sum_y t_xy(pi) - sum_y s_xy(pi) + |pi - plan|^2 / (2 mu)``.
    The problem separates by edge and rows of other types stay put, so only
    row ``x`` is returned. Linear utilities have the closed form
    ``pi = plan + mu * (delta + gamma)``.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    plan = np.asarray(plan, dtype=float)
    net = utility.network
    mask = net.mask[x]
    center = plan[x]
    if utility.is_linear:
        row = center + mu * (utility.target.coef[x] + utility.source.coef[x])
        return np.where(mask, row, 0.0)

    def grad(p):
        full = np.zeros(net.shape)
        full[x] = p
        return (utility.target.derivative(full) + utility.source.derivative(full))[x]

    def h(p):
        return (p - center) / mu - grad(p)

    dh = None
    if utility.edge_second_derivative(plan) is not None:
        def dh(p):
            full = np.zeros(net.shape)
            full[x] = p
            d2 = utility.target.second_derivative(full) + utility.source.second_derivative(full)
            return 1.0 / mu - d2[x]

    g0 = grad(center)
    guess = np.where(np.isfinite(g0), center + mu * g0, center + 1.0)
    row = increasing_root(h, dh, center, guess)
    return np.where(mask, row, 0.0)


def fl_step(state: FLState, sampling: TypeDistribution, bounds: Bounds, utility: UtilityModel,
            schedule: StepSchedule, n_est: float) -> FLState:
    """Sample a type, take its proximal step, merge and project."""
    net = utility.network
    k = state.k + 1
    x = sample_type(state.rng, sampling)
    mu = schedule(k)
    row = local_prox_update(state.plan, x, mu, utility)
    local = merge_local(state.plan, row, x, net)
    counter = state.counter.add(x)
    new_plan, _ = project_feasible_plan(local, net, bounds, counter.pdf() * n_est)
    return replace(
        state,
        plan=new_plan,
        counter=counter,
        k=k,
        last_local=local,
        last_type=x,
        last_mu=mu,
        mu1=state.mu1 + mu,
        mu2=state.mu2 + mu * mu,
        plan_sum=state.plan_sum + mu * state.plan,
        local_sum=state.local_sum + mu * local,
    )


@dataclass
class FLTrace:
    """Per-iteration record of a federated run (row ``i`` is iteration ``i + 1``)."""

    type_names: tuple
    edge_labels: list
    initial_plan: np.ndarray
    sampled: list = field(default_factory=list)
    mu: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    received: list = field(default_factory=list)
    pdf: list = field(default_factory=list)
    plan: list = field(default_factory=list)
    avg_plan: list = field(default_factory=list)
    mu1: list = field(default_factory=list)
    mu2: list = field(default_factory=list)

    def __len__(self):
        return len(self.sampled)


def fl_run(instance: Instance, schedule: StepSchedule, iterations: int, seed=42,
           shifts: Sequence[ShiftEvent] = (), n_est: float | None = None,
           initial_plan=None, track_residual: bool = True) -> tuple[np.ndarray, FLTrace]:
    """Run the federated learner for ``iterations`` steps.

    Shift events change the sampling distribution for all later iterations;
    the empirical counter keeps the samples drawn before the shift.
    Objective and feasibility residual in the trace are measured against the
    distribution currently generating the samples.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    net = instance.network
    n_est = instance.dist.population if n_est is None else float(n_est)
    plan0 = net.zero_plan() if initial_plan is None else net.check_plan(initial_plan)
    state = FLState.initial(plan0, seed)
    pending = sorted(shifts, key=lambda s: s.at_iteration)
    current = instance.dist
    trace = FLTrace(net.type_names, net.edge_labels(), plan0.copy())

    for k in range(1, iterations + 1):
        while pending and k > pending[0].at_iteration:
            current = pending.pop(0).new_distribution
        state = fl_step(state, current, instance.bounds, instance.utility, schedule, n_est)
        plan = state.plan
        trace.sampled.append(state.last_type)
        trace.mu.append(state.last_mu)
        trace.objective.append(total_objective(plan, instance.utility, current))
        trace.residual.append(
            feasibility_residual(plan, net, instance.bounds, current) if track_residual else float("nan")
        )
        trace.received.append(plan.sum(axis=1))
        trace.pdf.append(state.counter.pdf())
        trace.plan.append(net.edge_values(plan))
        trace.avg_plan.append(net.edge_values(state.averaged_plan))
        trace.mu1.append(state.mu1)
        trace.mu2.append(state.mu2)
    return state.plan, trace


def rescale_plan(plan, n_true: float, n_est: float) -> np.ndarray:
    """Convert a plan learned with population estimate ``n_est`` to the true population.

    Per-node amounts scale inversely with the population in the source
    capacity constraints, so the plan is multiplied by ``n_est / n_true``.
    """
    if not (n_true > 0 and n_est > 0):
        raise ValueError("population sizes must be positive")
    return np.asarray(plan, dtype=float) * (n_est / n_true)


def corollary1_bound(epsilon: float, xi: float, L_sum: float, r0: float) -> float:
    c = 3 * xi + math.sqrt(2 * xi)
    return (L_sum ** 2 * r0 ** 2 / epsilon ** 2) * max(1.0, c * c)


def corollary1_parameters(epsilon: float, xi: float, L_sum: float, r0: float) -> tuple[float, int]:
    """Constant step size and iteration count reaching accuracy ``epsilon``."""
    if not all(v > 0 for v in (epsilon, xi, L_sum, r0)):
        raise ValueError("epsilon, xi, L_sum and r0 must all be positive")
    c = 3 * xi + math.sqrt(2 * xi)
    mu = epsilon / (L_sum ** 2 * c)
    return mu, math.ceil(corollary1_bound(epsilon, xi, L_sum, r0))
