"""Numerical checks of the learner's theoretical guarantees.

Covers the gradient of the proximal envelope of a local cost, an empirical
estimate of the linear-regularity constant of the constraint polytope, and
the per-checkpoint bounds on suboptimality and infeasibility of the
step-weighted averaged plan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CheckFailed
from .fedlearn import FLTrace, local_prox_update
from .instance import Instance
from .network import feasibility_residual
from .projection import project_groups
from .utility import expected_cost, local_cost, subgradient_local_cost

FD_STEP = 1e-5
FD_TOL = 1e-4
NORM_SLACK = 1e-6


# ---------------------------------------------------------------- envelope


def prox_point(plan, x: int, mu: float, inst: Instance) -> np.ndarray:
    row = local_prox_update(plan, x, mu, inst.utility)
    out = np.array(plan, dtype=float, copy=True)
    out[x] = row
    return out


def envelope_value(plan, x: int, mu: float, inst: Instance) -> float:
    """``f(z; x) + |z - plan|^2 / (2 mu)`` with ``z`` the proximal point."""
    z = prox_point(plan, x, mu, inst)
    return local_cost(z, inst.utility, x) + float(np.sum((z - plan) ** 2)) / (2 * mu)


def envelope_gradient(plan, x: int, mu: float, inst: Instance) -> np.ndarray:
    return (np.asarray(plan, dtype=float) - prox_point(plan, x, mu, inst)) / mu


@dataclass
class EnvelopeReport:
    points: int
    max_fd_error: float
    max_norm_excess: float
    envelope_norms: np.ndarray
    gradient_norms: np.ndarray


def lemma1_check(inst: Instance, x: int, mu: float, trials: int, rng: np.random.Generator,
                 scale: float = 2.0, h: float = FD_STEP) -> EnvelopeReport:
    """Check the envelope gradient at ``trials`` random plans.

    At each point the closed-form gradient ``(plan - z) / mu`` is compared to
    central differences of the envelope, and its norm must not exceed the
    norm of the local cost gradient by more than ``1e-6``. Raises
    ``CheckFailed`` listing every violating point.
    """
    net = inst.network
    mask = net.mask
    violations = []
    fd_err, excess = 0.0, -np.inf
    env_norms, grad_norms = [], []
    for i in range(trials):
        plan = np.where(mask, rng.uniform(0.0, scale, net.shape), 0.0)
        g_env = envelope_gradient(plan, x, mu, inst)
        g_f = subgradient_local_cost(plan, inst.utility, x)

        fd = np.zeros(net.shape)
        for a, b in net.edges:
            e = np.zeros(net.shape)
            e[a, b] = h
            fd[a, b] = (envelope_value(plan + e, x, mu, inst) - envelope_value(plan - e, x, mu, inst)) / (2 * h)
        err = float(np.abs(fd - g_env).max())
        n_env, n_f = float(np.linalg.norm(g_env)), float(np.linalg.norm(g_f))
        env_norms.append(n_env)
        grad_norms.append(n_f)
        fd_err = max(fd_err, err)
        excess = max(excess, n_env - n_f)
        if err > FD_TOL or n_env > n_f + NORM_SLACK:
            violations.append({"index": i, "plan": plan, "fd_error": err,
                               "envelope_norm": n_env, "gradient_norm": n_f})
    report = EnvelopeReport(trials, fd_err, excess, np.array(env_norms), np.array(grad_norms))
    if violations:
        raise CheckFailed(f"{len(violations)} of {trials} points violate the envelope checks", violations)
    return report


# ---------------------------------------------------------- regularity


def _block_distances(plan, inst: Instance) -> np.ndarray:
    """Distance from ``plan`` to each single-row and single-column constraint set.

    Each set is one sum constraint together with nonnegativity of the edges
    it touches; coordinates outside the block are unconstrained.
    """
    net = inst.network
    mask = net.mask
    b = inst.bounds
    plan = np.where(mask, plan, 0.0)
    rows = project_groups(plan, mask.astype(float), b.p_lo, b.p_hi)
    d_rows = np.sqrt(((plan - rows) ** 2).sum(axis=1))
    cw = (mask * inst.dist.counts[:, None]).T
    cols = project_groups(plan.T, cw, b.q_lo, b.q_hi)
    d_cols = np.sqrt(((plan.T - cols) ** 2).sum(axis=1))
    return np.concatenate([d_rows, d_cols])


def estimate_xi(inst: Instance, samples: int, rng: np.random.Generator,
                scale: float | None = None, points=None) -> float:
    """Largest observed ``dist^2(plan, X) / mean_blocks dist^2(plan, block)``.

    Points are drawn uniformly from a box around the feasible region (or
    taken from ``points``); the mean runs uniformly over all row and column
    blocks. Points where both distances vanish are skipped. The result is a
    lower bound on any valid regularity constant; 1.0 if no point was usable.
    """
    from .projection import project_feasible_plan

    if samples < 1 and points is None:
        raise ValueError("samples must be >= 1")
    net = inst.network
    if points is None:
        if scale is None:
            scale = 2.0 * float(np.max(inst.bounds.p_hi))
        points = [np.where(net.mask, rng.uniform(-0.5 * scale, scale, net.shape), 0.0)
                  for _ in range(samples)]
    best = 0.0
    for plan in points:
        proj, _ = project_feasible_plan(plan, net, inst.bounds, inst.dist.counts, tol=1e-12)
        d_x = float(np.sum((plan - proj) ** 2))
        d_blocks = float(np.mean(_block_distances(plan, inst) ** 2))
        if d_blocks <= 1e-24:
            continue
        best = max(best, d_x / d_blocks)
    return best if best > 0 else 1.0


# ------------------------------------------------------------- bounds


@dataclass(frozen=True)
class TheoryParams:
    xi: float
    L_sum: float
    r0: float
    F_star: float  # optimum of the per-node cost, i.e. minus the best objective over N


def r_k(k: int, mu1: float, mu2: float, p: TheoryParams) -> float:
    return mu1 * p.xi * (p.r0 ** 2 + k * p.L_sum * mu2)


def gap_upper_bound(k, mu1, mu2, p: TheoryParams) -> float:
    return r_k(k, mu1, mu2, p) / (2 * k * p.xi * mu2)


def gap_upper_bound_mu1(k, mu1, mu2, p: TheoryParams) -> float:
    """Variant of the upper bound with the step-size sum in the denominator."""
    return r_k(k, mu1, mu2, p) / (2 * k * p.xi * mu1)


def gap_lower_bound(k, mu1, mu2, p: TheoryParams) -> float:
    return -3 * p.xi * p.L_sum * mu1 - p.L_sum * math.sqrt(r_k(k, mu1, mu2, p) / (k * mu1))


def feasibility_bound(k, mu1, mu2, p: TheoryParams) -> float:
    return 2 * p.xi ** 2 * p.L_sum ** 2 * (3 * mu1) ** 2 + 2 * r_k(k, mu1, mu2, p) / (k * mu1)


@dataclass
class BoundReport:
    k: int
    mu1: float
    mu2: float
    R_k: float
    upper: float
    upper_mu1: float
    lower: float
    feasibility: float
    gap: float  # mean of F(avg plan) - F_star, per-node cost
    gap_total: float  # same gap times N (population-weighted objective)
    dist2: float  # mean squared distance of the averaged plan to the feasible set
    gap_std: float
    violates_upper: bool
    violates_upper_mu1: bool
    violates_lower: bool
    violates_feasibility: bool

    @property
    def any_violation(self) -> bool:
        return self.violates_upper or self.violates_lower or self.violates_feasibility


def theorem1_report(traces: Sequence[FLTrace], params: TheoryParams, inst: Instance,
                    checkpoints: Sequence[int] | None = None) -> list[BoundReport]:
    """Bounds and measured ensemble means at each checkpoint ``k``.

    All traces must come from the same instance and step schedule. The gap
    uses the per-node cost ``F = -objective / N``; ``gap_total`` restates it
    on the population scale. Violations are flagged, never raised.
    """
    if not traces:
        raise ValueError("empty ensemble")
    n = min(len(t) for t in traces)
    mus = np.asarray(traces[0].mu[:n])
    for t in traces[1:]:
        if not np.allclose(t.mu[:n], mus, rtol=0, atol=0):
            raise ValueError("ensemble members use different step sizes")
    if checkpoints is None:
        checkpoints = sorted({max(1, int(round(n * f))) for f in (0.1, 0.25, 0.5, 0.75, 1.0)})
    net = inst.network
    N = inst.dist.population
    out = []
    for k in checkpoints:
        if not 1 <= k <= n:
            raise ValueError(f"checkpoint {k} outside 1..{n}")
        mu1 = float(traces[0].mu1[k - 1])
        mu2 = float(traces[0].mu2[k - 1])
        gaps, dists = [], []
        for t in traces:
            avg = net.plan_from_edges(t.avg_plan[k - 1])
            gaps.append(expected_cost(avg, inst.utility, inst.dist.prob) - params.F_star)
            dists.append(feasibility_residual(avg, net, inst.bounds, inst.dist) ** 2)
        gap, dist2 = float(np.mean(gaps)), float(np.mean(dists))
        up = gap_upper_bound(k, mu1, mu2, params)
        up1 = gap_upper_bound_mu1(k, mu1, mu2, params)
        lo = gap_lower_bound(k, mu1, mu2, params)
        fb = feasibility_bound(k, mu1, mu2, params)
        out.append(BoundReport(
            k=k, mu1=mu1, mu2=mu2, R_k=r_k(k, mu1, mu2, params),
            upper=up, upper_mu1=up1, lower=lo, feasibility=fb,
            gap=gap, gap_total=gap * N, dist2=dist2, gap_std=float(np.std(gaps)),
            violates_upper=gap > up, violates_upper_mu1=gap > up1,
            violates_lower=gap < lo, violates_feasibility=dist2 > fb,
        ))
    return out
