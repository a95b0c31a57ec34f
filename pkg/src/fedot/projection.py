"""Euclidean projections onto weighted box-sum sets and onto the plan polytope.

A box-sum set is ``{v >= 0 : lo <= sum_i w_i v_i <= hi}`` with ``w >= 0``.
Its projection is ``max(0, v - lam * w)`` for a scalar multiplier ``lam``;
``lam`` is located exactly by scanning the sorted breakpoints ``v_i / w_i``.
The plan polytope is the intersection of one such set per type (rows) and
one per source (columns), handled with Dykstra's algorithm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DidNotConverge, EmptyFeasibleSet, Infeasible, RowMismatch
from .network import Bounds, Network

DYKSTRA_TOL = 1e-9
DYKSTRA_MAX_SWEEPS = 10_000


@dataclass(frozen=True)
class BoxSumSet:
    """``{v : v >= 0, lo <= sum(weights * v) <= hi}``."""

    weights: np.ndarray
    lo: float = 0.0
    hi: float = np.inf

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0):
            raise ValueError("box-sum weights must be nonnegative")
        object.__setattr__(self, "weights", w)
        if self.lo > self.hi:
            raise Infeasible(f"empty box-sum set: lo={self.lo} > hi={self.hi}")

    def contains(self, v, tol=0.0) -> bool:
        v = np.asarray(v, dtype=float)
        s = float(self.weights @ v)
        return bool(np.all(v >= -tol) and self.lo - tol <= s <= self.hi + tol)


@dataclass(frozen=True)
class ProjectionReport:
    iterations: int
    violation: float
    converged: bool


def project_groups(V, W, lo, hi):
    """Project every row of ``V`` onto its own box-sum set.

    Row ``i`` is projected onto ``{u >= 0 : lo[i] <= W[i] @ u <= hi[i]}``.
    Coordinates with zero weight are only clipped at zero.
    """
    V = np.asarray(V, dtype=float)
    W = np.asarray(W, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), V.shape[:1])
    hi = np.broadcast_to(np.asarray(hi, dtype=float), V.shape[:1])
    if np.any(lo > hi):
        raise Infeasible("box-sum set with lo > hi")

    U = np.maximum(V, 0.0)
    s = np.einsum("ij,ij->i", W, U)
    over = s > hi
    under = s < lo
    need = over | under
    if not need.any():
        return U

    rows = np.flatnonzero(need)
    v = V[rows]
    w = W[rows]
    target = np.where(over[rows], hi[rows], lo[rows])
    pos = w > 0
    if np.any(~pos.any(axis=1)):
        raise Infeasible("lower sum bound is positive but no coordinate carries weight")

    # active set for a multiplier lam is {i : v_i / w_i > lam}; walk breakpoints downward
    with np.errstate(divide="ignore", invalid="ignore"):
        b = np.where(pos, v / np.where(pos, w, 1.0), -np.inf)
    order = np.argsort(-b, axis=1, kind="stable")
    bs = np.take_along_axis(b, order, axis=1)
    ws = np.take_along_axis(w, order, axis=1)
    vs = np.take_along_axis(v, order, axis=1)
    A = np.cumsum(ws * vs, axis=1)
    B = np.cumsum(ws * ws, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = (A - target[:, None]) / B
    nxt = np.concatenate([bs[:, 1:], np.full((len(rows), 1), -np.inf)], axis=1)
    ok = (B > 0) & (lam >= nxt)
    j = np.argmax(ok, axis=1)
    lam_row = lam[np.arange(len(rows)), j]

    U[rows] = np.where(pos, np.maximum(v - lam_row[:, None] * w, 0.0), np.maximum(v, 0.0))
    return U


def project_box_sum(v, box: BoxSumSet) -> np.ndarray:
    """Euclidean projection of a vector onto a :class:`BoxSumSet`."""
    v = np.asarray(v, dtype=float)
    if v.shape != box.weights.shape:
        raise ValueError(f"vector of length {v.size} for a set of dimension {box.weights.size}")
    return project_groups(v[None, :], box.weights[None, :], [box.lo], [box.hi])[0]


def _row_weights(network: Network) -> np.ndarray:
    return network.mask.astype(float)


def _column_weights(network: Network, weights) -> np.ndarray:
    return (network.mask * np.asarray(weights, dtype=float)[:, None]).T.copy()


def constraint_violation(plan, network: Network, bounds: Bounds, weights) -> float:
    """Largest distance from ``plan`` to any single violated constraint half-space."""
    plan = np.asarray(plan, dtype=float)
    rw = _row_weights(network)
    cw = _column_weights(network, weights)
    worst = max(0.0, float(-plan[network.mask].min(initial=0.0)))

    rs = plan.sum(axis=1)
    rn = np.sqrt((rw * rw).sum(axis=1))
    rv = np.maximum(np.maximum(rs - bounds.p_hi, bounds.p_lo - rs), 0.0) / rn
    worst = max(worst, float(rv.max(initial=0.0)))

    cs = np.einsum("ji,ij->j", cw, plan)
    cn = np.sqrt((cw * cw).sum(axis=1))
    cviol = np.maximum(np.maximum(cs - bounds.q_hi, bounds.q_lo - cs), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        cv = np.where(cn > 0, cviol / np.where(cn > 0, cn, 1.0), np.where(cviol > 0, np.inf, 0.0))
    return max(worst, float(cv.max(initial=0.0)))


def project_feasible_plan(plan, network: Network, bounds: Bounds, weights,
                          tol: float = DYKSTRA_TOL, max_sweeps: int = DYKSTRA_MAX_SWEEPS,
                          ) -> tuple[np.ndarray, ProjectionReport]:
    """Project a plan onto the polytope of per-type and per-source sum bounds.

    ``weights[x]`` multiplies type ``x`` in every source constraint (the
    population count of the type, true or estimated). Dykstra's algorithm
    alternates between the row sets and the column sets; both blocks are
    products of box-sum sets and are projected in one vectorized call.
    Iteration stops once the iterate violates no constraint by more than
    ``tol``, sits within ``tol`` of the row-block iterate and moved by at
    most ``tol`` during the last sweep.
    """
    plan = np.where(network.mask, np.asarray(plan, dtype=float), 0.0)
    rw = _row_weights(network)
    cw = _column_weights(network, weights)

    if constraint_violation(plan, network, bounds, weights) == 0.0:
        return plan, ProjectionReport(iterations=1, violation=0.0, converged=True)

    x = plan
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    stalled = 0
    viol = np.inf
    for sweep in range(1, max_sweeps + 1):
        y = project_groups(x + p, rw, bounds.p_lo, bounds.p_hi)
        p = x + p - y
        z = y + q
        x_new = project_groups(z.T, cw, bounds.q_lo, bounds.q_hi).T
        q = z - x_new
        change = float(np.abs(x_new - x).max())
        gap = float(np.abs(x_new - y).max())
        x = x_new
        viol = constraint_violation(x, network, bounds, weights)
        if viol <= tol and gap <= tol and change <= tol:
            return x, ProjectionReport(iterations=sweep, violation=viol, converged=True)
        # a stationary iterate separated from the row block hints at an empty intersection
        if gap > tol and change <= 1e-14 * (1.0 + float(np.abs(x).max())):
            stalled += 1
        else:
            stalled = 0
        if stalled >= 50:
            stalled = -10 * max_sweeps  # confirm once only
            if not _is_feasible(network, bounds, weights):
                report = ProjectionReport(iterations=sweep, violation=max(viol, gap), converged=False)
                raise EmptyFeasibleSet(
                    f"plan constraints are jointly infeasible (gap stalls at {gap:.3g})", report
                )

    report = ProjectionReport(iterations=max_sweeps, violation=viol, converged=False)
    raise DidNotConverge(
        f"Dykstra projection did not converge in {max_sweeps} sweeps (violation {viol:.3g})",
        report,
    )


def _is_feasible(network: Network, bounds: Bounds, weights) -> bool:
    """LP feasibility check of the plan polytope (used only to confirm a stall)."""
    from scipy.optimize import linprog

    n = network.n_edges
    rows, cols = np.array(network.edges).T
    a_row = np.zeros((network.n_types, n))
    a_row[rows, np.arange(n)] = 1.0
    a_col = np.zeros((network.n_sources, n))
    a_col[cols, np.arange(n)] = np.asarray(weights, dtype=float)[rows]
    a_ub = np.vstack([a_row, -a_row, a_col, -a_col])
    b_ub = np.concatenate([bounds.p_hi, -bounds.p_lo, bounds.q_hi, -bounds.q_lo])
    res = linprog(np.zeros(n), A_ub=a_ub, b_ub=b_ub, bounds=[(0, None)] * n, method="highs")
    return res.status == 0


def merge_local(plan, local_rows, x: int, network: Network) -> np.ndarray:
    """Return a copy of ``plan`` with the row of type ``x`` replaced."""
    local_rows = np.asarray(local_rows, dtype=float)
    if local_rows.shape != (network.n_sources,):
        raise RowMismatch(f"local row has shape {local_rows.shape}, expected ({network.n_sources},)")
    if np.any(local_rows[~network.mask[x]] != 0.0):
        raise RowMismatch(f"local row for type {x} puts mass outside its edges")
    out = np.array(plan, dtype=float, copy=True)
    out[x] = local_rows
    return out
