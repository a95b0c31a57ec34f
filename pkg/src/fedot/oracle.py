"""Centralized reference solvers used to check the distributed ones.

None of these routines share code with the ADMM or federated iterations
beyond the constraint data; ``brute_force_solve`` and
``active_set_projection`` do not call the projection engine at all.
"""

from __future__ import annotations

import itertools
from typing import NamedTuple

import numpy as np

from .errors import TooLarge
from .instance import Instance
from .projection import constraint_violation, project_feasible_plan
from .utility import total_objective

MAX_BRUTE_FORCE_EDGES = 4


class OracleResult(NamedTuple):
    plan: np.ndarray
    objective: float
    gradient_mapping_norm: float = float("nan")
    iterations: int = 0


def _edge_arrays(inst: Instance):
    net = inst.network
    rows, cols = (np.array(net.edges).T if net.edges else (np.array([], int), np.array([], int)))
    counts = inst.dist.counts
    with np.errstate(divide="ignore"):
        ub = np.minimum(inst.bounds.p_hi[rows], inst.bounds.q_hi[cols] / counts[rows])
    return rows, cols, counts, ub


def _objective_batch(inst: Instance, pts: np.ndarray) -> np.ndarray:
    """Objective of many plans given as edge vectors (one per row of ``pts``)."""
    rows, cols, counts, _ = _edge_arrays(inst)
    full = np.zeros((pts.shape[0],) + inst.network.shape)
    full[:, rows, cols] = pts
    u = inst.utility
    val = u.target.value(full) + u.source.value(full)
    return (val[:, rows, cols] * counts[rows]).sum(axis=1)


def _feasible_batch(inst: Instance, pts: np.ndarray, slack: float = 1e-12) -> np.ndarray:
    rows, cols, counts, _ = _edge_arrays(inst)
    b = inst.bounds
    ok = np.ones(pts.shape[0], dtype=bool)
    for x in range(inst.network.n_types):
        s = pts[:, rows == x].sum(axis=1)
        ok &= (s >= b.p_lo[x] - slack * (1 + b.p_lo[x])) & (s <= b.p_hi[x] + slack * (1 + b.p_hi[x]))
    for y in range(inst.network.n_sources):
        sel = cols == y
        s = (pts[:, sel] * counts[rows[sel]]).sum(axis=1)
        ok &= (s >= b.q_lo[y] - slack * (1 + b.q_lo[y])) & (s <= b.q_hi[y] + slack * (1 + b.q_hi[y]))
    return ok


def brute_force_solve(inst: Instance, grid_step: float = 1e-8, points_per_dim: int | None = None,
                      shrink: float = 4.0) -> tuple[np.ndarray, float]:
    """Grid search for the objective maximizer on instances with at most 4 edges.

    Unless ``points_per_dim`` forces the grid, exact enumeration is used when
    possible: linear utilities attain their maximum at a vertex, so every
    vertex is tried; smooth utilities are maximized on every face of the
    polytope by Newton's method and the best feasible face optimum wins. A
    grid cannot land on a vertex, and coordinate searches stall along thin
    edges, so the grid is the fallback only.

    On the grid path each edge ranges over ``[0, min(p_hi, q_hi / count)]``. A uniform grid
    over that box is filtered for feasibility and its best point becomes the
    centre of a local grid of the same spacing. The centre moves to the best
    feasible local point while that improves the objective; otherwise the
    spacing shrinks. The search ends once the spacing drops below
    ``grid_step``.
    """
    net = inst.network
    n = net.n_edges
    if n > MAX_BRUTE_FORCE_EDGES:
        raise TooLarge(f"brute force supports at most {MAX_BRUTE_FORCE_EDGES} edges, got {n}")
    if not grid_step > 0:
        raise ValueError("grid_step must be positive")
    if n == 0:
        return net.zero_plan(), 0.0
    if points_per_dim is None:
        if inst.utility.is_linear:
            return _vertex_enumeration(inst)
        if inst.utility.edge_second_derivative(np.ones(net.shape)) is not None:
            return _face_enumeration(inst)
    _, _, _, ub = _edge_arrays(inst)
    ub = np.where(np.isfinite(ub), ub, 0.0)
    if points_per_dim is None:
        points_per_dim = {1: 2001, 2: 201, 3: 41, 4: 21}[n]
    g = points_per_dim

    def best_on(axes):
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        pts = pts[_feasible_batch(inst, pts)]
        if not len(pts):
            return None, -np.inf
        vals = _objective_batch(inst, pts)
        i = int(np.argmax(vals))
        return pts[i], float(vals[i])

    centre, best = best_on([np.linspace(0.0, u, g) for u in ub])
    if centre is None:
        raise ValueError("no feasible grid point; the instance may be infeasible or too thin")
    h = ub / (g - 1)
    offsets = np.arange(-(g // 2), g // 2 + 1)
    while h.max() > grid_step:
        axes = [np.unique(np.clip(centre[i] + h[i] * offsets, 0.0, ub[i])) for i in range(n)]
        pt, val = best_on(axes)
        if val > best + 1e-15 * max(1.0, abs(best)):
            centre, best = pt, val
        else:
            h = h / shrink
    return net.plan_from_edges(centre), best


def _all_constraints(inst: Instance):
    """Stack every constraint as ``lo <= A @ e <= hi`` over edge vectors ``e``."""
    net = inst.network
    rows, cols = np.array(net.edges).T
    n = len(rows)
    a_row = (rows[None, :] == np.arange(net.n_types)[:, None]).astype(float)
    a_col = np.where(cols[None, :] == np.arange(net.n_sources)[:, None], inst.dist.counts[rows], 0.0)
    b = inst.bounds
    A = np.vstack([a_row, a_col, np.eye(n)])
    lo = np.concatenate([b.p_lo, b.q_lo, np.zeros(n)])
    hi = np.concatenate([b.p_hi, b.q_hi, np.full(n, np.inf)])
    return A, lo, hi


def _face_enumeration(inst: Instance, newton_iters: int = 100) -> tuple[np.ndarray, float]:
    """Best face optimum over all independent sets of tight constraints."""
    net = inst.network
    rows, cols, counts, ub = _edge_arrays(inst)
    w = counts[rows]
    A, lo, hi = _all_constraints(inst)
    n = len(rows)
    centre = 0.5 * np.where(np.isfinite(ub), ub, 1.0)

    def f(e):
        return float(_objective_batch(inst, e[None, :])[0])

    def grad(e):
        return inst.utility.edge_derivative(net.plan_from_edges(e))[rows, cols] * w

    def hess(e):
        return inst.utility.edge_second_derivative(net.plan_from_edges(e))[rows, cols] * w

    states = [[None, "lo"] + (["hi"] if np.isfinite(hi[i]) and hi[i] != lo[i] else [])
              for i in range(len(A))]
    best_pt, best_val = None, -np.inf
    for combo in itertools.product(*states):
        idx = [i for i, c in enumerate(combo) if c]
        if len(idx) > n:
            continue
        if idx:
            Aa = A[idx]
            if np.linalg.matrix_rank(Aa) < len(idx):
                continue
            rhs = np.array([lo[i] if combo[i] == "lo" else hi[i] for i in idx])
            e = centre - np.linalg.pinv(Aa) @ (Aa @ centre - rhs)
            _, sv, vt = np.linalg.svd(Aa)
            Z = vt[len(idx):].T
        else:
            e = centre.copy()
            Z = np.eye(n)
        with np.errstate(all="ignore"):
            val = f(e)
        if not np.isfinite(val):
            continue
        if Z.shape[1]:
            ok = False
            for _ in range(newton_iters):
                with np.errstate(all="ignore"):
                    g = Z.T @ grad(e)
                    H = Z.T @ (hess(e)[:, None] * Z)
                try:
                    step = -np.linalg.solve(H, g)
                except np.linalg.LinAlgError:
                    break
                if not np.all(np.isfinite(step)):
                    break
                dec = float(g @ step)
                # dec / 2 estimates the remaining objective gain on this face
                if dec <= 1e-15 * max(1.0, abs(val)):
                    ok = True
                    break
                t = 1.0
                while t > 1e-12:
                    cand = e + t * (Z @ step)
                    with np.errstate(all="ignore"):
                        cv = f(cand)
                    if np.isfinite(cv) and cv >= val + 0.25 * t * dec:
                        break
                    t *= 0.5
                else:
                    # no representable ascent left: accept if the estimated gain is rounding-level
                    ok = dec <= 1e-12 * max(1.0, abs(val))
                    break
                e, val = cand, cv
            if not ok or not np.all(np.isfinite(e)):
                continue
        if np.all(A @ e >= lo - 1e-9 * (1 + np.abs(lo))) and np.all(A @ e <= hi + 1e-9 * (1 + np.abs(hi))):
            e = np.maximum(e, 0.0)
            val = f(e)
            if val > best_val:
                best_pt, best_val = e, val
    if best_pt is None:
        raise ValueError("no feasible face optimum found")
    return net.plan_from_edges(best_pt), best_val


def _vertex_enumeration(inst: Instance) -> tuple[np.ndarray, float]:
    """Best vertex of the plan polytope: all ``n``-subsets of tight constraints."""
    a_ub, b_ub, rows, _ = _constraint_matrix(inst)
    n = len(rows)
    A = np.vstack([a_ub, -np.eye(n)])
    b = np.concatenate([b_ub, np.zeros(n)])
    keep = np.isfinite(b)
    A, b = A[keep], b[keep]
    best_pt, best_val = None, -np.inf
    for idx in itertools.combinations(range(len(A)), n):
        sub = A[list(idx)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        pt = np.linalg.solve(sub, b[list(idx)])
        if np.all(A @ pt <= b + 1e-9 * (1 + np.abs(b))):
            pt = np.maximum(pt, 0.0)
            val = float(_objective_batch(inst, pt[None, :])[0])
            if val > best_val:
                best_pt, best_val = pt, val
    if best_pt is None:
        raise ValueError("the plan polytope has no vertex; the instance may be infeasible")
    return inst.network.plan_from_edges(best_pt), best_val


def projected_gradient_solve(inst: Instance, steps: int = 20_000, rate: float = 0.1,
                             start=None, tol: float = 1e-13) -> OracleResult:
    """Projected gradient ascent on the population objective divided by ``N``.

    The ascent direction is ``P(x) * (t'_xy + s'_xy)``. Every iterate is
    projected with Dykstra's algorithm; the best feasible iterate is
    returned together with the final gradient-mapping norm.
    """
    net = inst.network
    weights = inst.dist.counts
    prob = inst.dist.prob[:, None]
    plan = net.zero_plan() if start is None else np.asarray(start, dtype=float)
    plan, _ = project_feasible_plan(plan, net, inst.bounds, weights)
    best_plan, best_val = plan, total_objective(plan, inst.utility, inst.dist)
    gmap = np.inf
    k = 0
    for k in range(1, steps + 1):
        grad = prob * inst.utility.edge_derivative(plan)
        new, _ = project_feasible_plan(plan + rate * grad, net, inst.bounds, weights)
        gmap = float(np.linalg.norm(new - plan)) / rate
        plan = new
        if constraint_violation(plan, net, inst.bounds, weights) <= 1e-8:
            val = total_objective(plan, inst.utility, inst.dist)
            if val > best_val:
                best_plan, best_val = plan, val
        if gmap * rate <= tol:
            break
    return OracleResult(best_plan, best_val, gmap, k)


def linear_program_solve(inst: Instance) -> OracleResult:
    """Exact optimum for linear utilities via an LP solver."""
    from scipy.optimize import linprog

    if not inst.utility.is_linear:
        raise ValueError("linear_program_solve needs linear utilities")
    a_ub, b_ub, rows, cols = _constraint_matrix(inst)
    c = (inst.utility.target.coef + inst.utility.source.coef)[rows, cols] * inst.dist.counts[rows]
    res = linprog(-c, A_ub=a_ub, b_ub=b_ub, bounds=[(0, None)] * len(rows), method="highs")
    if res.status != 0:
        raise ValueError(f"LP oracle failed: {res.message}")
    plan = inst.network.plan_from_edges(res.x)
    return OracleResult(plan, float(-res.fun), 0.0, int(res.nit))


def _constraint_matrix(inst: Instance):
    net = inst.network
    rows, cols = np.array(net.edges).T
    n = len(rows)
    counts = inst.dist.counts
    a_row = np.zeros((net.n_types, n))
    a_row[rows, np.arange(n)] = 1.0
    a_col = np.zeros((net.n_sources, n))
    a_col[cols, np.arange(n)] = counts[rows]
    b = inst.bounds
    a_ub = np.vstack([a_row, -a_row, a_col, -a_col])
    b_ub = np.concatenate([b.p_hi, -b.p_lo, b.q_hi, -b.q_lo])
    return a_ub, b_ub, rows, cols


def nearest_optimal_plan(plan, inst: Instance, optimum: float, rtol: float = 1e-9) -> np.ndarray:
    """Closest plan (Euclidean) among feasible plans whose objective reaches ``optimum``.

    Needed when the optimum is not unique: per-type comparisons are made
    against the member of the optimal set nearest to the plan under test.
    """
    from scipy.optimize import minimize

    net = inst.network
    a_ub, b_ub, rows, cols = _constraint_matrix(inst)
    v = np.asarray(plan, dtype=float)[rows, cols]
    level = optimum - rtol * max(1.0, abs(optimum))

    def obj_edges(e):
        return total_objective(net.plan_from_edges(e), inst.utility, inst.dist)

    def obj_grad(e):
        g = inst.utility.edge_derivative(net.plan_from_edges(e)) * inst.dist.counts[:, None]
        return g[rows, cols]

    cons = [
        {"type": "ineq", "fun": lambda e: b_ub - a_ub @ e, "jac": lambda e: -a_ub},
        {"type": "ineq", "fun": lambda e: np.array([obj_edges(e) - level]),
         "jac": lambda e: obj_grad(e)[None, :]},
    ]
    start = linear_program_solve(inst).plan[rows, cols] if inst.utility.is_linear else v
    res = minimize(lambda e: 0.5 * np.sum((e - v) ** 2), start, jac=lambda e: e - v,
                   bounds=[(0, None)] * len(rows), constraints=cons, method="SLSQP",
                   options={"ftol": 1e-14, "maxiter": 500})
    return net.plan_from_edges(np.maximum(res.x, 0.0))


def active_set_projection(plan, inst_or_network, bounds=None, weights=None) -> np.ndarray:
    """Exact projection onto the plan polytope by active-set enumeration.

    Every constraint is tried as inactive, tight at its lower bound or tight
    at its upper bound; each combination gives an equality-constrained
    least-squares point. The nearest feasible candidate is the projection.
    Cost grows like ``3^(types + sources) * 2^edges``; meant for tiny cases.
    """
    if isinstance(inst_or_network, Instance):
        net, bounds, weights = inst_or_network.network, inst_or_network.bounds, inst_or_network.dist.counts
    else:
        net = inst_or_network
    rows, cols = np.array(net.edges).T
    n = len(rows)
    weights = np.asarray(weights, dtype=float)
    A, lo, hi = [], [], []
    for x in range(net.n_types):
        A.append((rows == x).astype(float))
        lo.append(bounds.p_lo[x])
        hi.append(bounds.p_hi[x])
    for y in range(net.n_sources):
        A.append(np.where(cols == y, weights[rows], 0.0))
        lo.append(bounds.q_lo[y])
        hi.append(bounds.q_hi[y])
    for e in range(n):
        A.append(np.eye(n)[e])
        lo.append(0.0)
        hi.append(np.inf)
    A, lo, hi = np.array(A), np.array(lo), np.array(hi)
    v = np.asarray(plan, dtype=float)[rows, cols]

    states = []
    for i in range(len(A)):
        s = [None, "lo"]
        if np.isfinite(hi[i]) and hi[i] != lo[i]:
            s.append("hi")
        states.append(s)
    best, best_d = None, np.inf
    for combo in itertools.product(*states):
        idx = [i for i, c in enumerate(combo) if c]
        u = v
        if idx:
            Aa = A[idx]
            rhs = np.array([lo[i] if combo[i] == "lo" else hi[i] for i in idx])
            u = v - np.linalg.pinv(Aa) @ (Aa @ v - rhs)
            if np.abs(Aa @ u - rhs).max() > 1e-9 * (1 + np.abs(rhs).max()):
                continue
        Au = A @ u
        scale = 1e-10 * (1 + np.abs(Au))
        if np.all(Au >= lo - scale) and np.all(Au <= hi + scale):
            d = float(np.linalg.norm(u - v))
            if d < best_d:
                best, best_d = u, d
    if best is None:
        raise ValueError("constraint set is empty")
    return net.plan_from_edges(best)
