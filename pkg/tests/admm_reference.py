"""Unsimplified two-dual ADMM iteration, used only to cross-check the solver.

Target copies carry their own duals ``alpha_t`` and source copies ``alpha_s``;
the consensus plan solves its own quadratic and both duals move by linear
residuals. Rows and columns are projected one at a time through
``project_box_sum`` rather than the solver's batched routine.
"""

from dataclasses import dataclass

import numpy as np

from fedot.projection import BoxSumSet, project_box_sum


@dataclass
class TwoDualState:
    plan_t: np.ndarray
    plan_s: np.ndarray
    plan: np.ndarray
    alpha_t: np.ndarray
    alpha_s: np.ndarray


def zeros(shape):
    z = np.zeros(shape)
    return TwoDualState(z, z.copy(), z.copy(), z.copy(), z.copy())


def step(st: TwoDualState, inst, eta: float) -> TwoDualState:
    net = inst.network
    prob = inst.dist.prob
    counts = inst.dist.counts
    delta = inst.utility.target.coef
    gamma = inst.utility.source.coef
    b = inst.bounds

    plan_t = np.zeros(net.shape)
    for x in range(net.n_types):
        ys = list(net.sources_of[x])
        free = st.plan[x, ys] + (prob[x] * delta[x, ys] - st.alpha_t[x, ys]) / eta
        box = BoxSumSet(np.ones(len(ys)), b.p_lo[x], b.p_hi[x])
        plan_t[x, ys] = project_box_sum(free, box)

    plan_s = np.zeros(net.shape)
    for y in range(net.n_sources):
        xs = list(net.types_of[y])
        free = st.plan[xs, y] + (prob[xs] * gamma[xs, y] + st.alpha_s[xs, y]) / eta
        box = BoxSumSet(counts[xs], b.q_lo[y], b.q_hi[y])
        plan_s[xs, y] = project_box_sum(free, box)

    # argmin of -a_t p + a_s p + eta/2 (p_t - p)^2 + eta/2 (p - p_s)^2
    plan = 0.5 * (plan_t + plan_s) + (st.alpha_t - st.alpha_s) / (2 * eta)
    alpha_t = st.alpha_t + eta * (plan_t - plan)
    alpha_s = st.alpha_s + eta * (plan - plan_s)
    return TwoDualState(plan_t, plan_s, plan, alpha_t, alpha_s)


# ---- exact rational version


def exact_box_sum(v, w, lo, hi):
    """Projection onto {u >= 0, lo <= sum w u <= hi} in rational arithmetic."""
    from fractions import Fraction

    zero = Fraction(0)  # an int 0 would turn later halvings into floats
    u = [max(vi, zero) for vi in v]
    s = sum(wi * ui for wi, ui in zip(w, u))
    if lo <= s <= hi:
        return u
    t = hi if s > hi else lo
    idx = sorted((i for i in range(len(v)) if w[i] > 0), key=lambda i: v[i] / w[i], reverse=True)
    a = b = 0
    for j, i in enumerate(idx):
        a += w[i] * v[i]
        b += w[i] * w[i]
        lam = (a - t) / b
        nxt = v[idx[j + 1]] / w[idx[j + 1]] if j + 1 < len(idx) else None
        if lam <= v[i] / w[i] and (nxt is None or lam >= nxt):
            break
    return [max(v[i] - lam * w[i], zero) if w[i] > 0 else max(v[i], zero) for i in range(len(v))]


def exact_run(inst, eta, iterations):
    """Two-dual iteration on Fractions; yields (plan, alpha_t, alpha_s) as nested lists."""
    from fractions import Fraction as F

    net = inst.network
    nt, ns = net.shape
    prob = [F(p) for p in inst.dist.prob]
    counts = [F(c) for c in inst.dist.counts]
    delta = [[F(v) for v in r] for r in inst.utility.target.coef]
    gamma = [[F(v) for v in r] for r in inst.utility.source.coef]
    p_lo, p_hi = [F(v) for v in inst.bounds.p_lo], [F(v) for v in inst.bounds.p_hi]
    q_lo, q_hi = [F(v) for v in inst.bounds.q_lo], [F(v) for v in inst.bounds.q_hi]
    eta = F(eta)
    zero = [[F(0)] * ns for _ in range(nt)]
    plan = [r[:] for r in zero]
    at = [r[:] for r in zero]
    as_ = [r[:] for r in zero]
    for _ in range(iterations):
        pt = [r[:] for r in zero]
        for x in range(nt):
            ys = list(net.sources_of[x])
            free = [plan[x][y] + (prob[x] * delta[x][y] - at[x][y]) / eta for y in ys]
            for y, val in zip(ys, exact_box_sum(free, [F(1)] * len(ys), p_lo[x], p_hi[x])):
                pt[x][y] = val
        ps = [r[:] for r in zero]
        for y in range(ns):
            xs = list(net.types_of[y])
            free = [plan[x][y] + (prob[x] * gamma[x][y] + as_[x][y]) / eta for x in xs]
            for x, val in zip(xs, exact_box_sum(free, [counts[x] for x in xs], q_lo[y], q_hi[y])):
                ps[x][y] = val
        plan = [[(pt[x][y] + ps[x][y]) / 2 + (at[x][y] - as_[x][y]) / (2 * eta) for y in range(ns)]
                for x in range(nt)]
        at = [[at[x][y] + eta * (pt[x][y] - plan[x][y]) for y in range(ns)] for x in range(nt)]
        as_ = [[as_[x][y] + eta * (plan[x][y] - ps[x][y]) for y in range(ns)] for x in range(nt)]
        assert all(isinstance(v, F) for m in (plan, at, as_) for r in m for v in r)
        yield plan, at, as_
