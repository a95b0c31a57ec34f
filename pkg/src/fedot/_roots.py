"""Vectorized scalar solvers for separable smooth subproblems."""

from __future__ import annotations

import numpy as np

FOC_TOL = 1e-12


def increasing_root(h, dh, lo, guess, tol=FOC_TOL, max_iter=200):
    """Elementwise root of increasing ``h`` on ``[lo, inf)``.

    Entries with ``h(lo) >= 0`` return ``lo``. Newton steps are taken with
    ``dh`` when available and fall back to bisection whenever a step leaves
    the current bracket.
    """
    lo = np.array(lo, dtype=float)
    a = lo.copy()
    with np.errstate(all="ignore"):
        fa = h(a)
    done = fa >= 0
    b = np.maximum(np.asarray(guess, dtype=float), a + 1.0)
    b = np.where(done, a, b)
    with np.errstate(all="ignore"):
        fb = h(b)
    for _ in range(200):
        short = ~done & ~(fb >= 0)
        if not short.any():
            break
        b = np.where(short, a + 2.0 * (b - a), b)
        with np.errstate(all="ignore"):
            fb = h(b)
    else:
        raise ArithmeticError("could not bracket the root of an increasing function")

    x = np.where(done, a, 0.5 * (a + b))
    for _ in range(max_iter):
        with np.errstate(all="ignore"):
            fx = h(x)
        conv = done | (np.abs(fx) <= tol) | (b - a <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(x)))
        if conv.all():
            return x
        a = np.where(~conv & (fx < 0), x, a)
        b = np.where(~conv & (fx > 0), x, b)
        step = None
        if dh is not None:
            with np.errstate(all="ignore"):
                d = dh(x)
                step = x - fx / d
        mid = 0.5 * (a + b)
        if step is None:
            nxt = mid
        else:
            inside = np.isfinite(step) & (step > a) & (step < b)
            nxt = np.where(inside, step, mid)
        x = np.where(conv, x, nxt)
    return x


def group_sum_argmin(coord_solution, W, lo, hi, tol=FOC_TOL, max_iter=400):
    """Per-row multiplier search for a separable problem with sum bounds.

    ``coord_solution(lam)`` must return the matrix of coordinate minimizers of
    ``phi_e(pi) + lam[row] * W_e * pi`` over ``pi >= 0``; every row sum
    ``W @ pi`` is then nonincreasing in its multiplier. Rows whose free sum lies
    in ``[lo, hi]`` keep ``lam = 0``; others are bisected until the sum hits
    the violated bound within ``tol`` (relative).
    """
    n = W.shape[0]
    lam = np.zeros(n)
    pi = coord_solution(lam)
    s = (W * pi).sum(axis=1)
    over = s > hi
    under = s < lo
    if not (over | under).any():
        return pi
    target = np.where(over, hi, np.where(under, lo, s))

    # bracket: lam_a has sum >= target, lam_b has sum <= target
    lam_a = np.where(under, -1.0, 0.0)
    lam_b = np.where(over, 1.0, 0.0)
    for _ in range(200):
        sb = (W * coord_solution(lam_b)).sum(axis=1)
        sa = (W * coord_solution(lam_a)).sum(axis=1)
        grow_b = over & (sb > target)
        grow_a = under & (sa < target)
        if not (grow_b.any() or grow_a.any()):
            break
        lam_b = np.where(grow_b, 2.0 * lam_b, lam_b)
        lam_a = np.where(grow_a, 2.0 * lam_a, lam_a)
    active = over | under
    for _ in range(max_iter):
        mid = 0.5 * (lam_a + lam_b)
        pi = coord_solution(np.where(active, mid, 0.0))
        sm = (W * pi).sum(axis=1)
        err = np.abs(sm - target)
        ok = ~active | (err <= tol * (1.0 + np.abs(target))) | (lam_b - lam_a <= 1e-15 * (1 + np.abs(mid)))
        if ok.all():
            return pi
        lam_a = np.where(active & (sm > target), mid, lam_a)
        lam_b = np.where(active & (sm <= target), mid, lam_b)
    return pi
