"""Shared first-order engines, extrapolation fits, and a deterministic map.

The engines operate on numpy arrays of any shape with the real Frobenius
inner product; feasibility is delegated to a ``project`` callback, so the same
loop drives spectral-box middle blocks and pinned [0,1] vertex potentials.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def _inner(x, y):
    return float(np.real(np.vdot(x, y)))


def _norm(x):
    return float(np.linalg.norm(x.ravel()))


def projected_subgradient(
    fg,
    project,
    x0,
    *,
    max_iters,
    tol,
    step_rule="polyak_with_estimate",
    target=None,
    history=None,
    iter_offset=0,
):
    """Projected subgradient loop with best-iterate tracking.

    ``step_rule`` is ``"diminishing"`` (a / sqrt(k+1), with a calibrated from
    the initial objective and subgradient) or ``"polyak_with_estimate"``. The
    Polyak rule uses the supplied ``target`` when given; otherwise it maintains
    an internal estimate best - delta, halving delta whenever a window of
    iterations fails to improve. Objectives here are nonnegative, so targets
    are floored at zero.

    Returns (best_x, best_f, iters_done, converged).
    """
    x = project(np.array(x0))
    f, g = fg(x)
    best_f, best_x = f, x.copy()
    scale0 = max(f, 1e-300)
    gn2 = _inner(g, g)
    a0 = f / gn2 if gn2 > 0 else 1.0
    delta = 0.5 * max(f, 1e-300)
    window = 50
    window_best = f
    converged = False
    k = 0
    while k < max_iters:
        if gn2 <= 0.0:
            # zero subgradient: global minimizer of a convex objective
            if history is not None:
                history.append((iter_offset + k, f, 0.0))
            converged = True
            k += 1
            break
        if step_rule == "diminishing":
            alpha = a0 / np.sqrt(k + 1.0)
        else:
            tgt = target if target is not None else max(best_f - delta, 0.0)
            alpha = max(f - tgt, 0.0) / gn2
            if alpha <= 0.0:
                alpha = 1e-3 * a0 / np.sqrt(k + 1.0)
        if history is not None:
            history.append((iter_offset + k, f, alpha))
        x = project(x - alpha * g)
        f, g = fg(x)
        gn2 = _inner(g, g)
        if f < best_f:
            best_f, best_x = f, x.copy()
        k += 1
        if k % window == 0:
            improved = window_best - best_f
            if step_rule != "diminishing" and target is None and improved < 0.25 * delta:
                delta *= 0.5
            if improved <= tol * scale0 and (target is not None or delta <= tol * scale0):
                converged = True
                break
            window_best = best_f
    return best_x, best_f, k, converged


def projected_descent(
    fg,
    project,
    x0,
    *,
    max_iters,
    residual_tol,
    history=None,
    iter_offset=0,
    init_step=None,
    plateau_window=60,
    plateau_tol=None,
):
    """Projected gradient descent with Barzilai-Borwein steps and Armijo backtracking.

    Intended for (locally) smooth convex objectives; on a nonsmooth objective
    the line search simply shrinks until progress stalls, at which point the
    loop exits with the best iterate found. Stops when the projected-gradient
    residual ||x - project(x - s g)|| / s drops below ``residual_tol``, or when
    a window of iterations improves the best value by less than
    ``plateau_tol`` (machine-level progress stall).

    Returns (best_x, best_f, iters_done, converged).
    """
    x = project(np.array(x0))
    f, g = fg(x)
    best_f, best_x = f, x.copy()
    if plateau_tol is None:
        plateau_tol = 1e-13 * (abs(f) + 1e-300)
    window_best = f
    step = init_step if init_step else 1.0 / max(_norm(g), 1e-12)
    fail_streak = 0
    converged = False
    k = 0
    while k < max_iters:
        if history is not None:
            history.append((iter_offset + k, f, step))
        if k and k % plateau_window == 0:
            if window_best - best_f <= plateau_tol:
                converged = True
                break
            window_best = best_f
        d = project(x - step * g) - x
        dn = _norm(d)
        if dn <= residual_tol * step:
            converged = True
            k += 1
            break
        slope = _inner(g, d)
        if slope > 0:  # numerical corner: projection moved uphill; shrink step
            step *= 0.25
            k += 1
            fail_streak += 1
            if fail_streak > 12:
                break
            continue
        t = 1.0
        accepted = False
        for _ in range(40):
            xn = x + t * d
            fn, gn_ = fg(xn)
            if fn <= f + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            fail_streak += 1
            step *= 0.25
            k += 1
            if fail_streak > 12:
                break
            continue
        fail_streak = 0
        s_vec = xn - x
        y_vec = gn_ - g
        sy = _inner(s_vec, y_vec)
        ss = _inner(s_vec, s_vec)
        if sy > 1e-300:
            step = min(max(ss / sy, 1e-14), 1e14)
        else:
            step *= 2.0
        x, f, g = xn, fn, gn_
        if f < best_f:
            best_f, best_x = f, x.copy()
        k += 1
    return best_x, best_f, k, converged


def estimate_curvature(fg, x, rng, rounds=5, probe=1e-6):
    """Power-iteration estimate of the local curvature (largest Hessian eigenvalue)."""
    _, g0 = fg(x)
    v = rng.standard_normal(x.shape)
    if np.iscomplexobj(x):
        v = v + 1j * rng.standard_normal(x.shape)
        v = 0.5 * (v + v.conj().T) if v.ndim == 2 and v.shape[0] == v.shape[1] else v
    nv = _norm(v)
    if nv == 0:
        return 1.0
    v /= nv
    lam = 1.0
    delta = probe * (1.0 + _norm(x))
    for _ in range(rounds):
        _, g1 = fg(x + delta * v)
        w = (g1 - g0) / delta
        lam = max(_norm(w), 1e-12)
        v = w / lam
    return lam


# -- extrapolation fits ------------------------------------------------------------


def fit_richardson(scales, values):
    """Least-squares fit value = limit + a / scale; exact for that model class."""
    s = np.asarray(scales, dtype=float)
    v = np.asarray(values, dtype=float)
    A = np.column_stack([np.ones_like(s), 1.0 / s])
    coef, *_ = np.linalg.lstsq(A, v, rcond=None)
    resid = float(np.linalg.norm(A @ coef - v))
    return float(coef[0]), float(coef[1]), resid


def fit_power(scales, values):
    """Fit value = v_inf + a * scale**exponent (exponent < 0 for decay).

    The exponent is found by scanning a log-spaced grid with a linear
    least-squares solve for (v_inf, a) at each candidate, then refining around
    the best candidate. Returns (v_inf, a, exponent, residual).
    """
    s = np.asarray(scales, dtype=float)
    v = np.asarray(values, dtype=float)

    def solve_for(b):
        A = np.column_stack([np.ones_like(s), s ** (-b)])
        coef, *_ = np.linalg.lstsq(A, v, rcond=None)
        return coef, float(np.linalg.norm(A @ coef - v))

    grid = np.logspace(np.log10(0.05), np.log10(6.0), 160)
    best_b, best_coef, best_res = None, None, np.inf
    for b in grid:
        coef, res = solve_for(b)
        if res < best_res:
            best_b, best_coef, best_res = b, coef, res
    lo, hi = best_b / 1.6, best_b * 1.6
    for b in np.linspace(lo, hi, 80):
        coef, res = solve_for(b)
        if res < best_res:
            best_b, best_coef, best_res = b, coef, res
    v_inf, a = float(best_coef[0]), float(best_coef[1])
    return v_inf, a, -float(best_b), best_res


def fit_loglog(scales, values):
    """Pure power-law fit log(value) = c + slope * log(scale); returns (slope, r2)."""
    s = np.log(np.asarray(scales, dtype=float))
    v = np.asarray(values, dtype=float)
    if np.any(v <= 0):
        return 0.0, 0.0
    lv = np.log(v)
    A = np.column_stack([np.ones_like(s), s])
    coef, *_ = np.linalg.lstsq(A, lv, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((lv - pred) ** 2))
    ss_tot = float(np.sum((lv - lv.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[1]), r2


# -- deterministic parallel map ------------------------------------------------------


def thread_count():
    env = os.environ.get("QCMOD_THREADS", "").strip()
    if env:
        try:
            n = int(env)
        except ValueError:
            n = 1
        return max(1, n)
    return max(1, os.cpu_count() or 1)


def parallel_map(fn, items):
    """Map preserving order (deterministic merge by index)."""
    items = list(items)
    n = thread_count()
    if n <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as ex:
        return list(ex.map(fn, items))
