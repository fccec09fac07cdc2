"""Nonlinear condenser capacities on Cayley-graph balls and the transfer check.

A ball of radius R carries, per generator g_j, the partial map h -> g_j h
(left multiplication). Potentials u live on the ball with value 0 outside
(finite support realized at the chosen scale), so the difference function
u(g_j .) - u(.) also has entries on edges crossing the boundary sphere.

The capacity

    cap_J(X1, X2) = inf { max_j |u(g_j .) - u(.)|_J : 0 <= u <= 1,
                          u = 1 on X1, u = 0 on X2 }

is convex and is minimized by projected first-order descent on the box
[0, 1]^vertices with equality pins. Exact oracles (LP for the trace-norm
case, sparse harmonic solve for the Frobenius case) live alongside for
cross-checking.
"""

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np
import scipy.optimize
import scipy.sparse
import scipy.sparse.linalg

from ._solvers import fit_loglog, parallel_map, projected_subgradient, projected_descent
from .condenser_solver import SolveOptions, SolveReport, solve_condenser
from .errors import ValidationError
from .operator_core import OperatorTuple, make_condenser
from .ri_norms import NormSpec, vector_norm, vector_norm_subgradient


@dataclass(frozen=True)
class GroupSpec:
    """A finitely generated group given as a lattice Z^d, free group F_k, or
    explicit permutation tables on a finite vertex set."""

    kind: str  # "zd" | "free" | "custom"
    d: int = 0
    k: int = 0
    tables: tuple | None = None

    def __post_init__(self):
        if self.kind == "zd":
            if self.d < 1:
                raise ValidationError("Z^d requires d >= 1")
        elif self.kind == "free":
            if self.k < 1:
                raise ValidationError("free group requires k >= 1")
        elif self.kind == "custom":
            if not self.tables:
                raise ValidationError("custom group requires permutation tables")
            size = len(self.tables[0])
            for t in self.tables:
                if sorted(t) != list(range(size)):
                    raise ValidationError("custom tables must be bijections on the vertex set")
        else:
            raise ValidationError(f"unknown group kind {self.kind!r}")

    @property
    def n_generators(self):
        if self.kind == "zd":
            return self.d
        if self.kind == "free":
            return self.k
        return len(self.tables)

    def to_json(self):
        if self.kind == "zd":
            return {"kind": "Z^d", "d": self.d}
        if self.kind == "free":
            return {"kind": "free", "k": self.k}
        return {"kind": "custom", "tables": [list(t) for t in self.tables]}

    @staticmethod
    def from_json(obj):
        if not isinstance(obj, dict) or "kind" not in obj:
            raise ValidationError('group JSON needs a "kind" field')
        kind = obj["kind"]
        if kind in ("Z^d", "zd", "Zd"):
            return GroupSpec("zd", d=int(obj["d"]))
        if kind == "free":
            return GroupSpec("free", k=int(obj["k"]))
        if kind == "custom":
            return GroupSpec("custom", tables=tuple(tuple(int(x) for x in t) for t in obj["tables"]))
        raise ValidationError(f"unknown group kind {kind!r}")


def ball_size(group, R):
    """Exact vertex count of the radius-R word-metric ball."""
    if group.kind == "zd":
        d = group.d
        return sum(
            (2 ** k) * math.comb(d, k) * math.comb(R, k) for k in range(0, min(d, R) + 1)
        )
    if group.kind == "free":
        k = group.k
        if R == 0:
            return 1
        if k == 1:
            return 2 * R + 1
        return 1 + 2 * k * ((2 * k - 1) ** R - 1) // (2 * k - 2)
    return len(group.tables[0])


@dataclass(frozen=True)
class CayleyBall:
    """Finite ball with per-generator partial vertex maps and marked plates."""

    group: GroupSpec
    R: int
    vertices: tuple            # canonical word forms, BFS-by-length then lexicographic
    word_lengths: np.ndarray
    sigma: tuple               # per generator: int array, sigma[j][i] = index of g_j v_i, -1 if outside
    sigma_inv: tuple           # per generator: index of g_j^{-1} v_i, -1 if outside
    X1: np.ndarray             # sorted vertex indices
    X2: np.ndarray

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_generators(self):
        return len(self.sigma)

    def index_of(self, key):
        try:
            return self.vertices.index(key)
        except ValueError:
            raise ValidationError(f"vertex {key!r} is not inside the ball")


def _zd_vertices(d, R):
    verts = []
    for point in itertools.product(range(-R, R + 1), repeat=d):
        if sum(abs(x) for x in point) <= R:
            verts.append(point)
    verts.sort(key=lambda p: (sum(abs(x) for x in p), p))
    return verts


def _free_vertices(k, R):
    # Reduced words as tuples of nonzero ints (+j = generator j, -j = inverse).
    words = [()]
    frontier = [()]
    letters = [s * j for j in range(1, k + 1) for s in (1, -1)]
    for _ in range(R):
        nxt = []
        for w in frontier:
            for a in letters:
                if w and w[-1] == -a:
                    continue
                nxt.append(w + (a,))
        words.extend(nxt)
        frontier = nxt
    words.sort(key=lambda w: (len(w), w))
    return words


def _free_left_mult(letter, word):
    if word and word[0] == -letter:
        return word[1:]
    return (letter,) + word


def _resolve_plate(descr, group, verts, index, word_lengths):
    """Vertex-set descriptor -> sorted index array.

    Accepted forms: None/[] (empty), "origin"/"identity", an explicit list of
    vertex keys (coordinate tuples for Z^d, letter tuples for free groups,
    ints for custom), {"sphere": r}, or {"radius_at_least": r}.
    """
    if descr is None:
        return np.array([], dtype=int)
    if isinstance(descr, str):
        if descr in ("origin", "identity", "e"):
            origin = (0,) * group.d if group.kind == "zd" else (() if group.kind == "free" else 0)
            return np.array([index[origin]], dtype=int)
        raise ValidationError(f"unknown plate descriptor {descr!r}")
    if isinstance(descr, dict):
        if "sphere" in descr:
            r = int(descr["sphere"])
            return np.flatnonzero(word_lengths == r).astype(int)
        if "radius_at_least" in descr:
            r = int(descr["radius_at_least"])
            return np.flatnonzero(word_lengths >= r).astype(int)
        raise ValidationError(f"unknown plate descriptor {descr!r}")
    idx = []
    for key in descr:
        if group.kind == "custom":
            key = int(key)
        else:
            key = tuple(int(x) for x in key)
        if key not in index:
            raise ValidationError(f"plate vertex {key!r} lies outside the ball")
        idx.append(index[key])
    return np.array(sorted(set(idx)), dtype=int)


def build_ball(group, R, X1=None, X2=None):
    """Enumerate the radius-R ball with canonical ordering and generator maps."""
    if R < 0:
        raise ValidationError("R must be >= 0")
    if group.kind == "zd":
        verts = _zd_vertices(group.d, R)
        index = {v: i for i, v in enumerate(verts)}
        word_lengths = np.array([sum(abs(x) for x in v) for v in verts], dtype=int)
        sigma, sigma_inv = [], []
        for j in range(group.d):
            fwd = np.full(len(verts), -1, dtype=int)
            bwd = np.full(len(verts), -1, dtype=int)
            for i, v in enumerate(verts):
                w = list(v)
                w[j] += 1
                fwd[i] = index.get(tuple(w), -1)
                w[j] -= 2
                bwd[i] = index.get(tuple(w), -1)
            sigma.append(fwd)
            sigma_inv.append(bwd)
    elif group.kind == "free":
        verts = _free_vertices(group.k, R)
        index = {v: i for i, v in enumerate(verts)}
        word_lengths = np.array([len(v) for v in verts], dtype=int)
        sigma, sigma_inv = [], []
        for j in range(1, group.k + 1):
            fwd = np.full(len(verts), -1, dtype=int)
            bwd = np.full(len(verts), -1, dtype=int)
            for i, v in enumerate(verts):
                fwd[i] = index.get(_free_left_mult(j, v), -1)
                bwd[i] = index.get(_free_left_mult(-j, v), -1)
            sigma.append(fwd)
            sigma_inv.append(bwd)
    else:
        verts = list(range(len(group.tables[0])))
        index = {v: i for i, v in enumerate(verts)}
        word_lengths = np.zeros(len(verts), dtype=int)
        sigma = [np.asarray(t, dtype=int) for t in group.tables]
        sigma_inv = []
        for t in sigma:
            inv = np.empty_like(t)
            inv[t] = np.arange(len(t))
            sigma_inv.append(inv)

    expected = ball_size(group, R)
    if len(verts) != expected:
        raise ValidationError(f"ball growth mismatch: {len(verts)} vertices, expected {expected}")

    x1 = _resolve_plate(X1, group, verts, index, word_lengths)
    x2 = _resolve_plate(X2, group, verts, index, word_lengths)
    if np.intersect1d(x1, x2).size:
        raise ValidationError("X1 and X2 must be disjoint")
    for j, fwd in enumerate(sigma):
        inside = fwd[fwd >= 0]
        if len(np.unique(inside)) != len(inside):
            raise ValidationError(f"generator map {j} is not injective where defined")

    return CayleyBall(
        group=group,
        R=R,
        vertices=tuple(verts),
        word_lengths=word_lengths,
        sigma=tuple(sigma),
        sigma_inv=tuple(sigma_inv),
        X1=x1,
        X2=x2,
    )


# -- difference structure -------------------------------------------------------------


def _difference_rows(ball):
    """Per generator: (head, tail) index arrays with -1 meaning "outside, value 0".

    Rows cover every h in the ball (difference u(g_j h) - u(h), head possibly
    outside) plus one row per vertex whose g_j-preimage is outside (difference
    u(v) - 0). Together these are exactly the nonzero entries of the group
    difference function for a potential supported in the ball.
    """
    rows = []
    nv = ball.n_vertices
    for j in range(ball.n_generators):
        head = list(ball.sigma[j])
        tail = list(range(nv))
        for v in range(nv):
            if ball.sigma_inv[j][v] < 0:
                head.append(v)
                tail.append(-1)
        rows.append((np.asarray(head, dtype=int), np.asarray(tail, dtype=int)))
    return rows


def _diff_values(u, head, tail):
    hv = np.where(head >= 0, u[np.clip(head, 0, None)], 0.0)
    tv = np.where(tail >= 0, u[np.clip(tail, 0, None)], 0.0)
    return hv - tv


def _scatter_add(g, idx, vals):
    mask = idx >= 0
    np.add.at(g, idx[mask], vals[mask])


def graph_capacity(ball, spec, opts=None):
    """Condenser capacity of (X1, X2) on the ball for one RI norm.

    The box constraint and pins are kept exactly at every iterate; a smooth
    refinement stage (Huber / log-sum-exp, L-BFGS-B on the free coordinates)
    follows the subgradient phase for Schatten-family norms.
    """
    opts = opts or SolveOptions()
    t0 = time.perf_counter()
    nv = ball.n_vertices
    rows = _difference_rows(ball)
    u = np.zeros(nv)
    u[ball.X1] = 1.0
    pinned = np.zeros(nv, dtype=bool)
    pinned[ball.X1] = True
    pinned[ball.X2] = True
    free = np.flatnonzero(~pinned)

    flags = {}
    if ball.X1.size == 0:
        # u = 0 is feasible and makes every difference vanish.
        value = 0.0
        flags["empty_inner_plate"] = True
        return SolveReport(
            value=value,
            minimizer=u,
            history=[(0, 0.0, 0.0)],
            feasibility_residuals={"box": 0.0, "pins": 0.0},
            converged=True,
            wall_time=time.perf_counter() - t0,
            iters=1,
            extra=dict(flags, n_vertices=nv),
        )
    if free.size == 0:
        # every vertex pinned: the single feasible potential is the pin pattern
        value = max(vector_norm(_diff_values(u, h, t), spec) for h, t in rows)
        return SolveReport(
            value=value,
            minimizer=u,
            history=[(0, value, 0.0)],
            feasibility_residuals={"box": 0.0, "pins": 0.0},
            converged=True,
            wall_time=time.perf_counter() - t0,
            iters=1,
            extra=dict(flags, n_vertices=nv, fully_pinned=True),
        )

    def assemble(x):
        full = u.copy()
        full[free] = x
        return full

    def fg(x):
        full = assemble(x)
        vals, diffs = [], []
        for head, tail in rows:
            d = _diff_values(full, head, tail)
            diffs.append(d)
            vals.append(vector_norm(d, spec))
        jstar = int(np.argmax(vals))
        gd = vector_norm_subgradient(diffs[jstar], spec)
        grad = np.zeros(nv)
        head, tail = rows[jstar]
        _scatter_add(grad, head, gd)
        _scatter_add(grad, tail, -gd)
        return vals[jstar], grad[free]

    proj = lambda x: np.clip(x, 0.0, 1.0)

    history = []
    best_f, best_x = np.inf, None
    restart_values = []
    converged = False
    offset = 0

    inits = [np.full(free.size, 0.5)]
    seqs = np.random.SeedSequence(int(opts.seed)).spawn(max(0, opts.restarts - 1))
    for sq in seqs:
        inits.append(np.random.default_rng(sq).uniform(0.0, 1.0, size=free.size))

    for x0 in inits:
        bx, bf, k, conv = projected_subgradient(
            fg, proj, x0,
            max_iters=opts.max_iters, tol=opts.tol,
            step_rule=opts.step_rule, target=opts.target,
            history=history, iter_offset=offset,
        )
        offset += k
        r_best_f, r_best_x, r_conv = bf, bx, conv
        if opts.refine and spec.kind == "schatten":
            x_ref, f_ref, it_ref, conv_ref = _smooth_graph_refine(
                ball, spec, rows, u, free, bx, opts, history, offset
            )
            offset += it_ref
            if f_ref < r_best_f:
                r_best_f, r_best_x = f_ref, x_ref
            r_conv = r_conv or conv_ref
        elif opts.refine:
            x_ref, f_ref, it_ref, conv_ref = projected_descent(
                fg, proj, bx,
                max_iters=max(200, opts.max_iters // 2),
                residual_tol=max(1e-14, 1e-3 * opts.tol) * max(bf, 1e-300),
                history=history, iter_offset=offset,
            )
            offset += it_ref
            if f_ref < r_best_f:
                r_best_f, r_best_x = f_ref, x_ref
            r_conv = r_conv or conv_ref
        restart_values.append(r_best_f)
        converged = converged or r_conv
        if r_best_f < best_f:
            best_f, best_x = r_best_f, r_best_x

    full = assemble(proj(best_x))
    value = max(vector_norm(_diff_values(full, h, t), spec) for h, t in rows)
    history.append((offset, value, 0.0))
    offset += 1
    from .condenser_solver import _tail_converged

    converged = converged or _tail_converged(history, opts.tol)
    extra = dict(flags, restart_values=restart_values, n_vertices=nv)
    if spec.kind == "schatten" and spec.p == 1 and nv <= 400:
        try:
            extra["lp_crosscheck"] = total_variation_capacity_lp(ball)
        except Exception:
            pass
    return SolveReport(
        value=value,
        minimizer=full,
        history=history,
        feasibility_residuals={
            "box": float(max(0.0, full.max() - 1.0, -full.min())),
            "pins": float(max(np.abs(full[ball.X1] - 1.0).max(initial=0.0),
                              np.abs(full[ball.X2]).max(initial=0.0))),
        },
        converged=converged,
        wall_time=time.perf_counter() - t0,
        iters=offset,
        extra=extra,
    )


def _smooth_graph_refine(ball, spec, rows, u_template, free, x0, opts, history, offset):
    """L-BFGS-B on the smoothed max-of-norms objective, mu-homotopy with warm starts."""
    p = spec.p
    n = len(rows)
    u0 = u_template.copy()
    u0[free] = x0

    f_scale = max(
        max(vector_norm(_diff_values(u0, h, t), spec) for h, t in rows), 1e-300
    )
    d_scale = max(
        max(float(np.abs(_diff_values(u0, h, t)).max(initial=0.0)) for h, t in rows), 1e-300
    )

    def make_obj(eps):
        mu = eps * d_scale
        nu = eps * f_scale / np.log(n + 1.0) if n > 1 else None

        def obj(x):
            full = u_template.copy()
            full[free] = x
            fs, grads = [], []
            for head, tail in rows:
                d = _diff_values(full, head, tail)
                if p == 1:
                    r = np.sqrt(d * d + mu * mu)
                    fj = float(r.sum())
                    dd = d / r
                elif p == 2:
                    fj = float(np.sqrt(np.sum(d * d) + mu * mu))
                    dd = d / fj if fj > 0 else np.zeros_like(d)
                else:
                    a = np.abs(d)
                    fj = float(np.sum(a ** p) ** (1.0 / p)) if a.size else 0.0
                    dd = np.sign(d) * (a / fj) ** (p - 1.0) if fj > 0 else np.zeros_like(d)
                g = np.zeros(len(full))
                _scatter_add(g, head, dd)
                _scatter_add(g, tail, -dd)
                fs.append(fj)
                grads.append(g[free])
            if n == 1:
                return fs[0], grads[0]
            fmax = max(fs)
            ws = np.exp((np.asarray(fs) - fmax) / nu)
            tot = ws.sum()
            fval = float(fmax + nu * np.log(tot))
            ws /= tot
            gtot = sum(w * gj for w, gj in zip(ws, grads))
            return fval, gtot

        return obj

    bounds = [(0.0, 1.0)] * free.size
    x = np.asarray(x0, dtype=float)
    total_it = 0
    for eps in (1e-2, 1e-4, 1e-6, 1e-9):
        res = scipy.optimize.minimize(
            make_obj(eps), x, jac=True, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": 3000, "ftol": 1e-17, "gtol": 1e-14},
        )
        x = res.x
        total_it += int(res.nit)
    full = u_template.copy()
    full[free] = np.clip(x, 0.0, 1.0)
    f_exact = max(vector_norm(_diff_values(full, h, t), spec) for h, t in rows)
    if history is not None:
        history.append((offset + total_it, f_exact, 0.0))
    return np.clip(x, 0.0, 1.0), f_exact, total_it + 1, True


# -- exact oracles --------------------------------------------------------------------


def total_variation_capacity_lp(ball):
    """Exact trace-norm capacity via linear programming (HiGHS).

    min z  s.t.  z >= sum_e t_{j,e},  t_{j,e} >= +/- d_{j,e}(u),  u in [0,1],
    pins on X1/X2 substituted. Used as an independent oracle for p = 1.
    """
    rows = _difference_rows(ball)
    nv = ball.n_vertices
    pinned_val = np.full(nv, np.nan)
    pinned_val[ball.X1] = 1.0
    pinned_val[ball.X2] = 0.0
    free = np.flatnonzero(np.isnan(pinned_val))
    fmap = {v: i for i, v in enumerate(free)}
    nfree = free.size
    nt = sum(len(h) for h, _ in rows)
    # variable layout: [u_free (nfree), t (nt), z (1)]
    nvar = nfree + nt + 1
    c = np.zeros(nvar)
    c[-1] = 1.0

    A_rows, A_cols, A_vals, b_ub = [], [], [], []
    r = 0

    def coeff_of(v):
        """Return (column, coefficient, constant) for u[v]; v may be -1 (outside)."""
        if v < 0:
            return None, 0.0, 0.0
        if np.isnan(pinned_val[v]):
            return fmap[v], 1.0, 0.0
        return None, 0.0, float(pinned_val[v])

    t_off = nfree
    t_idx = 0
    per_gen_t = []
    for head, tail in rows:
        gen_ts = []
        for hh, tt in zip(head, tail):
            hcol, hcf, hconst = coeff_of(int(hh))
            tcol, tcf, tconst = coeff_of(int(tt))
            const = hconst - tconst
            # d = u[h] - u[t] + const ; need t_var >= d and t_var >= -d
            for sgn in (1.0, -1.0):
                if hcol is not None:
                    A_rows.append(r); A_cols.append(hcol); A_vals.append(sgn * 1.0)
                if tcol is not None:
                    A_rows.append(r); A_cols.append(tcol); A_vals.append(sgn * -1.0)
                A_rows.append(r); A_cols.append(t_off + t_idx); A_vals.append(-1.0)
                b_ub.append(-sgn * const)
                r += 1
            gen_ts.append(t_off + t_idx)
            t_idx += 1
        per_gen_t.append(gen_ts)
    for gen_ts in per_gen_t:
        for col in gen_ts:
            A_rows.append(r); A_cols.append(col); A_vals.append(1.0)
        A_rows.append(r); A_cols.append(nvar - 1); A_vals.append(-1.0)
        b_ub.append(0.0)
        r += 1

    A_ub = scipy.sparse.coo_matrix((A_vals, (A_rows, A_cols)), shape=(r, nvar)).tocsc()
    bounds = [(0.0, 1.0)] * nfree + [(0.0, None)] * nt + [(0.0, None)]
    res = scipy.optimize.linprog(c, A_ub=A_ub, b_ub=np.asarray(b_ub), bounds=bounds, method="highs")
    if not res.success:
        raise ValidationError(f"LP oracle failed: {res.message}")
    return float(res.fun)


def harmonic_capacity_oracle(ball):
    """Frobenius-case oracle via one sparse SPD solve.

    Minimizes the Dirichlet energy E(u) = sum_j ||d_j(u)||_2^2 subject to the
    pins, then reports (energy, u*, max_j ||d_j(u*)||_2). On instances whose
    symmetry group permutes the generators, that last quantity equals the
    capacity inf max_j ||d_j(u)||_2 (= sqrt(E/n) there).
    """
    rows = _difference_rows(ball)
    nv = ball.n_vertices
    pinned_val = np.full(nv, np.nan)
    pinned_val[ball.X1] = 1.0
    pinned_val[ball.X2] = 0.0
    free = np.flatnonzero(np.isnan(pinned_val))
    fmap = np.full(nv, -1, dtype=int)
    fmap[free] = np.arange(free.size)

    L_rows, L_cols, L_vals = [], [], []
    rhs = np.zeros(free.size)

    def add(i, j, v):
        L_rows.append(i); L_cols.append(j); L_vals.append(v)

    for head, tail in rows:
        for hh, tt in zip(head, tail):
            ends = []
            const = 0.0
            for v, sgn in ((int(hh), 1.0), (int(tt), -1.0)):
                if v < 0:
                    continue
                if np.isnan(pinned_val[v]):
                    ends.append((fmap[v], sgn))
                else:
                    const += sgn * pinned_val[v]
            # term (sum sgn*u_free + const)^2
            for i, si in ends:
                for j, sj in ends:
                    add(i, j, si * sj)
                rhs[i] -= si * const
    L = scipy.sparse.coo_matrix((L_vals, (L_rows, L_cols)), shape=(free.size, free.size)).tocsr()
    u = np.full(nv, 0.0)
    u[ball.X1] = 1.0
    if free.size:
        sol = scipy.sparse.linalg.spsolve(L, rhs)
        u[free] = sol
    energy = 0.0
    per_gen = []
    for head, tail in rows:
        d = _diff_values(u, head, tail)
        e = float(np.sum(d * d))
        energy += e
        per_gen.append(np.sqrt(e))
    return {"energy": energy, "u": u, "capacity": float(max(per_gen)), "per_generator": per_gen}


# -- transfer to the operator picture -------------------------------------------------


def truncated_regular_rep(ball):
    """Left regular representation compressed to l^2(ball): partial permutations."""
    nv = ball.n_vertices
    mats = []
    for fwd in ball.sigma:
        M = np.zeros((nv, nv))
        for h, hp in enumerate(fwd):
            if hp >= 0:
                M[hp, h] = 1.0
        mats.append(M)
    return OperatorTuple(tuple(mats), (False,) * len(mats), nv)


def multiplication_operator(ball, u):
    return np.diag(np.asarray(u, dtype=float))


def verify_transfer(ball, spec, opts=None):
    """Compare cap_J(X1, X2) with k_J(lambda(gamma); P_X1, P_X2) on the ball.

    The diagonal matrix of any feasible potential is a feasible matrix
    variable whose commutator entries are a sub-pattern of the difference
    function, so k <= cap holds at every truncation; the matrix solve is
    seeded with that diagonal candidate, making the inequality hold for the
    reported upper bounds as well. The remaining gap is reported.
    """
    opts = opts or SolveOptions()
    if ball.X1.size == 0 or ball.X2.size == 0:
        cap_report = graph_capacity(ball, spec, opts)
        tau = truncated_regular_rep(ball)
        cond = make_condenser(list(ball.X1), list(ball.X2), dim=ball.n_vertices)
        k_report = solve_condenser(tau, cond, spec, opts)
        return {
            "cap": cap_report.value,
            "k": k_report.value,
            "gap": cap_report.value - k_report.value,
            "cap_report": cap_report,
            "k_report": k_report,
            "inequality_ok": k_report.value <= cap_report.value + 1e-9 * max(1.0, cap_report.value),
        }

    cap_report = graph_capacity(ball, spec, opts)
    tau = truncated_regular_rep(ball)
    cond = make_condenser(list(ball.X1), list(ball.X2), dim=ball.n_vertices)
    k_report = solve_condenser(tau, cond, spec, opts)

    # Feasible diagonal candidate from the graph minimizer.
    u = np.asarray(cap_report.minimizer, dtype=float)
    B_cand = cond.compress_middle(multiplication_operator(ball, u))
    from .operator_core import ContractionVariable, embed, objective, project_middle

    var = ContractionVariable(cond, project_middle(cond, B_cand))
    cand_val = objective(tau, embed(var), spec)
    k_value = k_report.value
    if cand_val < k_value:
        k_value = cand_val
        k_report.value = cand_val
        k_report.minimizer = var
        k_report.extra["diagonal_candidate_used"] = True
    gap = cap_report.value - k_value
    return {
        "cap": cap_report.value,
        "k": k_value,
        "gap": gap,
        "cap_report": cap_report,
        "k_report": k_report,
        "inequality_ok": k_value <= cap_report.value + 1e-9 * max(1.0, cap_report.value),
    }


# -- parabolicity ---------------------------------------------------------------------


def parabolicity_scan(group, p, X1, R_list, opts=None):
    """Capacity decay scan: cap(X1, boundary-at-infinity) along growing balls.

    Uses the Schatten-p norm (a monotone transform of the classical p-energy);
    each entry also reports value**p, the classical p-capacity. Classification
    is a desk-scale heuristic, reported rather than asserted: "vanishing" when
    a log-log power fit decays with exponent < -0.1 and R^2 >= 0.95,
    "positive" when the last two values agree within 5% and exceed 10x the
    solver tolerance.
    """
    opts = opts or SolveOptions()
    R_list = list(R_list)
    if len(R_list) < 3:
        raise ValidationError("R_list needs at least 3 entries")
    if any(b <= a for a, b in zip(R_list, R_list[1:])):
        raise ValidationError("R_list must be strictly increasing")
    spec = NormSpec.schatten(p)

    def solve_R(R):
        ball = build_ball(group, R, X1=X1, X2=None)
        rep = graph_capacity(ball, spec, opts)
        return {
            "R": R,
            "n_vertices": ball.n_vertices,
            "value": rep.value,
            "value_classical": rep.value ** p,
            "converged": rep.converged,
        }

    entries = parallel_map(solve_R, R_list)
    values = [e["value"] for e in entries]
    warnings = []
    for a, b in zip(entries, entries[1:]):
        if b["value"] > a["value"] + 10 * opts.tol * max(1.0, a["value"]):
            warnings.append(f"non-monotone capacity between R={a['R']} and R={b['R']}")
    slope, r2 = fit_loglog(R_list, values)
    classification = "inconclusive"
    if slope < -0.1 and r2 >= 0.95:
        classification = "vanishing"
    elif (
        abs(values[-1] - values[-2]) < 0.05 * max(values[-1], 1e-300)
        and values[-1] > 10 * opts.tol
    ):
        classification = "positive"
    return {
        "p": p,
        "entries": entries,
        "fit_exponent": slope,
        "fit_r2": r2,
        "classification": classification,
        "warnings": warnings,
    }
