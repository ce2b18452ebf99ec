"""Energy evaluation, coordinate-descent minimization, and harmonic replacement.

The discrete energy is summed over cells,

    J(u) = sum_cells h^n ( 1/2 |grad_h u|^2 + sigma(x_cell, avg_cell u) ),

with the forward-difference cell gradient and the cell-average coupling for
the potential term, so the minimizer returned here is a true discrete
minimizer of the evaluated energy.  The potential may be discontinuous, so
descent uses exact one-dimensional nodal solves (candidate scan over the
bracket [min neighbor - 1, max neighbor + 1], kink candidates, golden-section
refinement) rather than gradients.  Nodes are swept in a fixed red-black
(1D) or four-color (2D) order; nodes of one color share no cell, so their
nodal energies are separable and the simultaneous exact updates keep the
total energy monotone, exactly as sequential sweeps would.

Fine grids are solved by grid continuation: the converged minimizer of the
next-coarser level, linearly prolonged, seeds the descent.  The base level
starts from the harmonic extension of the boundary data.  Plain single-level
descent from the harmonic extension stalls on fine grids (the per-sweep
energy decrease of smooth error modes falls below any fixed tolerance long
before the error is gone), so continuation is the default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .field import (
    BallSpec,
    GridSpec,
    ScalarField,
    cell_averages,
    cell_mask,
    discrete_gradient,
    node_mask,
    sup_norm_on_ball,
    l2_norm_on_ball,
    ball_at_point,
)
from .potential import PotentialSpec, eval_potential_array
from .reports import RegularityReport, make_report

_INVGOLD = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class MinimizeOpts:
    tol: float = 1e-10              # residual: max nodewise energy decrease per sweep
    max_sweeps: int | None = None   # per level; defaults 10^5 (1D) / 10^4 (2D)
    line_search_grid: int = 17
    continuation: bool = True
    base_m: int = 4

    def sweeps_cap(self, dim: int) -> int:
        if self.max_sweeps is not None:
            return self.max_sweeps
        return 100_000 if dim == 1 else 10_000


@dataclass
class MinimizeResult:
    field: ScalarField
    energy: float
    sweeps: int
    residual: float
    converged: bool


@dataclass
class ReplacementReport:
    lhs: float                # integral of |D psi - D h|^2
    rhs: float                # integral of |D psi|^2 - |D h|^2
    max_principle_ok: bool


# ---------------------------------------------------------------------------
# energy

def discrete_energy(u: ScalarField, spec: PotentialSpec, region: BallSpec | None = None) -> float:
    """J(u) over the whole box, or over the cells of a ball region."""
    grid = u.grid
    hn = grid.h ** grid.dim
    grad = discrete_gradient(u)
    dens = 0.5 * np.sum(grad**2, axis=-1)
    avgs = cell_averages(u)
    centers = grid.cell_centers() if spec.x_dependent else None
    sig = eval_potential_array(spec, centers, avgs)
    dens = dens + sig
    if region is not None:
        dens = dens[cell_mask(grid, region)]
    return float(hn * np.sum(dens))


# ---------------------------------------------------------------------------
# linear Dirichlet solves

def _solve_laplace(grid: GridSpec, free: np.ndarray, data: np.ndarray, rhs: np.ndarray | None = None) -> np.ndarray:
    """Solve the 5-point (3-point) Dirichlet system on `free` nodes.

    Solves (2 dim) z_p - sum_nb z_nb = rhs_p with data supplying the fixed
    values; every free node must have its full neighbor stencil inside the
    grid.  Returns a full values array equal to `data` off the free set.
    """
    shape = grid.shape
    nf = int(np.sum(free))
    out = data.copy()
    if nf == 0:
        return out
    fidx = -np.ones(shape, dtype=np.int64)
    fidx[free] = np.arange(nf)
    diag = 2.0 * grid.dim * np.ones(nf)
    rows, cols, vals = [np.arange(nf)], [np.arange(nf)], [diag]
    b = rhs[free].astype(float).copy() if rhs is not None else np.zeros(nf)
    offsets = [(1,), (-1,)] if grid.dim == 1 else [(1, 0), (-1, 0), (0, 1), (0, -1)]
    for off in offsets:
        src = [slice(None)] * grid.dim
        dst = [slice(None)] * grid.dim
        for a, o in enumerate(off):
            if o == 1:
                src[a] = slice(0, shape[a] - 1)
                dst[a] = slice(1, shape[a])
            elif o == -1:
                src[a] = slice(1, shape[a])
                dst[a] = slice(0, shape[a] - 1)
        src_t, dst_t = tuple(src), tuple(dst)
        pair_free = free[src_t] & free[dst_t]
        if np.any(pair_free):
            rows.append(fidx[src_t][pair_free])
            cols.append(fidx[dst_t][pair_free])
            vals.append(-np.ones(int(np.sum(pair_free))))
        pair_fixed = free[src_t] & ~free[dst_t]
        if np.any(pair_fixed):
            np.add.at(b, fidx[src_t][pair_fixed], data[dst_t][pair_fixed])
    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nf, nf)
    )
    sol = spla.spsolve(A, b)
    resid = float(np.max(np.abs(A @ sol - b))) if nf else 0.0
    scale = 1.0 + float(np.max(np.abs(b))) if nf else 1.0
    if not np.all(np.isfinite(sol)) or resid > 1e-9 * scale:
        raise RuntimeError(f"Dirichlet Laplace solve did not converge (residual {resid:.3e})")
    out[free] = sol
    return out


def harmonic_extension(boundary: ScalarField) -> ScalarField:
    """Discrete harmonic interior fill of the masked boundary values."""
    free = ~boundary.boundary_mask
    vals = _solve_laplace(boundary.grid, free, boundary.values)
    return ScalarField(boundary.grid, vals, boundary.boundary_mask.copy())


def harmonic_replacement(u: ScalarField, ball: BallSpec) -> ScalarField:
    """Harmonic fill of the ball interior with boundary values from u.

    Interior nodes are ball nodes whose full neighbor stencil stays inside
    the ball's node set; all other nodes are copied from u.
    """
    grid = u.grid
    inner = _ball_interior(grid, ball)
    vals = _solve_laplace(grid, inner, u.values)
    return ScalarField(grid, vals, u.boundary_mask.copy())


def _ball_interior(grid: GridSpec, ball: BallSpec) -> np.ndarray:
    nodes = node_mask(grid, ball)
    inner = nodes.copy()
    if grid.dim == 1:
        inner[0] = inner[-1] = False
        inner[1:-1] &= nodes[2:] & nodes[:-2]
    else:
        inner[0, :] = inner[-1, :] = inner[:, 0] = inner[:, -1] = False
        inner[1:-1, 1:-1] &= (
            nodes[2:, 1:-1] & nodes[:-2, 1:-1] & nodes[1:-1, 2:] & nodes[1:-1, :-2]
        )
    return inner


def check_replacement_identity(u: ScalarField, ball: BallSpec) -> ReplacementReport:
    """Discrete Pythagoras for the harmonic replacement.

    lhs = int |D psi - D h|^2 and rhs = int |D psi|^2 - |D h|^2 agree up to
    the linear-solver residual because the replacement solves exactly the
    Euler-Lagrange system of the discrete Dirichlet energy; both integrals
    are insensitive to the cell region as psi == h away from the ball.
    """
    h = harmonic_replacement(u, ball)
    hn = u.grid.h ** u.grid.dim
    gp = discrete_gradient(u)
    gh = discrete_gradient(h)
    lhs = float(hn * np.sum((gp - gh) ** 2))
    rhs = float(hn * (np.sum(gp**2) - np.sum(gh**2)))
    nodes = node_mask(u.grid, ball)
    ok = float(np.max(np.abs(h.values[nodes]))) <= float(np.max(np.abs(u.values[nodes]))) + 1e-12
    return ReplacementReport(lhs=lhs, rhs=rhs, max_principle_ok=bool(ok))


# ---------------------------------------------------------------------------
# coordinate descent

def _sigma_breakpoints(spec: PotentialSpec) -> list[float]:
    """t-values (post-transform) where the base potential kinks or jumps."""
    fam = spec.family
    if fam == "zero":
        base = []
    elif fam in ("obstacle", "alt_phillips", "alt_caffarelli", "two_phase_alt_phillips", "log_modulus"):
        base = [0.0]
    elif fam in ("step_bounded", "custom"):
        base = list(spec.params["breakpoints"])
    else:
        base = [0.0]
    tr = spec.transform
    if any(tr.x_grad):
        return []  # x-dependent kink locations vary per cell; the scan covers them
    return [(b - tr.t_shift) / tr.t_scale for b in base]


class _NodalProblem:
    """Vectorized exact scalar solves for one color class of nodes."""

    def __init__(self, grid: GridSpec, spec: PotentialSpec, opts: MinimizeOpts):
        self.grid = grid
        self.spec = spec
        self.opts = opts
        self.h = grid.h
        self.breaks = _sigma_breakpoints(spec)
        self.x_dep = spec.x_dependent

    def _sigma(self, centers, t):
        return eval_potential_array(self.spec, centers, t)

    def energy_1d(self, v, L, R, cL, cR):
        quad = (v * v - (L + R) * v) / self.h
        sig = self._sigma(cL, 0.5 * (L + v)) + self._sigma(cR, 0.5 * (v + R))
        return quad + self.h * sig

    def energy_2d(self, v, nb_sum, cell_sums, centers):
        quad = 2.0 * v * v - nb_sum * v
        sig = 0.0
        for k in range(4):
            c = centers[k] if centers is not None else None
            sig = sig + self._sigma(c, 0.25 * (v + cell_sums[k]))
        return quad + self.h * self.h * sig

    def golden(self, f, lo, hi):
        """Vectorized golden-section minimization on per-node brackets."""
        width = float(np.max(hi - lo)) if hi.size else 0.0
        xtol = math.sqrt(self.h) * 3e-8  # energy resolution ~ xtol^2 / h
        iters = 0 if width <= xtol else min(64, int(math.ceil(math.log(width / xtol) / math.log(1.0 / _INVGOLD))))
        a, b = lo.copy(), hi.copy()
        x1 = b - _INVGOLD * (b - a)
        x2 = a + _INVGOLD * (b - a)
        f1, f2 = f(x1), f(x2)
        for _ in range(iters):
            take_right = f1 > f2
            a = np.where(take_right, x1, a)
            b = np.where(take_right, b, x2)
            x1 = b - _INVGOLD * (b - a)
            x2 = a + _INVGOLD * (b - a)
            f1, f2 = f(x1), f(x2)
        xm = 0.5 * (a + b)
        return xm, f(xm)


def _color_indices(n: int, offset: int) -> np.ndarray:
    idx = np.arange(1, n - 1)
    return idx[idx % 2 == offset]


def _sweep_1d(V, mask, prob: _NodalProblem, centers_mid) -> float:
    """One red-black sweep; returns the max nodewise energy decrease."""
    n = V.shape[0]
    g = prob.opts.line_search_grid
    best_dec = 0.0
    for color in (1, 0):
        ii = _color_indices(n, color)
        if ii.size == 0:
            continue
        free = ~mask[ii]
        ii = ii[free]
        if ii.size == 0:
            continue
        L, R, v0 = V[ii - 1], V[ii + 1], V[ii]
        cL = centers_mid[ii - 1] if prob.x_dep else None
        cR = centers_mid[ii] if prob.x_dep else None
        f = lambda v: prob.energy_1d(v, L, R, cL, cR)
        lo = np.minimum(L, R) - 1.0
        hi = np.maximum(L, R) + 1.0
        cands = [lo + (hi - lo) * (k / (g - 1.0)) for k in range(g)]
        cands.append(0.5 * (L + R))
        cands.append(v0)
        for brk in prob.breaks:
            cands.append(np.clip(2.0 * brk - L, lo, hi))
            cands.append(np.clip(2.0 * brk - R, lo, hi))
        C = np.stack(cands)
        FC = f(C)
        kbest = np.argmin(FC, axis=0)
        xb = np.take_along_axis(C, kbest[None, :], 0)[0]
        fb = np.take_along_axis(FC, kbest[None, :], 0)[0]
        delta = (hi - lo) / (g - 1.0)
        xg, fg = prob.golden(f, np.maximum(xb - delta, lo), np.minimum(xb + delta, hi))
        better = fg < fb
        xb = np.where(better, xg, xb)
        fb = np.where(better, fg, fb)
        f0 = f(v0)
        improve = fb < f0
        V[ii] = np.where(improve, xb, v0)
        dec = np.where(improve, f0 - fb, 0.0)
        if dec.size:
            best_dec = max(best_dec, float(np.max(dec)))
    return best_dec


def _sweep_2d(V, mask, prob: _NodalProblem) -> float:
    n1, n2 = V.shape
    g = prob.opts.line_search_grid
    best_dec = 0.0
    for oi, oj in ((1, 1), (1, 0), (0, 1), (0, 0)):
        ii = _color_indices(n1, oi)
        jj = _color_indices(n2, oj)
        if ii.size == 0 or jj.size == 0:
            continue
        I = ii[:, None]
        J = jj[None, :]
        free = ~mask[I, J]
        if not np.any(free):
            continue
        W, E = V[I - 1, J], V[I + 1, J]
        S, N = V[I, J - 1], V[I, J + 1]
        v0 = V[I, J]
        nb_sum = W + E + S + N
        cell_sums = (
            V[I - 1, J - 1] + V[I, J - 1] + V[I - 1, J],   # cell (i-1, j-1)
            V[I, J - 1] + V[I + 1, J - 1] + V[I + 1, J],   # cell (i,   j-1)
            V[I - 1, J] + V[I - 1, J + 1] + V[I, J + 1],   # cell (i-1, j)
            V[I + 1, J] + V[I, J + 1] + V[I + 1, J + 1],   # cell (i,   j)
        )
        if prob.x_dep:
            half = 0.5 * prob.h
            base = np.stack(
                np.meshgrid(prob.grid.axis_coords(0)[ii], prob.grid.axis_coords(1)[jj], indexing="ij"),
                axis=-1,
            )
            cts = tuple(
                base + np.array(shift) * half
                for shift in ((-1, -1), (1, -1), (-1, 1), (1, 1))
            )
        else:
            cts = None
        f = lambda v: prob.energy_2d(v, nb_sum, cell_sums, cts)
        lo = np.minimum(np.minimum(W, E), np.minimum(S, N)) - 1.0
        hi = np.maximum(np.maximum(W, E), np.maximum(S, N)) + 1.0
        cands = [lo + (hi - lo) * (k / (g - 1.0)) for k in range(g)]
        cands.append(0.25 * nb_sum)
        cands.append(v0)
        for brk in prob.breaks:
            for s in cell_sums:
                cands.append(np.clip(4.0 * brk - s, lo, hi))
        C = np.stack(cands)
        FC = f(C)
        kbest = np.argmin(FC, axis=0)
        xb = np.take_along_axis(C, kbest[None], 0)[0]
        fb = np.take_along_axis(FC, kbest[None], 0)[0]
        delta = (hi - lo) / (g - 1.0)
        xg, fg = prob.golden(f, np.maximum(xb - delta, lo), np.minimum(xb + delta, hi))
        better = fg < fb
        xb = np.where(better, xg, xb)
        fb = np.where(better, fg, fb)
        f0 = f(v0)
        improve = (fb < f0) & free
        V[I, J] = np.where(improve, xb, v0)
        dec = np.where(improve, f0 - fb, 0.0)
        best_dec = max(best_dec, float(np.max(dec)))
    return best_dec


def _cell_source(grid: GridSpec, s: np.ndarray) -> np.ndarray:
    """Nodal source sum_{cells at node} s_cell / 2^n, zero-padded at edges."""
    if grid.dim == 1:
        p = np.zeros(s.shape[0] + 2)
        p[1:-1] = s
        return 0.5 * (p[:-1] + p[1:])
    p = np.zeros((s.shape[0] + 2, s.shape[1] + 2))
    p[1:-1, 1:-1] = s
    return 0.25 * (p[:-1, :-1] + p[1:, :-1] + p[:-1, 1:] + p[1:, 1:])


def _newton_move(V: np.ndarray, mask: np.ndarray, grid: GridSpec,
                 spec: PotentialSpec, interior: np.ndarray) -> float:
    """Safeguarded global move: linearize sigma on cells, solve, line search.

    Pins the zero plateau (dead core) and proposes the minimizer of the
    quadratic model; an exact line search along the segment keeps the energy
    monotone regardless of the model quality.  Returns the energy gain.
    """
    u = ScalarField(grid, V, mask)
    avgs = cell_averages(u)
    centers = grid.cell_centers() if spec.x_dependent else None
    from .potential import eval_potential_slope_array

    s = eval_potential_slope_array(spec, centers, avgs)
    cap = (1.0 + spec.sup_norm) / grid.h
    s = np.clip(np.nan_to_num(s, nan=0.0, posinf=cap, neginf=-cap), -cap, cap)
    tau = 1e-9 * (1.0 + float(np.max(np.abs(V))))
    free = interior & ~mask & (np.abs(V) > tau)
    if not np.any(free):
        return 0.0
    rhs = -grid.h**2 * _cell_source(grid, s)
    try:
        z = _solve_laplace(grid, free, V, rhs)
    except RuntimeError:
        return 0.0
    d = z - V
    if not np.any(d):
        return 0.0
    e0 = discrete_energy(u, spec)
    best_t, best_e = 0.0, e0

    def energy_at(t: float) -> float:
        return discrete_energy(ScalarField(grid, V + t * d, mask), spec)

    for t in np.linspace(0.0, 1.0, 9)[1:]:
        e = energy_at(float(t))
        if e < best_e:
            best_t, best_e = float(t), e
    lo, hi = max(0.0, best_t - 0.125), min(1.0, best_t + 0.125)
    t1 = hi - _INVGOLD * (hi - lo)
    t2 = lo + _INVGOLD * (hi - lo)
    f1, f2 = energy_at(t1), energy_at(t2)
    for _ in range(30):
        if f1 > f2:
            lo, t1, f1 = t1, t2, f2
            t2 = lo + _INVGOLD * (hi - lo)
            f2 = energy_at(t2)
        else:
            hi, t2, f2 = t2, t1, f1
            t1 = hi - _INVGOLD * (hi - lo)
            f1 = energy_at(t1)
    tm = 0.5 * (lo + hi)
    em = energy_at(tm)
    if em < best_e:
        best_t, best_e = tm, em
    if best_e < e0 and best_t > 0.0:
        V += best_t * d
        return e0 - best_e
    return 0.0


def _snap_move(V: np.ndarray, mask: np.ndarray, grid: GridSpec, spec: PotentialSpec) -> float:
    """Propose the truncation u_+ for one-phase potentials; accept if it lowers J.

    Global moves can park shallow negative plateaus that single-node sweeps
    drain only diffusively; truncation removes them in one step whenever it
    is energetically favorable (Dirichlet nodes are kept as given).
    """
    if not spec.flags.one_phase or float(np.min(V)) >= 0.0:
        return 0.0
    W = np.maximum(V, 0.0)
    W[mask] = V[mask]
    if np.array_equal(W, V):
        return 0.0
    e0 = discrete_energy(ScalarField(grid, V, mask), spec)
    e1 = discrete_energy(ScalarField(grid, W, mask), spec)
    if e1 < e0:
        V[:] = W
        return e0 - e1
    return 0.0


def _interior_mask(grid: GridSpec) -> np.ndarray:
    interior = np.zeros(grid.shape, dtype=bool)
    if grid.dim == 1:
        interior[1:-1] = True
    else:
        interior[1:-1, 1:-1] = True
    return interior


def _descend(
    field_: ScalarField, spec: PotentialSpec, opts: MinimizeOpts, tol: float | None = None
) -> tuple[ScalarField, int, float, bool]:
    tol = opts.tol if tol is None else tol
    grid = field_.grid
    V = field_.values.copy()
    mask = field_.boundary_mask
    prob = _NodalProblem(grid, spec, opts)
    centers_mid = grid.cell_centers() if (grid.dim == 1 and spec.x_dependent) else None
    interior = _interior_mask(grid)
    cap = opts.sweeps_cap(grid.dim)
    residual = math.inf
    sweeps = 0
    while sweeps < cap:
        _newton_move(V, mask, grid, spec, interior)
        _snap_move(V, mask, grid, spec)
        if grid.dim == 1:
            residual = _sweep_1d(V, mask, prob, centers_mid)
        else:
            residual = _sweep_2d(V, mask, prob)
        sweeps += 1
        if residual < tol:
            # exhaust the global moves before declaring convergence
            gain = _newton_move(V, mask, grid, spec, interior)
            gain += _snap_move(V, mask, grid, spec)
            if gain <= tol:
                break
    return ScalarField(grid, V, mask.copy()), sweeps, residual, residual < tol


def _smoothed_spec(spec: PotentialSpec, eps: float) -> PotentialSpec:
    """Piecewise-linear regularization of a discontinuous family, jump width eps.

    Used as a descent homotopy: single-node moves cannot relocate a sharp
    free-boundary front (they stall on a whole slope interval of
    coordinate-wise local minima), while the smoothed problems reposition it
    to within O(eps).  The transform record is preserved.
    """
    from dataclasses import replace as _replace
    from . import potential as pot

    if spec.family == "alt_caffarelli":
        base = pot.custom([0.0, eps], [0.0, spec.params["lam"]])
    elif spec.family == "step_bounded":
        bks = list(spec.params["breakpoints"])
        vals = list(spec.params["values"])
        ts = [bks[0] - 1.0]
        vs = [vals[0]]
        for i, b in enumerate(bks):
            gap = (bks[i + 1] - b) if i + 1 < len(bks) else math.inf
            e = min(eps, 0.5 * gap)
            ts.extend([b, b + e])
            vs.extend([vals[i], vals[i + 1]])
        base = pot.custom(ts, vs)
    else:
        return spec
    return _replace(base, transform=spec.transform, sup_norm=spec.sup_norm,
                    flags=_replace(spec.flags, continuous=True))


def _smoothing_schedule(h: float, first_level: bool) -> list[float]:
    start = max(0.25, 8.0 * h) if first_level else 8.0 * h
    out = []
    eps = start
    while eps >= 2.0 * h - 1e-15:
        out.append(eps)
        eps *= 0.25
    if out and out[-1] > 2.0 * h:
        out.append(2.0 * h)
    return out


def _coarsen_boundary(boundary: ScalarField, m: int) -> ScalarField:
    """Restrict boundary data/mask to the nested coarser lattice."""
    fine = boundary.grid
    step = 2 ** (fine.m - m)
    coarse = GridSpec(fine.dim, m, fine.box)
    if fine.dim == 1:
        vals = boundary.values[::step]
        mask = boundary.boundary_mask[::step]
    else:
        vals = boundary.values[::step, ::step]
        mask = boundary.boundary_mask[::step, ::step]
    return ScalarField(coarse, vals.copy(), mask.copy())


def _prolong(u: ScalarField, target: GridSpec) -> np.ndarray:
    """Linear interpolation onto the next-finer (factor 2) lattice."""
    if target.m != u.grid.m + 1:
        raise ValueError("prolongation expects one refinement step")
    if u.grid.dim == 1:
        out = np.empty(target.shape[0])
        out[::2] = u.values
        out[1::2] = 0.5 * (u.values[:-1] + u.values[1:])
        return out
    out = np.empty(target.shape)
    out[::2, ::2] = u.values
    out[1::2, ::2] = 0.5 * (u.values[:-1, :] + u.values[1:, :])
    out[::2, 1::2] = 0.5 * (out[::2, :-1:2] + out[::2, 2::2])
    out[1::2, 1::2] = 0.25 * (
        u.values[:-1, :-1] + u.values[1:, :-1] + u.values[:-1, 1:] + u.values[1:, 1:]
    )
    return out


def minimize(
    spec: PotentialSpec,
    boundary: ScalarField,
    grid: GridSpec | None = None,
    opts: MinimizeOpts | None = None,
) -> MinimizeResult:
    """Minimize the discrete energy over fields matching the masked values.

    `boundary` carries the Dirichlet mask and data; its interior values are
    ignored.  Descent starts from the harmonic extension (on the base level
    when continuation is active) and each sweep performs exact nodal solves,
    so the energy never increases.  Hitting the sweep cap returns
    ``converged=False`` rather than raising.
    """
    opts = opts or MinimizeOpts()
    if grid is None:
        grid = boundary.grid
    elif grid != boundary.grid:
        raise ValueError("grid disagrees with the boundary field's grid")
    if not np.all(np.isfinite(boundary.values[boundary.boundary_mask])):
        raise ValueError("boundary data must be finite")

    levels = [grid.m]
    if opts.continuation and grid.m > opts.base_m:
        levels = list(range(opts.base_m, grid.m + 1))
    total_sweeps = 0
    current: ScalarField | None = None
    residual = math.inf
    converged = False
    discontinuous = not spec.flags.continuous
    stage_tol = max(opts.tol, 1e-9)
    for m in levels:
        final_level = m == grid.m
        bnd = _coarsen_boundary(boundary, m) if not final_level else boundary
        if current is None:
            start = harmonic_extension(bnd)
            first_level = True
        else:
            vals = _prolong(current, bnd.grid)
            vals[bnd.boundary_mask] = bnd.values[bnd.boundary_mask]
            start = ScalarField(bnd.grid, vals, bnd.boundary_mask.copy())
            first_level = False
        if discontinuous:
            for eps in _smoothing_schedule(bnd.grid.h, first_level):
                start, sweeps, _, _ = _descend(start, _smoothed_spec(spec, eps), opts, tol=stage_tol)
                total_sweeps += sweeps
        current, sweeps, residual, converged = _descend(
            start, spec, opts, tol=opts.tol if final_level else stage_tol
        )
        total_sweeps += sweeps
    assert current is not None
    energy = discrete_energy(current, spec)
    return MinimizeResult(
        field=current, energy=energy, sweeps=total_sweeps, residual=residual, converged=converged
    )


# ---------------------------------------------------------------------------
# lemma-level measurements

def campanato_decay(
    u: ScalarField, ball_R: BallSpec, radii: Sequence[float], beta: float
) -> RegularityReport:
    """Tabulate r -> int_{B_r} |Du - (Du)_r|^2 plus the replacement defect.

    The defect int_{B_R} |Du - Dh|^2 (h the harmonic replacement on the big
    ball) lands in ``report.defect``; fitting the table against
    (r/R)^{n + 2 beta} is the caller's inequality check.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    grid = u.grid
    for r in radii:
        if r > ball_R.radius + 1e-12:
            raise ValueError("decay radius exceeds the reference ball")
    hn = grid.h ** grid.dim
    grad = discrete_gradient(u)
    values = []
    for r in radii:
        msk = cell_mask(grid, BallSpec(ball_R.center, r))
        g = grad[msk]
        mean = g.mean(axis=0) if g.size else np.zeros(grid.dim)
        values.append(float(hn * np.sum((g - mean) ** 2)))
    h_rep = harmonic_replacement(u, ball_R)
    gh = discrete_gradient(h_rep)
    msk_R = cell_mask(grid, ball_R)
    defect = float(hn * np.sum((grad[msk_R] - gh[msk_R]) ** 2))
    center = tuple(grid.node_point(ball_R.center))
    return make_report(center, radii, values, floor=8 * grid.h, defect=defect,
                       meta={"beta": beta, "R": ball_R.radius})


def sup_l2_constant(u: ScalarField) -> float:
    """Ratio sup_{B_1/2} |u| / ||u||_{L2(B_1)} on the box-inscribed ball."""
    grid = u.grid
    center_pt = [0.5 * (lo + hi) for lo, hi in grid.box]
    radius = min(0.5 * (hi - lo) for lo, hi in grid.box)
    big = ball_at_point(grid, center_pt, radius)
    small = ball_at_point(grid, center_pt, radius / 2.0)
    denom = l2_norm_on_ball(u, big)
    if denom == 0.0:
        return 0.0
    return sup_norm_on_ball(u, small) / denom
