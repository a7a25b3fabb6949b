"""Convex subproblem solvers and the alternating-minimization driver.

The displacement subproblem is an SPD linear solve (diagonally
preconditioned conjugate gradients after Dirichlet elimination); the phase
subproblem is a box-constrained QP solved by projected gradient with
Barzilai-Borwein steps under a monotone Armijo safeguard.  Alternating the
two blocks decreases the total energy monotonically and stops on energy
stagnation.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.sparse.linalg import cg

from .energy import ATParams, EnergyRecord, total_energy
from .grid import (
    Field,
    Grid,
    QuadraticForm,
    assemble_phase_form,
    assemble_weighted_stiffness,
)


class SolverError(RuntimeError):
    """A subproblem solver failed to reach its tolerance."""


def _dirichlet_values(grid: Grid, dirichlet) -> np.ndarray:
    vals = dirichlet.values if isinstance(dirichlet, Field) else np.asarray(dirichlet, dtype=float)
    if vals.shape != (grid.n_nodes,):
        raise ValueError("dirichlet values must be given at every node")
    return vals


def solve_spd(
    form: QuadraticForm,
    dirichlet,
    tol_lin: float = 1e-10,
    x0: Optional[np.ndarray] = None,
) -> Field:
    """Minimize the quadratic form subject to values on the Dirichlet mask.

    ``dirichlet`` is a Field (or nodal array) whose values are imposed on
    the grid's Dirichlet nodes.  Returns the nodal minimizer; the reduced
    relative residual is at most ``tol_lin``.
    """
    grid = form.grid
    if grid is None:
        raise ValueError("form carries no grid")
    bc = _dirichlet_values(grid, dirichlet)
    mask = grid.dirichlet_mask
    free = ~mask

    x = np.zeros(grid.n_nodes)
    x[mask] = bc[mask]
    A = form.matrix
    Aff = A[free][:, free]
    rhs = -(form.linear[free] + A[free][:, mask] @ bc[mask])

    diag = Aff.diagonal()
    if np.any(diag <= 0):
        raise SolverError("reduced operator has non-positive diagonal")
    precond = _diag_precond(diag)

    n_free = int(free.sum())
    x0f = None
    if x0 is not None:
        x0f = np.asarray(x0, dtype=float)[free]
    sol, info = cg(
        Aff, rhs, x0=x0f, rtol=tol_lin, atol=0.0, maxiter=10 * n_free, M=precond
    )
    if info != 0:
        raise SolverError(f"CG failed to converge (info={info}, n={n_free})")
    x[free] = sol
    return Field(grid, x)


def _diag_precond(diag: np.ndarray):
    from scipy.sparse.linalg import LinearOperator

    inv = 1.0 / diag
    n = diag.size
    return LinearOperator((n, n), matvec=lambda r: inv * r)


def projected_gradient_norm(
    form: QuadraticForm, x: np.ndarray, lower: np.ndarray, upper: np.ndarray
) -> float:
    """Sup norm of the KKT projected gradient at x."""
    g = form.gradient(x)
    pg = g.copy()
    at_lo = x <= lower
    at_hi = x >= upper
    pg[at_lo] = np.minimum(g[at_lo], 0.0)
    pg[at_hi & ~at_lo] = np.maximum(g[at_hi & ~at_lo], 0.0)
    pg[at_lo & at_hi] = 0.0
    return float(np.abs(pg).max()) if pg.size else 0.0


def _pg_phase(form, x, lo, hi, tol, max_iter):
    """Barzilai-Borwein projected gradient with a monotone Armijo safeguard.

    Returns when the projected gradient drops below tol or when progress
    stalls at the rounding floor of the objective.
    """
    f = form(x)
    g = form.gradient(x)
    diag = form.matrix.diagonal()
    dmax = float(diag.max()) if diag.size else 1.0
    if dmax <= 0:
        dmax = 1.0
    alpha = 1.0 / dmax

    for _ in range(max_iter):
        pg = g.copy()
        at_lo = x <= lo
        at_hi = x >= hi
        pg[at_lo] = np.minimum(g[at_lo], 0.0)
        pg[at_hi & ~at_lo] = np.maximum(g[at_hi & ~at_lo], 0.0)
        pg[at_lo & at_hi] = 0.0
        if np.abs(pg).max(initial=0.0) <= tol:
            return x, g, True

        step = alpha
        d = np.zeros_like(x)
        for _ in range(60):
            x_new = np.clip(x - step * g, lo, hi)
            d = x_new - x
            if not d.any():
                break
            if form(x_new) <= f + 1e-4 * (g @ d):
                break
            step *= 0.5
        if not d.any():
            # Rounding floor reached; hand over to the subspace refinement.
            return x, g, False

        f_new = form(x_new)
        g_new = form.gradient(x_new)
        s, y = d, g_new - g
        sy = s @ y
        alpha = (s @ s) / sy if sy > 1e-300 else 1.0 / dmax
        alpha = min(max(alpha, 1e-10 / dmax), 1e10 / dmax)
        x, f, g = x_new, f_new, g_new
    return x, g, False


def solve_box_qp(
    form: QuadraticForm,
    lower,
    upper,
    dirichlet=None,
    tol_qp: float = 1e-9,
    x0: Optional[np.ndarray] = None,
    max_iter: Optional[int] = None,
) -> Field:
    """Minimize the quadratic form over the box [lower, upper].

    Dirichlet nodes, when a datum is given, are pinned by collapsing the
    box there.  A projected-gradient phase (BB steps, monotone safeguard)
    locates the active set; a sparse subspace solve then polishes the free
    variables so the KKT projected gradient drops below tol_qp.  Bound
    satisfaction is exact (iterates are clipped).
    """
    grid = form.grid
    if grid is None:
        raise ValueError("form carries no grid")
    lo = np.broadcast_to(
        lower.values if isinstance(lower, Field) else np.asarray(lower, dtype=float),
        (grid.n_nodes,)).astype(float).copy()
    hi = np.broadcast_to(
        upper.values if isinstance(upper, Field) else np.asarray(upper, dtype=float),
        (grid.n_nodes,)).astype(float).copy()
    if np.any(lo > hi):
        raise ValueError("infeasible box: lower > upper somewhere")
    if dirichlet is not None:
        bc = _dirichlet_values(grid, dirichlet)
        mask = grid.dirichlet_mask
        lo[mask] = bc[mask]
        hi[mask] = bc[mask]

    n = grid.n_nodes
    if max_iter is None:
        max_iter = max(2000, 50 * n)
    x = np.clip(np.asarray(x0, dtype=float) if x0 is not None else 0.5 * (lo + hi), lo, hi)
    width = max(1.0, float(np.abs(hi - lo).max(initial=0.0)))

    for round_ in range(16):
        x, g, ok = _pg_phase(form, x, lo, hi, tol_qp, max_iter)
        if ok:
            return Field(grid, x)
        # Subspace refinement on the inferred active set; the detection
        # band widens each round so near-active entries stalled at the
        # rounding floor eventually get pinned.
        band = width * 1e-9 * 10.0**round_
        act_lo = (x - lo <= band) & (g >= -tol_qp)
        act_hi = (hi - x <= band) & (g <= tol_qp)
        act = act_lo | act_hi | (lo == hi)
        x_try = x.copy()
        x_try[act_lo] = lo[act_lo]
        x_try[act_hi & ~act_lo] = hi[act_hi & ~act_lo]
        free = ~act
        if free.any():
            from scipy.sparse.linalg import spsolve

            A = form.matrix
            Aff = A[free][:, free].tocsc()
            rhs = -(form.linear[free] + A[free][:, act] @ x_try[act])
            x_try[free] = spsolve(Aff, rhs)
        np.clip(x_try, lo, hi, out=x_try)
        # Accept whenever the energy does not rise beyond the cancellation
        # noise of evaluating the form.  The KKT residual may grow for one
        # round when a near-active node is pinned on the wrong side; the
        # next round's gradient re-classification releases it.
        noise = 1e-12 * (1.0 + abs(form.constant) + abs(form(x)))
        if form(x_try) <= form(x) + noise:
            x = x_try
        if projected_gradient_norm(form, x, lo, hi) <= tol_qp:
            return Field(grid, x)

    raise SolverError(f"box QP did not reach tol {tol_qp}")


@dataclass
class AMResult:
    u: Field
    v: Field
    record: EnergyRecord
    sweeps: int


def alternate_minimize(
    grid: Grid,
    u0: Field,
    v0: Field,
    v_upper: Field,
    g_dirichlet: Field,
    params: ATParams,
    trunc_level: Optional[float] = None,
    max_sweeps: int = 200,
) -> AMResult:
    """Alternating block minimization of the regularized energy.

    Sweeps a u-solve (Dirichlet datum ``g_dirichlet`` on the marked nodes)
    and a v-solve (box [0, v_upper], v = 1 on the marked nodes) until the
    energy decrease per sweep drops below tol_am * |Omega|.  When
    ``trunc_level`` is set, u is clipped to that sup-norm bound after every
    u-solve; clipping never increases the energy.

    Exits on a trailing u-solve so the displacement block is exactly
    optimal for the returned v; the v block's projected gradient is
    re-checked against the final u.
    """
    if np.any(v0.values < -1e-15) or np.any(v0.values > v_upper.values + 1e-15):
        raise ValueError("need 0 <= v0 <= v_upper nodally")
    mask = grid.dirichlet_mask
    if np.any(np.abs(u0.values[mask] - g_dirichlet.values[mask]) > 1e-12):
        raise ValueError("u0 does not match the Dirichlet datum")

    tol = params.tol_am * grid.volume
    u, v = u0.copy(), v0.copy()
    energy = total_energy(u, v, params)
    zeros = np.zeros(grid.n_nodes)

    def u_half(u_prev: Field, v_cur: Field) -> Field:
        form = assemble_weighted_stiffness(grid, v_cur, params.eta)
        u_new = solve_spd(form, g_dirichlet, params.tol_lin, x0=u_prev.values)
        if trunc_level is not None:
            np.clip(u_new.values, -trunc_level, trunc_level, out=u_new.values)
        return u_new

    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        u = u_half(u, v)
        e_half = total_energy(u, v, params)
        if e_half > energy + 1e-12:
            raise SolverError("u half-sweep increased the energy")

        phase = assemble_phase_form(grid, u, params.eps, params.eta)
        v = solve_box_qp(
            phase, zeros, v_upper, dirichlet=np.ones(grid.n_nodes),
            tol_qp=params.tol_qp, x0=v.values,
        )
        e_new = total_energy(u, v, params)
        if e_new > e_half + 1e-12:
            raise SolverError("v half-sweep increased the energy")

        if energy - e_new < tol:
            # Re-optimize u for the final v, then confirm the v block is
            # still stationary for the refreshed u.
            u = u_half(u, v)
            e_new = total_energy(u, v, params)
            phase = assemble_phase_form(grid, u, params.eps, params.eta)
            lo, hi = zeros.copy(), v_upper.values.copy()
            lo[mask] = 1.0
            hi[mask] = 1.0
            pg = projected_gradient_norm(phase, v.values, lo, hi)
            scale = max(1.0, float(np.abs(phase.linear).max()))
            if pg <= 1e-6 * scale:
                energy = e_new
                break
            energy = e_new
        else:
            energy = e_new
    else:
        raise SolverError(f"alternating minimization exceeded {max_sweeps} sweeps")

    from .energy import elliptic_energy, mm_energy  # cheap, avoids recompute drift

    ell = elliptic_energy(u, v, params.eta)
    surf = mm_energy(v, params.eps)
    rec = EnergyRecord(t=math.nan, elliptic=ell, surface=surf, total=ell + surf,
                       am_sweeps=sweeps)
    return AMResult(u, v, rec, sweeps)
