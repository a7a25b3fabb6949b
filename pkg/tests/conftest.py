"""Shared test helpers: a dense box-QP oracle independent of the package
solver, and random problem generators."""

import numpy as np
from scipy import sparse

from atfrac.grid import Grid, QuadraticForm


def dense_box_qp(A, b, lo, hi, tol=1e-12, max_sweeps=20000):
    """Cyclic coordinate descent for min 0.5 x^T A x + b^T x on [lo, hi].

    Exact per-coordinate minimization with clipping; provably convergent
    for SPD A.  Deliberately a different algorithm from the package solver
    so it can act as an oracle.  Raises if the KKT residual does not reach
    tol * scale.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = b.size
    x = np.clip(np.zeros(n), lo, hi)
    diag = A.diagonal().copy()
    scale = max(1.0, np.abs(b).max(initial=0.0))
    for _ in range(max_sweeps):
        x_prev = x.copy()
        for i in range(n):
            r = A[i] @ x - diag[i] * x[i] + b[i]
            x[i] = min(max(-r / diag[i], lo[i]), hi[i])
        if np.abs(x - x_prev).max() < 0.01 * tol * max(1.0, np.abs(x).max()):
            break
    g = A @ x + b
    pg = g.copy()
    pg[(x <= lo) & (g > 0)] = 0.0
    pg[(x >= hi) & (g < 0)] = 0.0
    if np.abs(pg).max(initial=0.0) > 1e-9 * scale:
        raise AssertionError("oracle failed to converge")
    return x


def random_box_qp(rng, n_max=50):
    """Random well-conditioned SPD box QP attached to a 1D grid.

    Returns (form, lo, hi).  The grid carries no Dirichlet nodes so the
    box alone constrains the problem.
    """
    n_cells = int(rng.integers(2, n_max))
    n = n_cells + 1
    grid = Grid(1, (1.0,), (n_cells,), (1.0 / n_cells,),
                np.zeros(n, dtype=bool))
    R = rng.standard_normal((n, n))
    A = R @ R.T + n * np.eye(n)
    b = rng.standard_normal(n)
    lo = rng.uniform(-1.0, 0.0, n)
    hi = lo + rng.uniform(0.1, 2.0, n)
    form = QuadraticForm(sparse.csr_matrix(A), b, float(rng.standard_normal()), grid)
    return form, lo, hi
