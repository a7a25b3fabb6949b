"""Structured grids, nodal fields and element-level assembly.

Grids are 1D segments (linear elements) or 2D rectangles (bilinear
quadrilaterals) with a fixed spacing per axis.  All quadratic forms used by
the solvers -- the damage-weighted stiffness and the phase-field form -- are
assembled here with a 2-point Gauss rule per axis, coefficients interpolated
nodally to the Gauss points.
"""

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
from scipy import sparse

_GAUSS_PTS = np.array([-1.0, 1.0]) / np.sqrt(3.0)
_GAUSS_WTS = np.array([1.0, 1.0])

_FACES_1D = ("left", "right")
_FACES_2D = ("left", "right", "bottom", "top")

# Named shorthands accepted by build_grid.
_DIRICHLET_ALIASES = {
    "ends": ("left", "right"),
    "top_bottom": ("bottom", "top"),
}


@dataclass(frozen=True, eq=False)
class Grid:
    """Structured mesh of a segment (1D) or rectangle (2D).

    Node numbering is row-major: 1D index ``ix``; 2D index
    ``iy * (nx + 1) + ix`` with y the slow axis.
    """

    dim: int
    extents: Tuple[float, ...]
    counts: Tuple[int, ...]
    spacing: Tuple[float, ...]
    dirichlet_mask: np.ndarray = field(repr=False)

    @property
    def node_shape(self) -> Tuple[int, ...]:
        if self.dim == 1:
            return (self.counts[0] + 1,)
        return (self.counts[1] + 1, self.counts[0] + 1)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.node_shape))

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.counts))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape (n_nodes, dim)."""
        if self.dim == 1:
            x = np.linspace(0.0, self.extents[0], self.counts[0] + 1)
            return x[:, None]
        x = np.linspace(0.0, self.extents[0], self.counts[0] + 1)
        y = np.linspace(0.0, self.extents[1], self.counts[1] + 1)
        X, Y = np.meshgrid(x, y)  # row-major, y slow
        return np.column_stack([X.ravel(), Y.ravel()])

    def cell_nodes(self) -> np.ndarray:
        """Connectivity, shape (n_cells, 2) in 1D or (n_cells, 4) in 2D."""
        if self.dim == 1:
            i = np.arange(self.counts[0])
            return np.column_stack([i, i + 1])
        nx = self.counts[0]
        ix, iy = np.meshgrid(np.arange(nx), np.arange(self.counts[1]))
        ix, iy = ix.ravel(), iy.ravel()
        n0 = iy * (nx + 1) + ix
        return np.column_stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1])

    def same_as(self, other: "Grid") -> bool:
        return (
            self.dim == other.dim
            and self.extents == other.extents
            and self.counts == other.counts
        )


@dataclass(eq=False)
class Field:
    """One scalar per grid node."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"field has {self.values.size} values, grid has "
                f"{self.grid.n_nodes} nodes"
            )

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())


def constant_field(grid: Grid, value: float) -> Field:
    return Field(grid, np.full(grid.n_nodes, float(value)))


def validate_phase_field(v: Field, tol: float = 0.0) -> None:
    """Raise unless 0 <= v <= 1 nodally (within tol)."""
    lo, hi = v.values.min(), v.values.max()
    if lo < -tol or hi > 1.0 + tol:
        raise ValueError(f"phase field out of [0, 1]: range [{lo}, {hi}]")


def check_same_grid(*fields: Field) -> Grid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid is not grid and not grid.same_as(f.grid):
            raise ValueError("fields live on different grids")
    return grid


def build_grid(
    dim: int,
    extents: Union[float, Sequence[float]],
    counts: Union[int, Sequence[int]],
    dirichlet_spec: Union[str, Iterable[str]],
) -> Grid:
    """Construct a structured grid with Dirichlet faces marked.

    ``dirichlet_spec`` names boundary faces: ``left``/``right`` in 1D,
    additionally ``bottom``/``top`` in 2D, or the shorthands ``ends`` and
    ``top_bottom``.
    """
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    ext = tuple(float(e) for e in np.atleast_1d(extents))
    cnt = tuple(int(c) for c in np.atleast_1d(counts))
    if len(ext) != dim or len(cnt) != dim:
        raise ValueError("extents/counts length must match dim")
    if any(e <= 0 for e in ext):
        raise ValueError(f"extents must be positive, got {ext}")
    if any(c < 2 for c in cnt):
        raise ValueError(f"need at least 2 cells per axis, got {cnt}")
    spacing = tuple(e / c for e, c in zip(ext, cnt))

    if isinstance(dirichlet_spec, str):
        faces = _DIRICHLET_ALIASES.get(dirichlet_spec, (dirichlet_spec,))
    else:
        faces = tuple(dirichlet_spec)
    valid = _FACES_1D if dim == 1 else _FACES_2D
    for f in faces:
        if f not in valid:
            raise ValueError(f"unknown boundary face {f!r} for dim={dim}")

    if dim == 1:
        mask = np.zeros(cnt[0] + 1, dtype=bool)
        if "left" in faces:
            mask[0] = True
        if "right" in faces:
            mask[-1] = True
    else:
        shape = (cnt[1] + 1, cnt[0] + 1)
        m2 = np.zeros(shape, dtype=bool)
        if "bottom" in faces:
            m2[0, :] = True
        if "top" in faces:
            m2[-1, :] = True
        if "left" in faces:
            m2[:, 0] = True
        if "right" in faces:
            m2[:, -1] = True
        mask = m2.ravel()
    if not mask.any():
        raise ValueError("dirichlet_spec selects no nodes")
    return Grid(dim, ext, cnt, spacing, mask)


# ---------------------------------------------------------------------------
# Element tables (identical for every cell of a structured grid)
# ---------------------------------------------------------------------------

def element_tables(grid: Grid):
    """Shape functions and gradients at the Gauss points.

    Returns ``(N, dN, wq, jac)`` with ``N`` of shape (n_gp, n_en),
    ``dN`` of shape (n_gp, dim, n_en) in physical coordinates, quadrature
    weights ``wq`` and the constant Jacobian ``jac``.
    """
    if grid.dim == 1:
        h = grid.spacing[0]
        xi = _GAUSS_PTS
        N = np.column_stack([(1 - xi) / 2, (1 + xi) / 2])
        dN = np.tile(np.array([[-1.0 / h, 1.0 / h]]), (2, 1))[:, None, :]
        return N, dN, _GAUSS_WTS.copy(), h / 2.0
    hx, hy = grid.spacing
    pts = [(a, b) for b in _GAUSS_PTS for a in _GAUSS_PTS]
    N = np.empty((4, 4))
    dN = np.empty((4, 2, 4))
    for g, (xi, et) in enumerate(pts):
        N[g] = 0.25 * np.array(
            [(1 - xi) * (1 - et), (1 + xi) * (1 - et),
             (1 + xi) * (1 + et), (1 - xi) * (1 + et)]
        )
        dN[g, 0] = 0.25 * np.array([-(1 - et), (1 - et), (1 + et), -(1 + et)]) * (2 / hx)
        dN[g, 1] = 0.25 * np.array([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)]) * (2 / hy)
    wq = np.ones(4)
    return N, dN, wq, hx * hy / 4.0


@dataclass(eq=False)
class QuadraticForm:
    """z -> z^T A z / 2 + b^T z + c with A symmetric PSD."""

    matrix: sparse.csr_matrix
    linear: np.ndarray
    constant: float = 0.0
    grid: Optional[Grid] = None

    def __call__(self, z: np.ndarray) -> float:
        return float(0.5 * z @ (self.matrix @ z) + self.linear @ z + self.constant)

    def gradient(self, z: np.ndarray) -> np.ndarray:
        return self.matrix @ z + self.linear


def _assemble_cellwise(grid: Grid, Ke: np.ndarray) -> sparse.csr_matrix:
    """Scatter per-cell matrices Ke (n_cells, m, m) into a global CSR."""
    conn = grid.cell_nodes()
    nc, m = conn.shape
    rows = np.repeat(conn, m, axis=1).ravel()
    cols = np.tile(conn, (1, m)).ravel()
    A = sparse.coo_matrix(
        (Ke.ravel(), (rows, cols)), shape=(grid.n_nodes, grid.n_nodes)
    )
    return A.tocsr()


def assemble_stiffness(grid: Grid) -> sparse.csr_matrix:
    """Plain stiffness K with u^T K u = integral of |grad u|^2."""
    N, dN, wq, jac = element_tables(grid)
    bb = np.einsum("gdi,gdj->gij", dN, dN)
    Ke1 = jac * np.einsum("g,gij->ij", wq, bb)
    Ke = np.broadcast_to(Ke1, (grid.n_cells,) + Ke1.shape)
    return _assemble_cellwise(grid, np.ascontiguousarray(Ke))


def assemble_mass(grid: Grid) -> sparse.csr_matrix:
    """Mass matrix M with u^T M u = integral of u^2 (quadrature-exact)."""
    N, dN, wq, jac = element_tables(grid)
    nn = np.einsum("gi,gj->gij", N, N)
    Me1 = jac * np.einsum("g,gij->ij", wq, nn)
    Me = np.broadcast_to(Me1, (grid.n_cells,) + Me1.shape)
    return _assemble_cellwise(grid, np.ascontiguousarray(Me))


def assemble_weighted_stiffness(grid: Grid, w: Field, eta: float) -> QuadraticForm:
    """Quadratic form u -> integral of (eta + w^2) |grad u|^2.

    The coupling coefficient is interpolated nodally to the Gauss points.
    """
    check_same_grid(Field(grid, np.zeros(grid.n_nodes)), w)
    validate_phase_field(w, tol=1e-12)
    if eta <= 0:
        raise ValueError("eta must be positive")
    N, dN, wq, jac = element_tables(grid)
    conn = grid.cell_nodes()
    wgp = w.values[conn] @ N.T  # (n_cells, n_gp)
    coef = eta + wgp**2
    bb = np.einsum("gdi,gdj->gij", dN, dN)
    Ke = jac * np.einsum("g,cg,gij->cij", wq, coef, bb)
    K = _assemble_cellwise(grid, Ke)
    # Energy is u^T K u, so the z^T A z / 2 representation carries A = 2 K.
    return QuadraticForm(2.0 * K, np.zeros(grid.n_nodes), 0.0, grid)


def assemble_phase_form(grid: Grid, u: Field, eps: float, eta: float) -> QuadraticForm:
    """Quadratic form in v: the full AT energy at fixed u.

    v -> integral of v^2 |grad u|^2 + (eps/2) |grad v|^2 + (1 - v)^2 / (2 eps),
    plus the v-independent eta |grad u|^2 term carried in the constant.
    """
    check_same_grid(Field(grid, np.zeros(grid.n_nodes)), u)
    if eps <= 0:
        raise ValueError("eps must be positive")
    N, dN, wq, jac = element_tables(grid)
    conn = grid.cell_nodes()
    ue = u.values[conn]
    gu = np.einsum("gdi,ci->cgd", dN, ue)
    s = (gu**2).sum(axis=-1)  # |grad u|^2 at Gauss points, (n_cells, n_gp)

    nn = np.einsum("gi,gj->gij", N, N)
    bb = np.einsum("gdi,gdj->gij", dN, dN)
    M1e = jac * np.einsum("g,cg,gij->cij", wq, s, nn)
    M1 = _assemble_cellwise(grid, M1e)
    K = assemble_stiffness(grid)
    M = assemble_mass(grid)

    ones = np.ones(grid.n_nodes)
    m_lumped = M @ ones
    A = (2.0 * M1 + eps * K + M / eps).tocsr()
    b = -m_lumped / eps
    grad_u_sq = jac * float(np.einsum("g,cg->", wq, s))
    c = 0.5 / eps * float(ones @ m_lumped) + eta * grad_u_sq
    return QuadraticForm(A, b, c, grid)


# ---------------------------------------------------------------------------
# Field snapshots: header "dim nx [ny] hx [hy]", one value per line, row-major
# ---------------------------------------------------------------------------

def write_field(f: Field, stream_or_path: Union[str, TextIO]) -> None:
    grid = f.grid
    if grid.dim == 1:
        header = f"1 {grid.counts[0]} {grid.spacing[0]:.17g}"
    else:
        header = (
            f"2 {grid.counts[0]} {grid.counts[1]} "
            f"{grid.spacing[0]:.17g} {grid.spacing[1]:.17g}"
        )
    lines = [header] + [f"{v:.17g}" for v in f.values]
    text = "\n".join(lines) + "\n"
    if isinstance(stream_or_path, str):
        with open(stream_or_path, "w") as fh:
            fh.write(text)
    else:
        stream_or_path.write(text)


def read_field(stream_or_path: Union[str, TextIO], grid: Optional[Grid] = None) -> Field:
    """Read a snapshot; reconstructs the grid (no Dirichlet mask) if not given."""
    if isinstance(stream_or_path, str):
        with open(stream_or_path) as fh:
            lines = fh.read().split()
    else:
        lines = stream_or_path.read().split()
    dim = int(lines[0])
    if dim == 1:
        nx, hx = int(lines[1]), float(lines[2])
        vals = np.array([float(t) for t in lines[3:]])
        if grid is None:
            grid = Grid(1, (nx * hx,), (nx,), (hx,), np.zeros(nx + 1, dtype=bool))
    else:
        nx, ny = int(lines[1]), int(lines[2])
        hx, hy = float(lines[3]), float(lines[4])
        vals = np.array([float(t) for t in lines[5:]])
        if grid is None:
            grid = Grid(
                2, (nx * hx, ny * hy), (nx, ny), (hx, hy),
                np.zeros((nx + 1) * (ny + 1), dtype=bool),
            )
    return Field(grid, vals)
