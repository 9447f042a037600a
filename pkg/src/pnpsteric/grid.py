"""Uniform cell-centred meshes on a rectangle with two-point flux faces.

Cells are numbered row-major, ``index = j * nx + i`` with ``i`` the x index.
In 1D the mesh is a strip of unit height (``ny = 1``, ``h_y = Ly = 1``) so
that cell volumes and transmissibilities follow the same formulas as in 2D.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SIDES_1D = ("left", "right")
SIDES_2D = ("left", "right", "bottom", "top")


@dataclass(frozen=True)
class SideBC:
    """Boundary tag for the potential on one side of the rectangle."""

    kind: str = "neumann"
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("dirichlet", "neumann"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")


@dataclass(frozen=True)
class BoundarySpec:
    left: SideBC = SideBC()
    right: SideBC = SideBC()
    bottom: SideBC = SideBC()
    top: SideBC = SideBC()

    @classmethod
    def all_neumann(cls):
        return cls()

    @classmethod
    def dirichlet_x(cls, left: float, right: float):
        """Dirichlet on left/right, Neumann on bottom/top."""
        return cls(left=SideBC("dirichlet", left), right=SideBC("dirichlet", right))


@dataclass(frozen=True, eq=False)
class Grid:
    """Structured mesh plus its face lists.

    Interior faces are stored as parallel arrays ``face_k``, ``face_l``,
    ``face_t`` (transmissibility).  Boundary faces carry the owning cell, the
    side name, the half-cell transmissibility ``2 h_perp / h_normal``, a
    Dirichlet mask and the Dirichlet trace value (0 on Neumann faces).
    """

    dim: int
    nx: int
    ny: int
    lx: float
    ly: float
    boundary: BoundarySpec
    hx: float = field(init=False)
    hy: float = field(init=False)
    cell_volume: float = field(init=False)
    face_k: np.ndarray = field(init=False, repr=False)
    face_l: np.ndarray = field(init=False, repr=False)
    face_t: np.ndarray = field(init=False, repr=False)
    bface_cell: np.ndarray = field(init=False, repr=False)
    bface_side: tuple = field(init=False, repr=False)
    bface_t: np.ndarray = field(init=False, repr=False)
    bface_dirichlet: np.ndarray = field(init=False, repr=False)
    bface_value: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        hx = self.lx / self.nx
        hy = self.ly / self.ny
        set_("hx", hx)
        set_("hy", hy)
        set_("cell_volume", hx * hy)
        nx, ny = self.nx, self.ny
        idx = np.arange(nx * ny).reshape(ny, nx)

        kx, lx_ = idx[:, :-1].ravel(), idx[:, 1:].ravel()
        ky, ly_ = idx[:-1, :].ravel(), idx[1:, :].ravel()
        set_("face_k", np.concatenate([kx, ky]))
        set_("face_l", np.concatenate([lx_, ly_]))
        set_("face_t", np.concatenate([np.full(kx.size, hy / hx), np.full(ky.size, hx / hy)]))

        cells, sides, trans = [], [], []
        side_cells = {
            "left": (idx[:, 0], 2 * hy / hx),
            "right": (idx[:, -1], 2 * hy / hx),
            "bottom": (idx[0, :], 2 * hx / hy),
            "top": (idx[-1, :], 2 * hx / hy),
        }
        for side in self.sides:
            c, t = side_cells[side]
            cells.append(c)
            sides.extend([side] * c.size)
            trans.append(np.full(c.size, t))
        set_("bface_cell", np.concatenate(cells))
        set_("bface_side", tuple(sides))
        set_("bface_t", np.concatenate(trans))
        bcs = [getattr(self.boundary, s) for s in sides]
        set_("bface_dirichlet", np.array([bc.kind == "dirichlet" for bc in bcs]))
        set_("bface_value", np.array([bc.value if bc.kind == "dirichlet" else 0.0 for bc in bcs]))
        for name in ("face_k", "face_l", "face_t", "bface_cell", "bface_t",
                     "bface_dirichlet", "bface_value"):
            getattr(self, name).setflags(write=False)

    @property
    def sides(self):
        return SIDES_1D if self.dim == 1 else SIDES_2D

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def n_interior_faces(self) -> int:
        return self.face_k.size

    @property
    def n_boundary_faces(self) -> int:
        return self.bface_cell.size

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def pure_neumann(self) -> bool:
        return not bool(self.bface_dirichlet.any())

    @property
    def diameter(self) -> float:
        return float(np.hypot(self.lx, self.ly)) if self.dim == 2 else self.lx

    def centers(self):
        """Cell-centre coordinates ``(x, y)``; ``y`` is 0 in 1D."""
        x = (np.arange(self.nx) + 0.5) * self.hx
        if self.dim == 1:
            return x, np.zeros(self.nx)
        y = (np.arange(self.ny) + 0.5) * self.hy
        xx, yy = np.meshgrid(x, y)
        return xx.ravel(), yy.ravel()

    def interior_faces(self):
        """List of ``(cellK, cellL, transmissibility)`` in enumeration order."""
        return list(zip(self.face_k.tolist(), self.face_l.tolist(), self.face_t.tolist()))

    def boundary_faces(self):
        """List of ``(cell, side, transmissibility, tag)``; tag is ``("dirichlet", value)`` or ``("neumann", None)``."""
        out = []
        for c, s, t, d, v in zip(self.bface_cell.tolist(), self.bface_side, self.bface_t.tolist(),
                                 self.bface_dirichlet.tolist(), self.bface_value.tolist()):
            out.append((c, s, t, ("dirichlet", v) if d else ("neumann", None)))
        return out


def build_grid(dim: int, nx: int, ny: int = 1, lx: float = 1.0, ly: float = 1.0,
               boundary: BoundarySpec | None = None) -> Grid:
    """Construct a uniform mesh; ``ny`` and ``ly`` are forced to 1 in 1D."""
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    if dim == 1:
        ny, ly = 1, 1.0
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"cell counts must be positive integers, got nx={nx}, ny={ny}")
    if not (lx > 0 and ly > 0):
        raise ValueError(f"domain lengths must be positive, got lx={lx}, ly={ly}")
    return Grid(dim, int(nx), int(ny), float(lx), float(ly), boundary or BoundarySpec())


def _check_size(grid, f):
    f = np.asarray(f, dtype=float)
    if f.shape[0] != grid.n_cells:
        raise ValueError(f"field has {f.shape[0]} entries, grid has {grid.n_cells} cells")
    return f


def cell_integral(grid: Grid, f) -> float | np.ndarray:
    """Discrete integral ``cell_volume * sum(f)`` (per column for 2D arrays)."""
    f = _check_size(grid, f)
    return grid.cell_volume * f.sum(axis=0)


def face_jumps(grid: Grid, f):
    """Differences ``f_K - f_L`` over interior faces."""
    f = _check_size(grid, f)
    return f[grid.face_k] - f[grid.face_l]


def dirichlet_energy(grid: Grid, f, boundary_values=None) -> float:
    """Half the discrete H1 seminorm squared, with Dirichlet faces included.

    Boundary jumps are ``f_cell - trace`` on Dirichlet faces only; the
    trace defaults to zero, which is the form used for ``phi - phi_D``.
    """
    f = _check_size(grid, f)
    jumps = f[grid.face_k] - f[grid.face_l]
    total = float(np.dot(grid.face_t, jumps * jumps))
    mask = grid.bface_dirichlet
    if mask.any():
        trace = np.zeros(grid.n_boundary_faces) if boundary_values is None else \
            np.broadcast_to(np.asarray(boundary_values, dtype=float), (grid.n_boundary_faces,))
        bj = f[grid.bface_cell[mask]] - trace[mask]
        total += float(np.dot(grid.bface_t[mask], bj * bj))
    return 0.5 * total


def restrict(fine: Grid, coarse: Grid, f) -> np.ndarray:
    """Average a fine-grid field onto a coarse grid nested inside it."""
    f = _check_size(fine, f)
    rx, ry = fine.nx // coarse.nx, fine.ny // coarse.ny
    if rx * coarse.nx != fine.nx or ry * coarse.ny != fine.ny:
        raise ValueError("grids are not nested")
    tail = f.shape[1:]
    blocks = f.reshape((coarse.ny, ry, coarse.nx, rx) + tail)
    return blocks.mean(axis=(1, 3)).reshape((coarse.n_cells,) + tail)
