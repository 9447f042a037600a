"""Two-point-flux Laplacian and Poisson solvers.

``L`` is the integrated form of ``-Laplace``: ``(L f)_K`` is the sum of
``T_f (f_K - f_L)`` over the faces of cell ``K`` with Dirichlet faces folded
into the diagonal.  The trace contribution ``b_K = sum T_b * trace`` is kept
separate, so a Poisson problem reads ``L phi = vol * rho + b``.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import CompatibilityError, SolverError
from .grid import Grid, cell_integral
from .model import ModelParams, NewtonSettings, concentrations, F_jacobian


class LaplaceOperator:
    """Assembled symmetric operator plus the Dirichlet bookkeeping."""

    def __init__(self, grid: Grid, matrix: sp.csr_matrix):
        self.grid = grid
        self.matrix = matrix
        self.pure_neumann = grid.pure_neumann

    def trace_rhs(self, traces=None) -> np.ndarray:
        """Vector ``b`` with ``b_K = sum_{Dirichlet faces of K} T_b * trace``."""
        g = self.grid
        trace = g.bface_value if traces is None else \
            np.broadcast_to(np.asarray(traces, dtype=float), (g.n_boundary_faces,))
        mask = g.bface_dirichlet
        b = np.zeros(g.n_cells)
        np.add.at(b, g.bface_cell[mask], g.bface_t[mask] * trace[mask])
        return b

    @cached_property
    def _solver(self):
        if self.pure_neumann:
            # bordered system fixes the additive constant through a multiplier
            n = self.grid.n_cells
            ones = sp.csr_matrix(np.ones((n, 1)))
            aug = sp.bmat([[self.matrix, ones], [ones.T, None]], format="csc")
            return spla.factorized(aug)
        return spla.factorized(self.matrix.tocsc())

    def solve(self, rhs):
        """Solve ``L x = rhs``; pure Neumann returns the mean-zero solution."""
        rhs = np.asarray(rhs, dtype=float)
        if self.pure_neumann:
            x = self._solver(np.append(rhs - rhs.mean(), 0.0))[:-1]
            return x - x.mean()
        return self._solver(rhs)


def assemble_laplacian(grid: Grid) -> LaplaceOperator:
    """Assemble the 5-point (3-point in 1D) finite-volume operator."""
    n = grid.n_cells
    k, l, t = grid.face_k, grid.face_l, grid.face_t
    diag = np.zeros(n)
    np.add.at(diag, k, t)
    np.add.at(diag, l, t)
    mask = grid.bface_dirichlet
    np.add.at(diag, grid.bface_cell[mask], grid.bface_t[mask])
    rows = np.concatenate([k, l])
    cols = np.concatenate([l, k])
    vals = np.concatenate([-t, -t])
    off = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    matrix = (off + sp.diags(diag)).tocsr()
    matrix.sort_indices()
    return LaplaceOperator(grid, matrix)


def _check_compatible(grid, charge):
    total = float(cell_integral(grid, charge))
    if abs(total) > 1e-10 * (1.0 + float(np.max(np.abs(charge)))):
        raise CompatibilityError(
            f"pure-Neumann Poisson problem needs zero total charge, got {total:.3e}")


def solve_poisson_linear(op: LaplaceOperator, charge, traces=None) -> np.ndarray:
    """Solve ``-Laplace(phi) = charge`` with the operator's boundary tags.

    Raises CompatibilityError for a pure-Neumann problem whose charge does
    not integrate to zero.  The pure-Neumann solution is centred.
    """
    g = op.grid
    charge = np.asarray(charge, dtype=float)
    if charge.shape != (g.n_cells,):
        raise ValueError("charge must have one entry per cell")
    if op.pure_neumann:
        _check_compatible(g, charge)
    rhs = g.cell_volume * charge + op.trace_rhs(traces)
    phi = op.solve(rhs)
    res = op.matrix @ phi - rhs
    if op.pure_neumann:
        res -= res.mean()
    scale = 1.0 + float(np.max(np.abs(rhs))) + float(np.max(np.abs(op.matrix @ phi)))
    if not np.all(np.isfinite(phi)) or np.max(np.abs(res)) > 1e-11 * scale:
        raise SolverError("linear Poisson solve failed", residual=float(np.max(np.abs(res))))
    return phi


def harmonic_extension(op: LaplaceOperator, traces=None) -> np.ndarray:
    """Discrete harmonic lifting of the Dirichlet data (zero if pure Neumann)."""
    if op.pure_neumann:
        return np.zeros(op.grid.n_cells)
    return solve_poisson_linear(op, np.zeros(op.grid.n_cells), traces)


def total_charge(params: ModelParams, u) -> np.ndarray:
    return np.asarray(u) @ params.z


def solve_poisson_semilinear(params: ModelParams, op: LaplaceOperator, w, traces=None,
                             settings: NewtonSettings | None = None, phi0=None) -> np.ndarray:
    """Solve ``L phi = vol * sum_i z_i u_i(w, phi) + b`` by damped Newton.

    The charge is decreasing in ``phi`` so the Jacobian
    ``L + vol * diag(z^T F'(u)^{-1} z)`` is SPD.  In the pure-Neumann case the
    constant mode is fixed by charge neutrality rather than a gauge.

    Parameters
    ----------
    w : ndarray, shape (n_cells, n_species)
    phi0 : ndarray, optional
        Starting iterate; defaults to zero.
    """
    settings = settings or NewtonSettings()
    g = op.grid
    w = np.asarray(w, dtype=float)
    vol = g.cell_volume
    b = op.trace_rhs(traces)
    z = params.z
    if not np.any(z):
        u = concentrations(params, w, np.zeros(g.n_cells), settings)
        return solve_poisson_linear(op, total_charge(params, u), traces)

    phi = np.zeros(g.n_cells) if phi0 is None else np.array(phi0, dtype=float)
    L = op.matrix

    def residual(p):
        u = concentrations(params, w, p, settings)
        return L @ p - vol * total_charge(params, u) - b, u

    r, u = residual(phi)
    nrm = float(np.max(np.abs(r)))
    history = [nrm]
    for it in range(settings.max_iter):
        scale = 1.0 + float(np.max(np.abs(b))) + vol * float(np.max(np.abs(total_charge(params, u))))
        if nrm <= settings.tol * scale:
            return phi
        binv_z = np.linalg.solve(F_jacobian(params, u), np.broadcast_to(z, u.shape)[..., None])[..., 0]
        dcharge = binv_z @ z  # z^T F'^{-1} z >= 0
        jac = (L + sp.diags(vol * dcharge)).tocsc()
        try:
            step = -spla.spsolve(jac, r)
        except RuntimeError as exc:  # singular factor
            raise SolverError(f"semilinear Poisson: {exc}", residual=nrm, history=history) from exc
        lam = 1.0
        for _ in range(settings.max_halvings + 1):
            trial = phi + lam * step
            try:
                tr, tu = residual(trial)
                tn = float(np.max(np.abs(tr)))
            except SolverError:
                tn = np.inf
            if tn < nrm:
                break
            lam *= 0.5
        else:
            if nrm <= 1e3 * settings.tol * scale:
                return phi
            raise SolverError("semilinear Poisson: line search failed",
                              residual=nrm, history=history, iterations=it)
        phi, r, u, nrm = trial, tr, tu, tn
        history.append(nrm)
    raise SolverError("semilinear Poisson: no convergence", residual=nrm,
                      history=history, iterations=settings.max_iter)
