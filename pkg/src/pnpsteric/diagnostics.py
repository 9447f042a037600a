"""Entropy functionals, relative entropies and decay estimates.

Every gradient term uses :func:`grid.dirichlet_energy` with the Poisson
transmissibilities, so discrete summation by parts against the assembled
operator is exact and the entropy identities hold to round-off.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import xlogy

from .errors import DomainError, FitError, UnsupportedConfiguration
from .flux import production
from .grid import Grid, cell_integral, dirichlet_energy
from .model import ModelParams


@dataclass(frozen=True)
class DiagnosticsRecord:
    step: int
    time: float
    H_BR: float
    H_R: float
    production: float
    masses: tuple
    u_min: float
    u_max: float
    phi_min: float
    phi_max: float
    H_rel_BR: Optional[float] = None


@dataclass(frozen=True)
class DecayTheory:
    """Theoretical rate ``sigma * min(2, 4 C_L sigma, C(a))`` and its ingredients."""

    rate: float
    terms: tuple
    C_P: float
    C_L: float


@dataclass(frozen=True)
class DecayFit:
    rate: float
    intercept: float
    r_squared: float
    window: tuple
    lambda_theory: Optional[DecayTheory] = None


def _quadratic(params, u):
    # 0.5 * sum_ij a_ij u_i u_j per cell
    return 0.5 * np.einsum("...i,ij,...j->...", u, params.a, u)


def entropy_R(params: ModelParams, grid: Grid, state, phi_D) -> float:
    """Rao entropy: electric energy, steric mixing energy and boundary coupling."""
    u = np.asarray(state.u, dtype=float)
    phi_D = np.asarray(phi_D, dtype=float)
    local = _quadratic(params, u) + (u @ params.z) * phi_D
    return float(cell_integral(grid, local)) + dirichlet_energy(grid, state.phi - phi_D)


def entropy_BR(params: ModelParams, grid: Grid, state, phi_D) -> float:
    """Boltzmann-Rao entropy (uses ``0 log 0 = 0``)."""
    u = np.asarray(state.u, dtype=float)
    boltz = params.sigma * np.sum(xlogy(u, u) - u, axis=-1)
    return float(cell_integral(grid, boltz)) + entropy_R(params, grid, state, phi_D)


def entropy_production(params: ModelParams, grid: Grid, state, config=None, mobility=None) -> float:
    """Discrete production ``sum_i sum_faces T m (w_iK - w_iL)^2``.

    The face mean comes from ``mobility`` or ``config.mobility`` (arithmetic
    if neither is given).
    """
    kind = mobility or getattr(config, "mobility", None) or "arithmetic"
    return production(grid, np.asarray(state.u), np.asarray(state.w), kind)


def production_decomposition(params: ModelParams, u, grad_u, grad_phi):
    """Pointwise expansion of ``sum_i u_i |grad w_i|^2``.

    ``grad_u`` has shape ``(n, d)`` and ``grad_phi`` shape ``(d,)``.  Returns
    ``(lhs, (fisher, drift, cross_steric, cross_electric))`` where

    * ``fisher = 4 sigma^2 sum |grad sqrt(u_i)|^2``
    * ``drift = sum u_i |grad p_i + z_i grad phi|^2``
    * ``cross_steric = 2 sigma sum_ij a_ij grad u_i . grad u_j``
    * ``cross_electric = 2 sigma sum_i z_i grad u_i . grad phi``

    and the four terms add up to ``lhs``.
    """
    u = np.asarray(u, dtype=float)
    g = np.atleast_2d(np.asarray(grad_u, dtype=float))
    gp = np.asarray(grad_phi, dtype=float).reshape(-1)
    if not np.all(u > 0):
        raise DomainError("production_decomposition requires u > 0")
    sig, a, z = params.sigma, params.a, params.z
    q = a @ g + np.outer(z, gp)
    grad_w = sig * g / u[:, None] + q
    lhs = float(np.sum(u * np.sum(grad_w ** 2, axis=1)))
    sqrt_grad = g / (2.0 * np.sqrt(u))[:, None]
    fisher = float(4.0 * sig ** 2 * np.sum(sqrt_grad ** 2))
    drift = float(np.sum(u * np.sum(q ** 2, axis=1)))
    cross_steric = float(2.0 * sig * np.sum(a * (g @ g.T)))
    cross_electric = float(2.0 * sig * np.sum(z * (g @ gp)))
    return lhs, (fisher, drift, cross_steric, cross_electric)


def _require_neumann(grid, what):
    if not grid.pure_neumann:
        raise UnsupportedConfiguration(f"{what} is only defined for pure-Neumann potentials")


def equilibrium_state(params: ModelParams, grid: Grid, u0):
    """Constant thermal equilibrium ``(u_inf, phi_inf = 0)`` of a pure-Neumann run."""
    _require_neumann(grid, "equilibrium_state")
    u_inf = cell_integral(grid, np.asarray(u0, dtype=float)) / grid.area
    return np.asarray(u_inf, dtype=float), np.zeros(grid.n_cells)


def relative_entropy_BR(params: ModelParams, grid: Grid, state, u_inf) -> float:
    """Relative Boltzmann-Rao entropy to the constant equilibrium (nonnegative)."""
    _require_neumann(grid, "relative_entropy_BR")
    u_inf = np.asarray(u_inf, dtype=float)
    if not np.all(u_inf > 0):
        raise DomainError("u_inf must be strictly positive")
    u = np.asarray(state.u, dtype=float)
    d = u - u_inf
    boltz = params.sigma * np.sum(xlogy(u, u / u_inf) - d, axis=-1)
    local = boltz + _quadratic(params, d)
    return float(cell_integral(grid, local)) + dirichlet_energy(grid, state.phi)


def relative_entropy_R(params: ModelParams, grid: Grid, state, ref_state) -> float:
    """Quadratic form of the relative Rao entropy between two states.

    Both potentials must solve the discrete Poisson problem with the same
    boundary data; the Dirichlet traces then cancel in ``phi - phi_ref``.
    """
    u, ubar = np.asarray(state.u), np.asarray(ref_state.u)
    if u.shape != ubar.shape or np.shape(state.phi) != np.shape(ref_state.phi):
        raise ValueError("states live on different grids")
    d = u - ubar
    return float(cell_integral(grid, _quadratic(params, d))) + \
        dirichlet_energy(grid, np.asarray(state.phi) - np.asarray(ref_state.phi))


def relative_entropy_R_bregman(params: ModelParams, grid: Grid, state, ref_state, phi_D) -> float:
    """``H_R(u) - H_R(ubar) - <H_R'(ubar), u - ubar>`` evaluated term by term.

    The derivative is ``z_i phi_bar + p_i(ubar)``.  Independent route to
    :func:`relative_entropy_R`.
    """
    ubar = np.asarray(ref_state.u)
    deriv = np.asarray(ref_state.phi)[:, None] * params.z + ubar @ params.a.T
    pairing = float(cell_integral(grid, np.sum(deriv * (np.asarray(state.u) - ubar), axis=1)))
    return entropy_R(params, grid, state, phi_D) - entropy_R(params, grid, ref_state, phi_D) - pairing


def rao_inequality_defect(params: ModelParams, grid: Grid, prev, cur, tau, phi_D) -> float:
    """Discrete Rao entropy balance over one step (positive means violated).

    Returns ``H_R(u^k) + tau * (steric + drift dissipation) - H_R(u^{k-1})
    + tau * sigma * sum_i z_i <grad u_i, grad phi>`` with gradients taken as
    face jumps weighted by the transmissibilities.
    """
    k, l, t = grid.face_k, grid.face_l, grid.face_t
    u, phi = np.asarray(cur.u), np.asarray(cur.phi)
    du = u[k] - u[l]
    dphi = phi[k] - phi[l]
    steric = params.sigma * float(np.sum(t * np.einsum("fi,ij,fj->f", du, params.a, du)))
    pot = u @ params.a.T + phi[:, None] * params.z
    dpot = pot[k] - pot[l]
    m = 0.5 * (u[k] + u[l])
    drift = float(np.sum(t[:, None] * m * dpot ** 2))
    cross = params.sigma * float(np.sum(t * (du @ params.z) * dphi))
    lhs = entropy_R(params, grid, cur, phi_D) + tau * (steric + drift)
    rhs = entropy_R(params, grid, prev, phi_D) - tau * cross
    return lhs - rhs


def decay_theory_constant(params: ModelParams, grid: Grid) -> DecayTheory:
    """Rate ``sigma * min(2, 4 C_L sigma, C(a))`` for a rectangle.

    ``C_P = (L_max / pi)^2`` (Poincare-Wirtinger), ``C_L = pi^2 / (2 diam^2)``
    and ``C(a) = 2 alpha / (C_P max|a_ij|)``.  ``C_L`` is a conservative
    choice, so the result is informative rather than certified.
    """
    _require_neumann(grid, "decay_theory_constant")
    length = grid.lx if grid.dim == 1 else max(grid.lx, grid.ly)
    C_P = (length / np.pi) ** 2
    C_L = np.pi ** 2 / (2.0 * grid.diameter ** 2)
    C_a = 2.0 * params.alpha / (C_P * float(np.max(np.abs(params.a))))
    terms = (2.0, 4.0 * C_L * params.sigma, C_a)
    return DecayTheory(rate=params.sigma * min(terms), terms=terms, C_P=C_P, C_L=C_L)


def fit_decay(times, values, window=None) -> DecayFit:
    """Least-squares fit of ``log H = intercept - rate * t``.

    ``window=(t_lo, t_hi)`` selects samples; by default the first and last
    10% of samples are dropped.
    """
    t = np.asarray(times, dtype=float)
    h = np.asarray(values, dtype=float)
    if t.shape != h.shape:
        raise FitError("times and values differ in length")
    if window is None:
        cut = int(0.1 * t.size)
        sel = np.arange(cut, t.size - cut)
    else:
        sel = np.flatnonzero((t >= window[0]) & (t <= window[1]))
    if sel.size < 5:
        raise FitError(f"need at least 5 samples in the fit window, got {sel.size}")
    tw, hw = t[sel], h[sel]
    if np.any(hw <= 0):
        raise FitError("nonpositive relative entropy in window (already equilibrated)")
    y = np.log(hw)
    slope, intercept = np.polyfit(tw, y, 1)
    ss_res = float(np.sum((y - (slope * tw + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return DecayFit(rate=float(-slope), intercept=float(intercept), r_squared=r2,
                    window=(float(tw[0]), float(tw[-1])))


@dataclass
class DiagnosticsContext:
    """Per-run constants needed to turn states into records."""

    params: ModelParams
    grid: Grid
    phi_D: np.ndarray
    mobility: str = "arithmetic"
    u_inf: Optional[np.ndarray] = None

    @classmethod
    def build(cls, params, grid, op, initial_state, mobility="arithmetic"):
        from .elliptic import harmonic_extension

        u_inf = None
        if grid.pure_neumann:
            u_inf, _ = equilibrium_state(params, grid, initial_state.u)
        return cls(params, grid, harmonic_extension(op), mobility, u_inf)

    def record(self, state) -> DiagnosticsRecord:
        p, g = self.params, self.grid
        h_rel = None if self.u_inf is None else relative_entropy_BR(p, g, state, self.u_inf)
        return DiagnosticsRecord(
            step=int(state.step),
            time=float(state.time),
            H_BR=entropy_BR(p, g, state, self.phi_D),
            H_R=entropy_R(p, g, state, self.phi_D),
            production=entropy_production(p, g, state, mobility=self.mobility),
            masses=tuple(float(m) for m in cell_integral(g, state.u)),
            u_min=float(np.min(state.u)),
            u_max=float(np.max(state.u)),
            phi_min=float(np.min(state.phi)),
            phi_max=float(np.max(state.phi)),
            H_rel_BR=h_rel,
        )
