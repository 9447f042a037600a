"""Physical parameters and the pointwise entropy-variable map.

All functions accept either a single vector of length ``n_species`` or a
batch of shape ``(m, n_species)`` (one row per cell).  The map

    F_i(u) = sigma * log(u_i) + sum_j a_ij u_j

is strictly monotone on the positive orthant, so the electro-chemical
potentials ``w = F(u) + z * phi`` determine the concentrations uniquely.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SolverError

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class ModelParams:
    """Diffusion coefficient, ionic charges and steric interaction matrix.

    ``a`` must be symmetric (to round-off) and positive definite; it is
    symmetrized bitwise on construction and its smallest eigenvalue is kept
    as ``alpha``.
    """

    sigma: float
    z: np.ndarray
    a: np.ndarray
    alpha: float = field(init=False)

    def __post_init__(self):
        sigma = float(self.sigma)
        z = np.array(self.z, dtype=float).reshape(-1)
        a = np.array(self.a, dtype=float)
        n = z.size
        if n < 1:
            raise ValueError("z: at least one species required")
        if not (np.isfinite(sigma) and sigma > 0):
            raise ValueError(f"sigma: must be positive, got {sigma}")
        if a.shape != (n, n):
            raise ValueError(f"a: expected shape {(n, n)}, got {a.shape}")
        if not np.all(np.isfinite(a)) or not np.all(np.isfinite(z)):
            raise ValueError("a, z: entries must be finite")
        if np.any(a < 0):
            raise ValueError("a: entries must be nonnegative")
        scale = max(1.0, float(np.max(np.abs(a))))
        if np.max(np.abs(a - a.T)) > 1e-12 * scale:
            raise ValueError("a: matrix is not symmetric")
        a = 0.5 * (a + a.T)
        try:
            np.linalg.cholesky(a)
        except np.linalg.LinAlgError:
            raise ValueError("a: matrix is not positive definite") from None
        alpha = float(np.linalg.eigvalsh(a)[0])
        if alpha <= 0:
            raise ValueError("a: matrix is not positive definite")
        a.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "alpha", alpha)

    @property
    def n_species(self) -> int:
        return self.z.size


@dataclass(frozen=True)
class NewtonSettings:
    """Tolerances for the damped Newton iterations.

    ``tol`` is an absolute residual bound for :func:`invert_F` and a relative
    one (scaled by the size of the right-hand side) for the grid solvers.
    """

    tol: float = 1e-12
    max_iter: int = 100
    max_halvings: int = 40
    dt_halving: int = 4

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


def _check_length(params, u):
    u = np.asarray(u, dtype=float)
    if u.ndim == 0 or u.shape[-1] != params.n_species:
        raise ValueError(
            f"expected trailing dimension {params.n_species}, got shape {u.shape}"
        )
    return u


def _check_positive(u):
    if not np.all(u > 0):
        raise DomainError("concentrations must be strictly positive")


def steric_potential(params: ModelParams, u) -> np.ndarray:
    """Return ``p_i(u) = sum_j a_ij u_j``."""
    u = _check_length(params, u)
    return u @ params.a.T


def F_map(params: ModelParams, u) -> np.ndarray:
    """Return ``sigma * log(u) + p(u)``; raises DomainError unless ``u > 0``."""
    u = _check_length(params, u)
    _check_positive(u)
    return params.sigma * np.log(u) + steric_potential(params, u)


def F_jacobian(params: ModelParams, u) -> np.ndarray:
    """Jacobian ``sigma * diag(1/u) + a`` (shape ``(..., n, n)``), always SPD."""
    u = _check_length(params, u)
    _check_positive(u)
    jac = np.broadcast_to(params.a, u.shape + (params.n_species,)).copy()
    idx = np.arange(params.n_species)
    jac[..., idx, idx] += params.sigma / u
    return jac


def _log_residual(params, s, v):
    # F evaluated through s = log(u); positivity of exp(s) is unconditional
    with np.errstate(over="ignore", invalid="ignore"):
        u = np.exp(s)
        return params.sigma * s + u @ params.a.T - v, u


def _floor(params, s, u, v):
    # round-off floor of the residual evaluation
    with np.errstate(over="ignore", invalid="ignore"):
        mag = np.abs(params.sigma * s) + np.abs(u) @ params.a.T + np.abs(v)
    return 16.0 * _EPS * np.max(mag, axis=-1)


def _newton_log(params, v, s0, settings):
    """Damped Newton on ``sigma*s + a exp(s) = v`` for every row of ``v``."""
    s = s0.copy()
    n = params.n_species
    eye = np.eye(n)
    r, u = _log_residual(params, s, v)
    nrm = np.max(np.abs(r), axis=-1)
    nrm[~np.isfinite(nrm)] = np.inf
    done = nrm <= settings.tol + _floor(params, s, u, v)
    failed = np.zeros_like(done)
    for _ in range(settings.max_iter):
        act = np.flatnonzero(~done & ~failed)
        if act.size == 0:
            break
        sa, ua, ra = s[act], u[act], r[act]
        # d/ds_j [sigma s_i + sum_k a_ik e^{s_k}] = sigma delta_ij + a_ij e^{s_j}
        jac = params.sigma * eye + params.a[None, :, :] * ua[:, None, :]
        step = -np.linalg.solve(jac, ra[..., None])[..., 0]
        lam = np.ones(act.size)
        pending = np.arange(act.size)
        new_s = sa.copy()
        new_r = ra.copy()
        new_u = ua.copy()
        new_n = nrm[act].copy()
        for _h in range(settings.max_halvings + 1):
            trial = sa[pending] + lam[pending, None] * step[pending]
            tr, tu = _log_residual(params, trial, v[act[pending]])
            tn = np.max(np.abs(tr), axis=-1)
            ok = np.isfinite(tn) & (tn < nrm[act[pending]])
            good = pending[ok]
            new_s[good], new_r[good], new_u[good], new_n[good] = (
                trial[ok], tr[ok], tu[ok], tn[ok])
            pending = pending[~ok]
            if pending.size == 0:
                break
            lam[pending] *= 0.5
        s[act], r[act], u[act], nrm[act] = new_s, new_r, new_u, new_n
        stalled = act[pending]
        floor = _floor(params, s[act], u[act], v[act])
        done[act] = nrm[act] <= settings.tol + floor
        # no decrease possible: accept only if already at the round-off floor
        failed[stalled] = ~done[stalled]
    return s, nrm, done


def _bisect_scalar(params, v, tol):
    """Bracket and bisect log(u) for the single-species map."""
    sig, a = params.sigma, params.a[0, 0]

    def f(t):
        return sig * t + a * np.exp(t) - v

    lo, hi = -1.0, 1.0
    while f(lo) > 0:
        lo *= 2.0
    while f(hi) < 0:
        hi *= 2.0
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm) <= tol or hi - lo <= 4 * _EPS * max(1.0, abs(mid)):
            return mid
        if fm > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def invert_F(params: ModelParams, v, settings: NewtonSettings | None = None) -> np.ndarray:
    """Solve ``F(u) = v`` for ``u > 0``.

    Newton runs in ``s = log(u)`` with residual backtracking, first from
    ``exp((v - p(1)) / sigma)`` (clamped to [1e-12, 1e12]) and then from
    ``u = 1`` for any row that did not converge.  The scalar case falls back
    to bisection.

    Parameters
    ----------
    params : ModelParams
    v : array_like, shape (n,) or (m, n)
        Target values, must be finite.
    settings : NewtonSettings, optional

    Returns
    -------
    ndarray
        Strictly positive concentrations with the shape of ``v``.

    Raises
    ------
    SolverError
        If some row cannot be inverted; ``residual`` holds the worst norm.
    """
    settings = settings or NewtonSettings()
    v = _check_length(params, v)
    if not np.all(np.isfinite(v)):
        raise ValueError("invert_F: v must be finite")
    single = v.ndim == 1
    vb = np.atleast_2d(v).reshape(-1, params.n_species)
    row_sums = params.a.sum(axis=1)
    u0 = np.clip(np.exp(np.clip((vb - row_sums) / params.sigma, -700, 700)), 1e-12, 1e12)
    s, nrm, done = _newton_log(params, vb, np.log(u0), settings)
    if not done.all():
        bad = np.flatnonzero(~done)
        s2, n2, d2 = _newton_log(params, vb[bad], np.zeros((bad.size, params.n_species)), settings)
        s[bad], nrm[bad], done[bad] = s2, n2, d2
    if not done.all() and params.n_species == 1:
        for k in np.flatnonzero(~done):
            s[k, 0] = _bisect_scalar(params, vb[k, 0], settings.tol)
            r, uu = _log_residual(params, s[k], vb[k])
            nrm[k] = abs(r[0])
            done[k] = nrm[k] <= settings.tol + _floor(params, s[k], uu, vb[k])
    if not done.all():
        worst = float(np.max(nrm[~done]))
        raise SolverError(
            f"invert_F: {int((~done).sum())} rows did not converge", residual=worst)
    u = np.exp(s)
    assert np.all(u > 0), "invert_F produced a nonpositive concentration"
    return u[0] if single else u.reshape(v.shape)


def entropy_vars_from_state(params: ModelParams, u, phi) -> np.ndarray:
    """Entropy variables ``w_i = sigma log u_i + z_i phi + p_i(u)``."""
    phi = np.asarray(phi, dtype=float)
    return F_map(params, u) + phi[..., None] * params.z


def concentrations(params: ModelParams, w, phi, settings: NewtonSettings | None = None):
    """Concentrations ``u(w, phi) = F^{-1}(w - z phi)``."""
    phi = np.asarray(phi, dtype=float)
    return invert_F(params, np.asarray(w, dtype=float) - phi[..., None] * params.z, settings)
