"""Implicit Euler step in entropy variables and the time loop.

The unknowns of a step are the entropy variables ``w`` (one column per
species) and the potential ``phi``; concentrations are always recovered as
``u = F^{-1}(w - z phi)`` so they are positive by construction.  Species
fluxes across interior faces are ``T * m(u_K, u_L) * (w_K - w_L)``; there is
no flux through the boundary, hence cell sums telescope and mass is
conserved up to the nonlinear residual.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import diagnostics
from .elliptic import (LaplaceOperator, assemble_laplacian, solve_poisson_linear,
                       solve_poisson_semilinear)
from .errors import CompatibilityError, DomainError, SolverError
from .flux import MOBILITIES, face_mobility
from .grid import Grid, cell_integral
from .model import (ModelParams, NewtonSettings, F_jacobian, concentrations,
                    entropy_vars_from_state)

logger = logging.getLogger(__name__)

SOLVERS = ("gummel", "newton")


@dataclass(frozen=True, eq=False)
class State:
    """Snapshot of a run; ``u`` and ``w`` have shape ``(n_cells, n_species)``."""

    u: np.ndarray
    phi: np.ndarray
    w: np.ndarray
    time: float = 0.0
    step: int = 0


@dataclass(frozen=True)
class RunConfig:
    dt: float
    n_steps: int
    epsilon: float = 0.0
    mobility: str = "arithmetic"
    solver: str = "newton"
    output_every: int = 1
    snapshot_steps: tuple = ()
    newton: NewtonSettings = field(default_factory=NewtonSettings)
    max_sweeps: int = 50

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt: must be positive, got {self.dt}")
        if self.n_steps < 0:
            raise ValueError("n_steps: must be nonnegative")
        if not self.epsilon >= 0:
            raise ValueError("epsilon: must be nonnegative")
        if self.mobility not in MOBILITIES:
            raise ValueError(f"mobility: expected one of {MOBILITIES}")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver: expected one of {SOLVERS}")
        if self.output_every < 1:
            raise ValueError("output_every: must be at least 1")
        object.__setattr__(self, "snapshot_steps", tuple(int(s) for s in self.snapshot_steps))


@dataclass
class Sinks:
    """Callbacks invoked from the run loop (same thread)."""

    on_record: Optional[Callable] = None
    on_snapshot: Optional[Callable] = None
    on_step: Optional[Callable] = None


def initialize(params: ModelParams, grid: Grid, u0, op: LaplaceOperator | None = None) -> State:
    """Build the step-0 state: linear Poisson solve, then entropy variables."""
    op = op or assemble_laplacian(grid)
    u0 = np.array(u0, dtype=float)
    if u0.shape != (grid.n_cells, params.n_species):
        raise ValueError(f"u0 must have shape {(grid.n_cells, params.n_species)}, got {u0.shape}")
    if not np.all(u0 > 0):
        raise DomainError("initial concentrations must be strictly positive")
    if op.pure_neumann:
        q = float(np.dot(params.z, cell_integral(grid, u0)))
        if abs(q) > 1e-10 * (1.0 + float(np.max(np.abs(u0 @ params.z)))):
            raise CompatibilityError(f"pure-Neumann data must be charge neutral, got {q:.3e}")
    phi = solve_poisson_linear(op, u0 @ params.z) if params.z.any() or not op.pure_neumann \
        else np.zeros(grid.n_cells)
    w = entropy_vars_from_state(params, u0, phi)
    return State(u=u0, phi=phi, w=w, time=0.0, step=0)


class _StepProblem:
    """Residuals and Jacobian blocks of one implicit step of size ``tau``."""

    def __init__(self, params, grid, op, prev, tau, config):
        self.params, self.grid, self.op, self.prev = params, grid, op, prev
        self.tau = tau
        self.eps = config.epsilon
        self.mobility = config.mobility
        self.inner = NewtonSettings()
        self.b = op.trace_rhs()
        self.vol = grid.cell_volume
        self.N, self.n = grid.n_cells, params.n_species
        k, l, t = grid.face_k, grid.face_l, grid.face_t
        self.k, self.l, self.t = k, l, t
        # regularization uses the no-flux graph Laplacian for w
        deg = np.zeros(self.N)
        np.add.at(deg, k, t)
        np.add.at(deg, l, t)
        self.lap_w = (sp.coo_matrix((np.concatenate([-t, -t]), (np.concatenate([k, l]), np.concatenate([l, k]))),
                                    shape=(self.N, self.N)) + sp.diags(deg)).tocsr()
        self.scale_s = self.vol * float(np.max(np.abs(prev.u))) + 1e-300
        self.scale_p = 1.0 + float(np.max(np.abs(self.b))) + self.vol * float(np.max(np.abs(prev.u @ params.z)))

    def u_of(self, w, phi):
        return concentrations(self.params, w, phi, self.inner)

    def species(self, w, u):
        """``tau * R_species``: ``vol (u - u_prev) + tau * (div flux + eps (L w + vol w))``."""
        m, _, _ = face_mobility(u, w, self.k, self.l, self.mobility)
        flux = self.t[:, None] * m * (w[self.k] - w[self.l])
        div = np.zeros_like(w)
        np.add.at(div, self.k, flux)
        np.subtract.at(div, self.l, flux)
        res = self.vol * (u - self.prev.u) + self.tau * div
        if self.eps:
            res += self.tau * self.eps * (self.lap_w @ w + self.vol * w)
        return res

    def poisson(self, phi, u):
        return self.op.matrix @ phi - self.vol * (u @ self.params.z) - self.b

    def norm(self, rs, rp=None):
        val = float(np.max(np.abs(rs))) / self.scale_s
        if rp is not None:
            val = max(val, float(np.max(np.abs(rp))) / self.scale_p)
        return val

    def jacobian(self, w, u, with_phi):
        """Sparse Jacobian in (w) or (w, phi) ordering ``K*n + i`` then ``N*n + K``."""
        N, n, tau, vol = self.N, self.n, self.tau, self.vol
        z = self.params.z
        B = np.linalg.inv(F_jacobian(self.params, u))  # du/dw per cell
        idx = np.arange(N * n).reshape(N, n)
        eye = np.eye(n)
        rows, cols, vals = [], [], []

        def add(r, c, v):
            rows.append(np.broadcast_to(r, v.shape).ravel())
            cols.append(np.broadcast_to(c, v.shape).ravel())
            vals.append(v.ravel())

        add(idx[:, :, None], idx[:, None, :], vol * B)
        k, l, t = self.k, self.l, self.t
        if k.size:
            m, dmk, dml = face_mobility(u, w, k, l, self.mobility)
            dw = w[k] - w[l]
            AK = t[:, None, None] * (m[:, :, None] * eye + (dw * dmk)[:, :, None] * B[k])
            AL = t[:, None, None] * (-m[:, :, None] * eye + (dw * dml)[:, :, None] * B[l])
            rk, rl = idx[k][:, :, None], idx[l][:, :, None]
            ck, cl = idx[k][:, None, :], idx[l][:, None, :]
            add(rk, ck, tau * AK)
            add(rk, cl, tau * AL)
            add(rl, ck, -tau * AK)
            add(rl, cl, -tau * AL)
        if self.eps:
            lw = sp.kron(self.lap_w, sp.identity(n)) * (tau * self.eps)
            lw = lw + sp.identity(N * n) * (tau * self.eps * vol)
            lw = lw.tocoo()
            rows.append(lw.row)
            cols.append(lw.col)
            vals.append(lw.data)
        size = N * n
        if with_phi:
            cz = -(B @ z)  # du/dphi, shape (N, n)
            pidx = size + np.arange(N)
            add(idx, pidx[:, None], vol * cz)
            if k.size:
                add(idx[k], pidx[k][:, None], tau * t[:, None] * dw * dmk * cz[k])
                add(idx[l], pidx[k][:, None], -tau * t[:, None] * dw * dmk * cz[k])
                add(idx[k], pidx[l][:, None], tau * t[:, None] * dw * dml * cz[l])
                add(idx[l], pidx[l][:, None], -tau * t[:, None] * dw * dml * cz[l])
            L = self.op.matrix.tocoo()
            rows.append(size + L.row)
            cols.append(size + L.col)
            vals.append(L.data)
            add(pidx, pidx, -vol * (cz @ z))
            add(pidx[:, None], idx, vol * cz)
            size += N
        return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(size, size)).tocsc()


def step_residual(params: ModelParams, grid: Grid, op: LaplaceOperator, state_prev: State,
                  w, phi, config: RunConfig):
    """Residuals of the discrete step at a trial ``(w, phi)``.

    Returns ``(species, poisson)`` where ``species[K, i]`` is
    ``vol (u_iK - u_prev_iK) / tau + sum_faces T m (w_iK - w_iL) + eps (L w_i + vol w_i)_K``
    and ``poisson = L phi - vol * sum_i z_i u_i - b``.
    """
    prob = _StepProblem(params, grid, op, state_prev, config.dt, config)
    w = np.asarray(w, dtype=float)
    phi = np.asarray(phi, dtype=float)
    u = prob.u_of(w, phi)
    return prob.species(w, u) / config.dt, prob.poisson(phi, u)


def _newton_species(prob, w, phi, settings, history):
    """Damped Newton on the species block with ``phi`` frozen."""
    u = prob.u_of(w, phi)
    rs = prob.species(w, u)
    nrm = prob.norm(rs)
    for _ in range(settings.max_iter):
        if nrm <= settings.tol:
            return w, u, nrm
        jac = prob.jacobian(w, u, with_phi=False)
        dw = -spla.spsolve(jac, rs.ravel()).reshape(w.shape)
        w, u, rs, nrm = _line_search(prob, settings, nrm, lambda lam: (w + lam * dw, phi), history)
    if nrm <= settings.tol:
        return w, u, nrm
    raise SolverError("species Newton did not converge", residual=nrm, history=history)


def _line_search(prob, settings, nrm, trial_fn, history, with_phi=False):
    lam = 1.0
    for _ in range(settings.max_halvings + 1):
        tw, tphi = trial_fn(lam)
        try:
            tu = prob.u_of(tw, tphi)
            trs = prob.species(tw, tu)
            trp = prob.poisson(tphi, tu) if with_phi else None
            tn = prob.norm(trs, trp)
        except SolverError:
            tn = np.inf
        if np.isfinite(tn) and tn < nrm:
            history.append(tn)
            if with_phi:
                return tw, tphi, tu, trs, trp, tn
            return tw, tu, trs, tn
        lam *= 0.5
    raise SolverError("line search failed", residual=nrm, history=history)


def _regauge(prob, w, phi):
    """Shift ``(w, phi) -> (w - z c, phi - c)`` so that ``phi`` has zero mean; ``u`` is unchanged."""
    c = float(phi.mean())
    return w - c * prob.params.z, phi - c


def _solve_gummel(prob, settings, max_sweeps):
    w, phi = prob.prev.w.copy(), prob.prev.phi.copy()
    history = []
    for sweep in range(max_sweeps):
        w, u, _ = _newton_species(prob, w, phi, settings, history)
        phi = solve_poisson_semilinear(prob.params, prob.op, w, settings=settings, phi0=phi)
        if prob.op.pure_neumann and prob.params.z.any():
            w, phi = _regauge(prob, w, phi)
        u = prob.u_of(w, phi)
        nrm = prob.norm(prob.species(w, u), prob.poisson(phi, u))
        history.append(nrm)
        if nrm <= settings.tol:
            return w, phi, u, sweep + 1
    raise SolverError(f"Gummel iteration stalled after {max_sweeps} sweeps",
                      residual=history[-1] if history else None, history=history,
                      iterations=max_sweeps)


def _solve_newton(prob, settings, w0=None, phi0=None):
    """Fully coupled Newton in (w, phi), bordered by a gauge row if pure Neumann."""
    w = prob.prev.w.copy() if w0 is None else w0.copy()
    phi = prob.prev.phi.copy() if phi0 is None else phi0.copy()
    gauge = prob.op.pure_neumann
    N, n = prob.N, prob.n
    if gauge:
        w, phi = _regauge(prob, w, phi)
    history = []
    u = prob.u_of(w, phi)
    rs, rp = prob.species(w, u), prob.poisson(phi, u)
    nrm = prob.norm(rs, rp)
    history.append(nrm)
    for it in range(settings.max_iter):
        if nrm <= settings.tol:
            return w, phi, u, it
        jac = prob.jacobian(w, u, with_phi=True)
        rhs = np.concatenate([rs.ravel(), rp])
        if gauge:
            col = np.zeros((N * n + N, 1))
            col[N * n:, 0] = prob.vol
            jac = sp.bmat([[jac, sp.csc_matrix(col)], [sp.csc_matrix(col.T), None]], format="csc")
            rhs = np.append(rhs, prob.vol * phi.sum())
        delta = -spla.spsolve(jac, rhs)
        dw = delta[:N * n].reshape(N, n)
        dphi = delta[N * n:N * n + N]
        w, phi, u, rs, rp, nrm = _line_search(
            prob, settings, nrm, lambda s: (w + s * dw, phi + s * dphi), history, with_phi=True)
    if nrm <= settings.tol:
        return w, phi, u, settings.max_iter
    raise SolverError("coupled Newton did not converge", residual=nrm, history=history,
                      iterations=settings.max_iter)


def _advance(params, grid, op, prev, tau, config):
    prob = _StepProblem(params, grid, op, prev, tau, config)
    settings = config.newton
    if config.solver == "gummel":
        try:
            w, phi, u, _ = _solve_gummel(prob, settings, config.max_sweeps)
        except SolverError as exc:
            logger.debug("Gummel failed (%s); switching to coupled Newton", exc)
            w, phi, u, _ = _solve_newton(prob, settings)
    else:
        w, phi, u, _ = _solve_newton(prob, settings)
    return State(u=u, phi=phi, w=w, time=prev.time + tau, step=prev.step + 1)


def solve_timestep(params: ModelParams, grid: Grid, op: LaplaceOperator, state_prev: State,
                   config: RunConfig) -> State:
    """Advance one step of size ``config.dt``.

    On solver failure the step is retried as ``2**j`` equal substeps for
    ``j = 1 .. newton.dt_halving``; the returned state always sits at
    ``time + dt`` with ``step + 1``.
    """
    tau = config.dt
    try:
        return _advance(params, grid, op, state_prev, tau, config)
    except SolverError as first:
        err = first
    for level in range(1, config.newton.dt_halving + 1):
        sub = 2 ** level
        logger.info("step %d: retrying with %d substeps", state_prev.step + 1, sub)
        try:
            state = state_prev
            for _ in range(sub):
                state = _advance(params, grid, op, state, tau / sub, config)
            return replace(state, time=state_prev.time + tau, step=state_prev.step + 1)
        except SolverError as exc:
            err = exc
    raise SolverError(f"step {state_prev.step + 1} failed after {config.newton.dt_halving} dt halvings: {err}",
                      residual=err.residual, history=err.history, iterations=err.iterations)


def run(params: ModelParams, grid: Grid, config: RunConfig, u0, sinks: Sinks | None = None,
        op: LaplaceOperator | None = None) -> State:
    """Initialize and advance ``config.n_steps`` steps, feeding the sinks.

    A record is emitted at step 0, every ``output_every`` steps and at the
    final step; snapshots at ``config.snapshot_steps``.  A failing step
    raises SolverError with ``last_state`` set to the last accepted state.
    """
    sinks = sinks or Sinks()
    op = op or assemble_laplacian(grid)
    state = initialize(params, grid, u0, op)
    ctx = diagnostics.DiagnosticsContext.build(params, grid, op, state, config.mobility)

    def emit(s):
        if sinks.on_record is not None and (s.step % config.output_every == 0 or s.step == config.n_steps):
            sinks.on_record(ctx.record(s))
        if sinks.on_snapshot is not None and s.step in config.snapshot_steps:
            sinks.on_snapshot(s)

    emit(state)
    for _ in range(config.n_steps):
        try:
            new = solve_timestep(params, grid, op, state, config)
        except SolverError as exc:
            exc.last_state = state
            raise
        if sinks.on_step is not None:
            sinks.on_step(state, new)
        state = new
        emit(state)
    return state
