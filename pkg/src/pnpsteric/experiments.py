"""Experiment drivers: plain simulation, entropy decay and the uniqueness probe.

Each driver returns a report dictionary and raises on failure; the command
line maps exceptions onto exit codes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import diagnostics as diag
from .config import ExperimentConfig
from .elliptic import assemble_laplacian, harmonic_extension, solve_poisson_linear
from .errors import FitError, InvariantViolation, SolverError, UnsupportedConfiguration
from .grid import cell_integral, restrict
from .io import write_snapshot, write_timeseries, write_vtk
from .scheme import RunConfig, Sinks, State, initialize, run

MASS_TOL = 1e-10
ENTROPY_TOL = 1e-8
STRONG_TOL = 1e-6
INTERIOR_MARGIN = 0.2


@dataclass
class InvariantMonitor:
    """Per-step checks of conservation, positivity and entropy dissipation.

    Mass, positivity and plain monotonicity (only with ``epsilon = 0``) are
    asserted; the ``tau * D`` strengthened inequality and the Rao balance
    are logged.
    """

    params: object
    grid: object
    phi_D: np.ndarray
    mobility: str = "arithmetic"
    epsilon: float = 0.0
    masses0: Optional[np.ndarray] = None
    max_mass_drift: float = 0.0
    min_u: float = np.inf
    max_entropy_increase: float = -np.inf
    max_strong_defect: float = -np.inf
    max_rao_defect: float = -np.inf
    n_steps: int = 0
    violations: list = field(default_factory=list)
    strong_violations: list = field(default_factory=list)
    rao_flags: list = field(default_factory=list)

    def start(self, state):
        self.masses0 = cell_integral(self.grid, state.u)
        self.min_u = float(np.min(state.u))
        self._H = diag.entropy_BR(self.params, self.grid, state, self.phi_D)

    def on_step(self, prev, cur):
        if self.masses0 is None:
            self.start(prev)
        p, g = self.params, self.grid
        k = cur.step
        self.n_steps += 1
        masses = cell_integral(g, cur.u)
        drift = float(np.max(np.abs(masses - self.masses0) / np.maximum(np.abs(self.masses0), 1e-300)))
        self.max_mass_drift = max(self.max_mass_drift, drift)
        if drift > MASS_TOL:
            self.violations.append(f"step {k}: relative mass drift {drift:.3e}")
        umin = float(np.min(cur.u))
        self.min_u = min(self.min_u, umin)
        if not umin > 0:
            self.violations.append(f"step {k}: min u = {umin:.3e}")

        h_prev = self._H
        h = diag.entropy_BR(p, g, cur, self.phi_D)
        self._H = h
        scale = 1.0 + abs(h_prev)
        inc = (h - h_prev) / scale
        self.max_entropy_increase = max(self.max_entropy_increase, inc)
        if self.epsilon == 0.0 and inc > ENTROPY_TOL:
            self.violations.append(f"step {k}: H_BR increased by {h - h_prev:.3e}")
        tau = cur.time - prev.time
        prod = diag.entropy_production(p, g, cur, mobility=self.mobility)
        strong = (h + tau * prod - h_prev) / scale
        self.max_strong_defect = max(self.max_strong_defect, strong)
        if strong > STRONG_TOL:
            self.strong_violations.append(k)
        rao = diag.rao_inequality_defect(p, g, prev, cur, tau, self.phi_D)
        self.max_rao_defect = max(self.max_rao_defect, rao)
        if rao > 0:
            self.rao_flags.append(k)

    def summary(self) -> dict:
        return {
            "steps_checked": self.n_steps,
            "max_relative_mass_drift": self.max_mass_drift,
            "min_u": self.min_u,
            "max_relative_entropy_increase": _finite(self.max_entropy_increase),
            "max_strengthened_defect": _finite(self.max_strong_defect),
            "strengthened_violation_steps": self.strong_violations,
            "max_rao_defect": _finite(self.max_rao_defect),
            "rao_flag_steps": self.rao_flags,
            "violations": self.violations,
        }


def _finite(x):
    return None if not np.isfinite(x) else float(x)


def interior_mask(grid, margin=INTERIOR_MARGIN) -> np.ndarray:
    """Cells whose centres lie at least ``margin`` from every side."""
    x, y = grid.centers()
    dist = np.minimum(x, grid.lx - x)
    if grid.dim == 2:
        dist = np.minimum(dist, np.minimum(y, grid.ly - y))
    return dist >= margin - 1e-12


def qualitative_gates(grid, state0, state, margin=INTERIOR_MARGIN) -> dict:
    """Flat-interior and slow-potential gates for the two-dimensional preset.

    (i) per species, std over interior cells <= 0.25 * std over all cells;
    (ii) max |phi - phi_0| <= 0.2 * (max phi_0 - min phi_0 + 0.1).
    """
    mask = interior_mask(grid, margin)
    u = np.asarray(state.u)
    ratios = []
    for i in range(u.shape[1]):
        s_all = float(np.std(u[:, i]))
        s_int = float(np.std(u[mask, i])) if mask.any() else 0.0
        ratios.append(0.0 if s_all == 0.0 else s_int / s_all)
    flat_ok = bool(mask.any()) and all(r <= 0.25 for r in ratios)
    dphi = float(np.max(np.abs(state.phi - state0.phi)))
    bound = 0.2 * (float(np.max(state0.phi) - np.min(state0.phi)) + 0.1)
    return {
        "step": int(state.step),
        "interior_cells": int(mask.sum()),
        "interior_std_ratio": ratios,
        "flat_interior": flat_ok,
        "max_phi_change": dphi,
        "phi_change_bound": bound,
        "phi_stable": dphi <= bound,
    }


@dataclass
class SimulationResult:
    records: list
    snapshots: dict
    final: State
    initial: State
    monitor: InvariantMonitor
    summary: dict


def simulate(cfg: ExperimentConfig, out_dir=None, vtk=False, write=True) -> SimulationResult:
    """Run a configuration, write its outputs and return the collected data.

    Raises SolverError (after writing partial outputs) or InvariantViolation.
    """
    grid = cfg.build_grid()
    op = assemble_laplacian(grid)
    u0 = cfg.initial_data(grid)
    out = Path(out_dir or cfg.out_dir)
    monitor = InvariantMonitor(cfg.params, grid, harmonic_extension(op),
                               cfg.run.mobility, cfg.run.epsilon)
    records, snapshots = [], {}

    def on_snapshot(s):
        snapshots[s.step] = s
        if write:
            write_snapshot(out / f"snapshot_{s.step:06d}.csv", grid, s)
            if vtk:
                write_vtk(out / f"snapshot_{s.step:06d}.vtk", grid, s)

    sinks = Sinks(on_record=records.append, on_snapshot=on_snapshot, on_step=monitor.on_step)
    initial = initialize(cfg.params, grid, u0, op)
    monitor.start(initial)
    try:
        final = run(cfg.params, grid, cfg.run, u0, sinks, op)
    except SolverError:
        if write and records:
            write_timeseries(out / "timeseries.csv", records)
        raise
    if write:
        write_timeseries(out / "timeseries.csv", records)
    summary = {
        "name": cfg.name,
        "preset": cfg.preset,
        "grid": {"dim": grid.dim, "nx": grid.nx, "ny": grid.ny, "lx": grid.lx, "ly": grid.ly},
        "dt": cfg.run.dt,
        "n_steps": cfg.run.n_steps,
        "final_time": final.time,
        "invariants": monitor.summary(),
        "qualitative_gates": qualitative_gates(grid, initial, final),
        "snapshots": sorted(snapshots),
    }
    if write:
        _write_json(out / "summary.json", summary)
    if monitor.violations:
        raise InvariantViolation("; ".join(monitor.violations[:5]))
    return SimulationResult(records, snapshots, final, initial, monitor, summary)


def _write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


EQUILIBRATED_TOL = 1e-12


def decay(cfg: ExperimentConfig, out_dir=None, write=True) -> dict:
    """Relative-entropy decay towards the constant equilibrium.

    Raises UnsupportedConfiguration for non-Neumann potentials,
    CompatibilityError for charged data and InvariantViolation when the
    relative entropy is not strictly decreasing or the fitted rate is not
    positive.  Data already at equilibrium give a report with
    ``status = "already equilibrated"``.
    """
    grid = cfg.build_grid()
    if not grid.pure_neumann:
        raise UnsupportedConfiguration("decay needs Neumann conditions on every side")
    op = assemble_laplacian(grid)
    u0 = cfg.initial_data(grid)
    initial = initialize(cfg.params, grid, u0, op)
    theory = diag.decay_theory_constant(cfg.params, grid)
    u_inf, _ = diag.equilibrium_state(cfg.params, grid, u0)
    out = Path(out_dir or cfg.out_dir)
    report = {
        "name": cfg.name,
        "lambda_theory": theory.rate,
        "theory_terms": {"two": theory.terms[0], "four_C_L_sigma": theory.terms[1], "C_a": theory.terms[2]},
        "C_P": theory.C_P,
        "C_L": theory.C_L,
        "u_inf": u_inf.tolist(),
    }
    h0 = diag.relative_entropy_BR(cfg.params, grid, initial, u_inf)
    if h0 <= EQUILIBRATED_TOL:
        report.update(status="already equilibrated", H_rel_initial=h0)
        if write:
            _write_json(out / "decay_report.json", report)
        return report

    records = []
    run(cfg.params, grid, cfg.run, u0, Sinks(on_record=records.append), op)
    if write:
        write_timeseries(out / "timeseries.csv", records)
    t = np.array([r.time for r in records])
    h = np.array([r.H_rel_BR for r in records])
    above = h > EQUILIBRATED_TOL
    active = np.flatnonzero(above)
    last = active[-1] if active.size else 0
    diffs = np.diff(h[: last + 1])
    monotone = bool(np.all(diffs < 0))
    report.update(
        status="ok",
        H_rel_initial=float(h[0]),
        H_rel_final=float(h[-1]),
        decay_factor=float(h[0] / h[-1]) if h[-1] > 0 else float("inf"),
        strictly_decreasing=monotone,
        final_time=float(t[-1]),
    )
    try:
        fit = diag.fit_decay(t[: last + 1], h[: last + 1])
    except FitError as exc:
        report.update(status="fit failed", fit_error=str(exc))
        if write:
            _write_json(out / "decay_report.json", report)
        raise InvariantViolation(f"decay fit failed: {exc}") from exc
    report.update(lambda_fit=fit.rate, r_squared=fit.r_squared, fit_window=list(fit.window))
    if write:
        _write_json(out / "decay_report.json", report)
    if not monotone:
        raise InvariantViolation("relative entropy is not strictly decreasing")
    if not fit.rate > 0:
        raise InvariantViolation(f"fitted decay rate {fit.rate:.3e} is not positive")
    return report


def _states_at_base_times(cfg, grid, u0, dt, n_steps, stride):
    run_cfg = RunConfig(dt=dt, n_steps=n_steps, epsilon=cfg.run.epsilon, mobility=cfg.run.mobility,
                        solver=cfg.run.solver, output_every=n_steps + 1,
                        newton=cfg.run.newton, max_sweeps=cfg.run.max_sweeps)
    states = []

    def on_step(prev, cur):
        if prev.step == 0:
            states.append(prev)
        if cur.step % stride == 0:
            states.append(cur)

    final = run(cfg.params, grid, run_cfg, u0, Sinks(on_step=on_step))
    return states or [final]


def wsu(cfg: ExperimentConfig, refinements: int, out_dir=None, write=True) -> dict:
    """Coarse solutions against a fine reference, measured in relative Rao entropy.

    The reference lives on the grid refined ``refinements`` times (time step
    divided by ``4**refinements``).  Coarse levels ``0 .. refinements-1``
    start from the cell averages of the reference initial data.  The error
    of a level is the maximum over the base time instants of
    ``relative_entropy_R(coarse, reference)``, where the reference
    concentrations are averaged onto the coarse grid and its potential is
    re-solved there.  ``refinements = 0`` compares two runs on the same grid.
    """
    if refinements < 0:
        raise ValueError("refinements: must be nonnegative")
    K = int(refinements)
    base = cfg.run
    fine = cfg.build_grid(K)
    u0_fine = cfg.initial_data(fine)
    ref = _states_at_base_times(cfg, fine, u0_fine, base.dt / 4 ** K, base.n_steps * 4 ** K, 4 ** K)
    levels = range(K) if K > 0 else [0]
    rows = []
    for lev in levels:
        g = cfg.build_grid(lev)
        op = assemble_laplacian(g)
        u0 = restrict(fine, g, u0_fine)
        coarse = _states_at_base_times(cfg, g, u0, base.dt / 4 ** lev, base.n_steps * 4 ** lev, 4 ** lev)
        errs = []
        for sc, sr in zip(coarse, ref):
            ubar = restrict(fine, g, sr.u)
            phibar = solve_poisson_linear(op, ubar @ cfg.params.z)
            ref_state = State(u=ubar, phi=phibar, w=ubar, time=sr.time, step=sc.step)
            errs.append(max(0.0, diag.relative_entropy_R(cfg.params, g, sc, ref_state)))
        rows.append({"level": lev, "nx": g.nx, "ny": g.ny, "dt": base.dt / 4 ** lev,
                     "e": float(max(errs)), "e_series": [float(e) for e in errs]})
    e = [r["e"] for r in rows]
    monotone = all(b < a for a, b in zip(e, e[1:]))
    ratio = e[-1] / e[0] if len(e) > 1 and e[0] > 0 else None
    report = {
        "name": cfg.name,
        "refinements": K,
        "reference": {"nx": fine.nx, "ny": fine.ny, "dt": base.dt / 4 ** K},
        "final_time": float(ref[-1].time),
        "levels": rows,
        "monotone": monotone,
        "ratio_last_first": ratio,
    }
    if write:
        _write_json(Path(out_dir or cfg.out_dir) / "wsu_report.json", report)
    if not monotone:
        raise InvariantViolation(f"e(h) not decreasing with refinement: {e}")
    if ratio is not None and ratio > 0.5:
        raise InvariantViolation(f"e(h) ratio {ratio:.3f} exceeds 0.5")
    return report
