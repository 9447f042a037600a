import numpy as np
import pytest

from pnpsteric import scheme
from pnpsteric.config import load_preset
from pnpsteric.diagnostics import entropy_BR, entropy_production
from pnpsteric.elliptic import assemble_laplacian, harmonic_extension
from pnpsteric.errors import CompatibilityError, DomainError, SolverError
from pnpsteric.grid import BoundarySpec, build_grid, cell_integral
from pnpsteric.model import F_map, ModelParams, NewtonSettings
from pnpsteric.scheme import RunConfig, Sinks, initialize, run, solve_timestep, step_residual

PAIR = ModelParams(1.0, [1.0, -1.0], np.eye(2))


def bump_data(grid, n, rng, amp=0.5):
    x, y = grid.centers()
    cols = []
    for _ in range(n):
        cx, cy = rng.uniform(0.2, 0.8, size=2)
        cols.append(1.0 + amp * np.exp(-30 * ((x - cx) ** 2 + (y - cy) ** 2 * (grid.dim == 2))))
    return np.stack(cols, axis=1)


def test_initialize_equilibrium():
    g = build_grid(2, 4, 3)
    s = initialize(PAIR, g, np.ones((12, 2)))
    assert np.allclose(s.phi, 0.0)
    assert np.allclose(s.w, F_map(PAIR, [1.0, 1.0]))
    assert (s.time, s.step) == (0.0, 0)


def test_initialize_errors():
    g = build_grid(1, 4)
    u = np.ones((4, 2))
    u[2, 1] = 0.0
    with pytest.raises(DomainError):
        initialize(PAIR, g, u)
    with pytest.raises(CompatibilityError):
        initialize(PAIR, g, np.column_stack([np.ones(4), 2 * np.ones(4)]))
    with pytest.raises(ValueError):
        initialize(PAIR, g, np.ones((3, 2)))


def test_three_species_preset_initial_data():
    cfg = load_preset("paper-sec5")
    g = cfg.build_grid()
    u0 = cfg.initial_data(g)
    s = initialize(cfg.params, g, u0)
    assert u0.min() >= 0.5
    assert np.all(np.isfinite(s.phi))


def test_residual_zero_on_one_cell():
    p = ModelParams(1.0, [1.0, 2.0], [[1.0, 0.3], [0.3, 2.0]])
    g = build_grid(1, 1, boundary=BoundarySpec.dirichlet_x(0.2, -0.1))
    op = assemble_laplacian(g)
    s = initialize(p, g, np.array([[0.7, 1.3]]), op)
    rs, rp = step_residual(p, g, op, s, s.w, s.phi, RunConfig(dt=0.3, n_steps=1))
    assert np.max(np.abs(rs)) <= 1e-12  # only the F inverse roundtrip error remains
    assert np.max(np.abs(rp)) < 1e-12


def test_one_cell_step_is_identity():
    p = ModelParams(2.0, [3.0], [[1.5]])
    g = build_grid(1, 1, boundary=BoundarySpec.dirichlet_x(0.5, 0.0))
    s = run(p, g, RunConfig(dt=0.5, n_steps=10), np.array([[0.8]]))
    assert s.u[0, 0] == pytest.approx(0.8, rel=1e-13)
    assert s.step == 10 and s.time == pytest.approx(5.0)


def test_equilibrium_is_fixed_point():
    g = build_grid(2, 5, 5)
    u0 = np.tile([1.3, 1.3], (25, 1))
    s = run(PAIR, g, RunConfig(dt=0.1, n_steps=20), u0)
    assert np.allclose(s.u, u0, rtol=1e-13)
    assert np.allclose(s.phi, 0.0, atol=1e-13)


def test_zero_steps_returns_initial_state():
    g = build_grid(1, 6)
    u0 = np.tile([1.0, 1.0], (6, 1))
    s = run(PAIR, g, RunConfig(dt=0.1, n_steps=0), u0)
    assert s.step == 0 and np.array_equal(s.u, u0)


@pytest.mark.parametrize("mobility", ["arithmetic", "upwind"])
@pytest.mark.parametrize("solver", ["newton", "gummel"])
def test_step_conserves_mass_and_entropy(rng, mobility, solver):
    p = ModelParams(1.0, [1.0, -1.0], [[1.0, 0.3], [0.3, 0.8]])
    g = build_grid(2, 6, 6, boundary=BoundarySpec.dirichlet_x(0.1, -0.1))
    op = assemble_laplacian(g)
    phi_D = harmonic_extension(op)
    cfg = RunConfig(dt=1e-3, n_steps=1, mobility=mobility, solver=solver, max_sweeps=200)
    s0 = initialize(p, g, bump_data(g, 2, rng), op)
    s1 = solve_timestep(p, g, op, s0, cfg)
    m0, m1 = cell_integral(g, s0.u), cell_integral(g, s1.u)
    assert np.all(np.abs(m1 - m0) <= 1e-12 * np.abs(m0))
    rs, rp = step_residual(p, g, op, s0, s1.w, s1.phi, cfg)
    assert np.max(np.abs(rs)) * cfg.dt <= 1e-10 * g.cell_volume
    assert np.max(np.abs(rp)) <= 1e-10
    h0, h1 = entropy_BR(p, g, s0, phi_D), entropy_BR(p, g, s1, phi_D)
    d1 = entropy_production(p, g, s1, cfg)
    if mobility == "arithmetic":
        assert h1 + cfg.dt * d1 <= h0 + 1e-8 * (1 + abs(h0))
    assert h1 <= h0 + 1e-8 * (1 + abs(h0))


def test_gummel_and_newton_agree(rng):
    p = ModelParams(1.0, [1.0, -1.0], np.eye(2))
    g = build_grid(1, 12, boundary=BoundarySpec.dirichlet_x(0.0, 0.2))
    op = assemble_laplacian(g)
    s0 = initialize(p, g, bump_data(g, 2, rng), op)
    a = solve_timestep(p, g, op, s0, RunConfig(dt=1e-3, n_steps=1, solver="newton"))
    b = solve_timestep(p, g, op, s0, RunConfig(dt=1e-3, n_steps=1, solver="gummel", max_sweeps=500))
    assert np.allclose(a.u, b.u, rtol=1e-9)
    assert np.allclose(a.phi, b.phi, atol=1e-9)


@pytest.mark.parametrize("neumann", [True, False])
def test_jacobian_matches_finite_differences(rng, neumann):
    p = ModelParams(1.0, [2.0, -1.0], [[1.0, 0.4], [0.4, 1.2]])
    bc = BoundarySpec.all_neumann() if neumann else BoundarySpec.dirichlet_x(0.1, 0.3)
    g = build_grid(2, 3, 3, boundary=bc)
    op = assemble_laplacian(g)
    u0 = bump_data(g, 2, rng)
    if neumann:
        u0[:, 1] += (2 * cell_integral(g, u0[:, 0]) - cell_integral(g, u0[:, 1])) / g.area
    s0 = initialize(p, g, u0, op)
    cfg = RunConfig(dt=0.01, n_steps=1, mobility="arithmetic", epsilon=0.1)
    prob = scheme._StepProblem(p, g, op, s0, cfg.dt, cfg)
    w = s0.w + 0.05 * rng.normal(size=s0.w.shape)
    phi = s0.phi + 0.05 * rng.normal(size=s0.phi.shape)

    def F(x):
        ww = x[:w.size].reshape(w.shape)
        pp = x[w.size:]
        uu = prob.u_of(ww, pp)
        return np.concatenate([prob.species(ww, uu).ravel(), prob.poisson(pp, uu)])

    x0 = np.concatenate([w.ravel(), phi])
    J = prob.jacobian(w, prob.u_of(w, phi), with_phi=True).toarray()
    h = 1e-6
    fd = np.column_stack([(F(x0 + h * e) - F(x0 - h * e)) / (2 * h) for e in np.eye(x0.size)])
    assert np.allclose(J, fd, rtol=1e-5, atol=1e-7)


def test_dt_halving_rescues_a_step(monkeypatch, rng):
    g = build_grid(1, 8, boundary=BoundarySpec.dirichlet_x(0.0, 0.0))
    op = assemble_laplacian(g)
    s0 = initialize(PAIR, g, bump_data(g, 2, rng), op)
    real = scheme._advance
    calls = []

    def flaky(params, grid, op_, prev, tau, config):
        calls.append(tau)
        if len(calls) == 1:
            raise SolverError("injected")
        return real(params, grid, op_, prev, tau, config)

    monkeypatch.setattr(scheme, "_advance", flaky)
    s1 = solve_timestep(PAIR, g, op, s0, RunConfig(dt=0.01, n_steps=1))
    assert calls[1:] == [0.005, 0.005]
    assert s1.step == 1 and s1.time == pytest.approx(0.01)


def test_solver_failure_reports_last_state(monkeypatch, rng):
    g = build_grid(1, 4)
    u0 = np.tile([1.0, 1.0], (4, 1))

    def broken(*args, **kwargs):
        raise SolverError("injected", residual=1.0)

    monkeypatch.setattr(scheme, "_advance", broken)
    with pytest.raises(SolverError) as info:
        run(PAIR, g, RunConfig(dt=0.1, n_steps=3, newton=NewtonSettings(dt_halving=1)), u0)
    assert info.value.last_state.step == 0


def test_run_emits_records_and_snapshots(rng):
    g = build_grid(1, 10)
    u0 = bump_data(g, 2, rng)
    u0[:, 1] *= cell_integral(g, u0[:, 0]) / cell_integral(g, u0[:, 1])
    recs, snaps, steps = [], [], []
    cfg = RunConfig(dt=1e-3, n_steps=7, output_every=3, snapshot_steps=(0, 5))
    run(PAIR, g, cfg, u0, Sinks(recs.append, snaps.append, lambda a, b: steps.append(b.step)))
    assert [r.step for r in recs] == [0, 3, 6, 7]
    assert [s.step for s in snaps] == [0, 5]
    assert steps == list(range(1, 8))


@pytest.mark.parametrize("kwargs, key", [
    (dict(dt=0.0, n_steps=1), "dt"), (dict(dt=1.0, n_steps=-1), "n_steps"),
    (dict(dt=1.0, n_steps=1, mobility="harmonic"), "mobility"),
    (dict(dt=1.0, n_steps=1, solver="picard"), "solver"),
    (dict(dt=1.0, n_steps=1, epsilon=-1.0), "epsilon"),
])
def test_run_config_validation(kwargs, key):
    with pytest.raises(ValueError, match=key):
        RunConfig(**kwargs)
