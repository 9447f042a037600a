"""Fast invariant batteries run by ``pnpsteric selfcheck``.

Each battery returns ``(ok, detail)``.  The steric reference value guards the
sign of the steric potential, which the roundtrip battery alone would not
detect.
"""
from __future__ import annotations

import time

import numpy as np

from . import model
from .diagnostics import production_decomposition, relative_entropy_R, relative_entropy_R_bregman
from .elliptic import assemble_laplacian, harmonic_extension, solve_poisson_linear
from .grid import BoundarySpec, build_grid
from .model import F_map, ModelParams, invert_F
from .scheme import State

PRESET_A = np.array([[2.5, 1.0, 1.0], [1.0, 1.0, 0.5], [1.0, 0.5, 0.5]])


def random_spd(rng, n, high=3.0, min_eig=1e-2):
    """Symmetric positive definite matrix with entries in ``[0, high]`` (rejection sampling)."""
    while True:
        b = rng.uniform(0.0, high, size=(n, n))
        a = np.triu(b) + np.triu(b, 1).T
        if np.linalg.eigvalsh(a)[0] > min_eig:
            return a


def random_params(rng, n=None, sigma=None, zmax=5.0):
    n = n or int(rng.integers(1, 5))
    sigma = sigma if sigma is not None else float(rng.choice([0.1, 1.0, 5.0]))
    z = rng.uniform(-zmax, zmax, size=n)
    return ModelParams(sigma, z, random_spd(rng, n))


def check_roundtrip(rng, count=1000):
    worst = 0.0
    for _ in range(count):
        p = random_params(rng)
        v = rng.uniform(-20.0, 20.0, size=p.n_species)
        worst = max(worst, float(np.max(np.abs(F_map(p, invert_F(p, v)) - v))))
    return worst <= 1e-10, f"max |F(F^-1(v)) - v| = {worst:.2e} over {count} samples"


def check_monotone(rng, count=1000):
    worst = np.inf
    for _ in range(count):
        p = random_params(rng)
        u = np.exp(rng.uniform(-5.0, 3.0, size=p.n_species))
        v = np.exp(rng.uniform(-5.0, 3.0, size=p.n_species))
        if np.array_equal(u, v):
            continue
        worst = min(worst, float(np.dot(F_map(p, u) - F_map(p, v), u - v)))
    return worst > 0, f"min <F(u) - F(v), u - v> = {worst:.2e} over {count} pairs"


def check_steric_reference():
    p = ModelParams(1.0, [-5.0, 5.0, -5.0], PRESET_A)
    got = model.steric_potential(p, np.ones(3))
    ok = np.allclose(got, [4.5, 2.5, 2.0], rtol=0, atol=1e-14)
    return bool(ok), f"p(1,1,1) = {np.array2string(got)}"


def check_decomposition(rng, count=1000):
    worst = 0.0
    for _ in range(count):
        p = random_params(rng)
        d = int(rng.integers(1, 3))
        u = np.exp(rng.uniform(-3.0, 2.0, size=p.n_species))
        gu = rng.normal(size=(p.n_species, d))
        gp = rng.normal(size=d)
        lhs, parts = production_decomposition(p, u, gu, gp)
        scale = abs(lhs) + sum(abs(c) for c in parts)
        worst = max(worst, abs(lhs - sum(parts)) / scale)
    return worst <= 1e-12, f"max relative defect {worst:.2e} over {count} points"


def check_quadratic(rng, count=100):
    grid = build_grid(2, 5, 4, boundary=BoundarySpec.dirichlet_x(0.1, -0.2))
    op = assemble_laplacian(grid)
    phi_D = harmonic_extension(op)
    worst = 0.0
    for _ in range(count):
        p = random_params(rng, n=int(rng.integers(1, 4)))
        states = []
        for _ in range(2):
            u = np.exp(rng.uniform(-2.0, 1.0, size=(grid.n_cells, p.n_species)))
            phi = solve_poisson_linear(op, u @ p.z)
            states.append(State(u=u, phi=phi, w=u))
        q = relative_entropy_R(p, grid, *states)
        b = relative_entropy_R_bregman(p, grid, *states, phi_D)
        worst = max(worst, abs(q - b) / max(1.0, abs(q)))
    return worst <= 1e-12, f"max |quadratic - Bregman| = {worst:.2e} over {count} pairs"


def poisson_errors(dim, levels=(8, 16, 32, 64)):
    """Max-norm errors of the manufactured Poisson problems."""
    errs = []
    for nx in levels:
        grid = build_grid(dim, nx, nx if dim == 2 else 1, boundary=BoundarySpec.dirichlet_x(0.0, 0.0))
        op = assemble_laplacian(grid)
        x, y = grid.centers()
        if dim == 1:
            exact, charge = x * (1 - x) / 2, np.ones(grid.n_cells)
        else:
            exact = np.sin(np.pi * x) * np.cos(np.pi * y)
            charge = 2 * np.pi ** 2 * exact
        errs.append(float(np.max(np.abs(solve_poisson_linear(op, charge) - exact))))
    return errs


def check_poisson():
    ratios = []
    for dim in (1, 2):
        e = poisson_errors(dim)
        ratios += [a / b for a, b in zip(e, e[1:])]
    ok = all(3.0 <= r <= 5.0 for r in ratios)
    return ok, "ratios " + ", ".join(f"{r:.2f}" for r in ratios)


BATTERIES = (
    ("roundtrip", check_roundtrip),
    ("monotonicity", check_monotone),
    ("steric reference", check_steric_reference),
    ("decomposition identity", check_decomposition),
    ("quadratic exactness", check_quadratic),
    ("poisson convergence", check_poisson),
)


def run_selfcheck(seed=0, stream=print) -> bool:
    rng = np.random.default_rng(seed)
    all_ok = True
    for name, fn in BATTERIES:
        t0 = time.perf_counter()
        try:
            ok, detail = fn(rng) if fn.__code__.co_argcount else fn()
        except Exception as exc:  # a crash is a failed battery
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= bool(ok)
        stream(f"{'PASS' if ok else 'FAIL'} {name}: {detail} ({time.perf_counter() - t0:.2f} s)")
    return all_ok
