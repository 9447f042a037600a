import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.special import lambertw

from pnpsteric.errors import DomainError
from pnpsteric.model import (F_jacobian, F_map, ModelParams, NewtonSettings, concentrations,
                             entropy_vars_from_state, invert_F, steric_potential)
from pnpsteric.selfcheck import PRESET_A, random_params

SCALAR = ModelParams(1.0, [0.0], [[1.0]])


def test_params_store_smallest_eigenvalue():
    p = ModelParams(1.0, [-5, 5, -5], PRESET_A)
    assert p.alpha == pytest.approx(np.linalg.eigvalsh(PRESET_A)[0], rel=1e-12)
    assert p.alpha > 0
    assert np.array_equal(p.a, p.a.T)


@pytest.mark.parametrize("a, needle", [
    ([[1.0, 0.5], [0.4, 1.0]], "a"),
    ([[1.0, -0.1], [-0.1, 1.0]], "a"),
    ([[1.0, 2.0], [2.0, 1.0]], "a"),
])
def test_params_reject_bad_matrix(a, needle):
    with pytest.raises(ValueError, match=needle):
        ModelParams(1.0, [1.0, -1.0], a)


def test_params_reject_nonpositive_sigma():
    with pytest.raises(ValueError, match="sigma"):
        ModelParams(0.0, [0.0], [[1.0]])


def test_params_are_read_only():
    p = ModelParams(1.0, [1.0, -1.0], np.eye(2))
    with pytest.raises(ValueError):
        p.a[0, 0] = 3.0


def test_steric_potential_examples():
    p = ModelParams(1.0, [-5, 5, -5], PRESET_A)
    assert np.allclose(steric_potential(p, np.ones(3)), [4.5, 2.5, 2.0], atol=1e-15)
    assert np.array_equal(steric_potential(p, np.zeros(3)), np.zeros(3))
    eye = ModelParams(1.0, [0, 0], np.eye(2))
    assert np.array_equal(steric_potential(eye, [3.0, 7.0]), [3.0, 7.0])
    with pytest.raises(ValueError):
        steric_potential(p, [1.0, 1.0])


def test_F_map_examples():
    assert F_map(SCALAR, [1.0]) == pytest.approx([1.0])
    assert np.allclose(F_map(ModelParams(1.0, [0, 0], np.eye(2)), [1.0, 1.0]), [1.0, 1.0])
    assert F_map(ModelParams(2.0, [0], [[1.0]]), [np.e]) == pytest.approx([2 + np.e])
    with pytest.raises(DomainError):
        F_map(SCALAR, [0.0])


def test_F_jacobian_examples(rng):
    assert np.allclose(F_jacobian(SCALAR, [1.0]), [[2.0]])
    eye = ModelParams(1.0, [0, 0], np.eye(2))
    assert np.allclose(F_jacobian(eye, [1.0, 2.0]), [[2.0, 0.0], [0.0, 1.5]])
    p = random_params(rng, n=3)
    u = np.exp(rng.normal(size=3))
    jac = F_jacobian(p, u)
    np.linalg.cholesky(jac)
    # central differences
    h = 1e-6
    fd = np.column_stack([(F_map(p, u + h * e) - F_map(p, u - h * e)) / (2 * h) for e in np.eye(3)])
    assert np.allclose(jac, fd, rtol=1e-6, atol=1e-6)


def test_invert_F_bisection_oracle():
    oracle = brentq(lambda u: np.log(u) + u, 0.1, 1.0, xtol=1e-14)
    assert oracle == pytest.approx(0.5671432904, abs=1e-10)
    assert invert_F(SCALAR, [0.0])[0] == pytest.approx(oracle, abs=1e-12)


def test_invert_F_trivial_points():
    assert invert_F(SCALAR, [1.0]) == pytest.approx([1.0], abs=1e-12)
    eye = ModelParams(1.0, [0, 0], np.eye(2))
    assert np.allclose(invert_F(eye, [1.0, 1.0]), [1.0, 1.0], atol=1e-12)


@pytest.mark.parametrize("sigma, a, v", [(1.0, 1.0, -20.0), (0.1, 3.0, 20.0), (5.0, 0.5, -3.0)])
def test_invert_F_scalar_lambert_oracle(sigma, a, v):
    # sigma log u + a u = v  <=>  u = (sigma / a) W((a / sigma) exp(v / sigma))
    p = ModelParams(sigma, [0.0], [[a]])
    arg = np.log(a / sigma) + v / sigma
    exact = (sigma / a) * lambertw(np.exp(arg)).real
    assert invert_F(p, [v])[0] == pytest.approx(exact, rel=1e-11)


def test_invert_F_batched_matches_rowwise(rng):
    p = random_params(rng, n=3)
    v = rng.uniform(-20, 20, size=(50, 3))
    batched = invert_F(p, v)
    rows = np.array([invert_F(p, row) for row in v])
    assert np.allclose(batched, rows, rtol=1e-12)
    assert np.all(batched > 0)


def test_entropy_vars_examples():
    p = ModelParams(1.0, [0.0, 0.0], np.eye(2))
    u = np.array([0.3, 2.0])
    assert np.allclose(entropy_vars_from_state(p, u, 0.7), F_map(p, u))
    q = ModelParams(1.0, [1.0], [[1.0]])
    assert entropy_vars_from_state(q, [1.0], 0.5) == pytest.approx([1.5])


def test_state_roundtrip_1000(rng):
    worst = 0.0
    for _ in range(1000):
        p = random_params(rng)
        u = np.exp(rng.uniform(-4, 2, size=p.n_species))
        phi = rng.uniform(-2, 2)
        w = entropy_vars_from_state(p, u, phi)
        worst = max(worst, np.max(np.abs(concentrations(p, w, phi) - u) / u))
    assert worst <= 1e-10


def test_newton_settings_validation():
    with pytest.raises(ValueError):
        NewtonSettings(tol=0.0)
    with pytest.raises(ValueError):
        NewtonSettings(max_iter=0)
