import numpy as np
import pytest

from pnpsteric.elliptic import assemble_laplacian
from pnpsteric.grid import (BoundarySpec, SideBC, build_grid, cell_integral, dirichlet_energy,
                            face_jumps, restrict)

DIRICHLET_X = BoundarySpec.dirichlet_x(0.1, 0.1)


def test_counts_2d():
    g = build_grid(2, 20, 20, boundary=DIRICHLET_X)
    assert g.n_cells == 400
    assert g.n_interior_faces == 760
    assert g.n_boundary_faces == 80
    assert int(g.bface_dirichlet.sum()) == 40


def test_counts_1d():
    g = build_grid(1, 4)
    assert (g.n_cells, g.n_interior_faces, g.n_boundary_faces) == (4, 3, 2)
    assert not g.bface_dirichlet.any()
    assert g.pure_neumann


def test_transmissibilities():
    g = build_grid(2, 4, 5, lx=2.0, ly=1.0, boundary=DIRICHLET_X)
    hx, hy = 0.5, 0.2
    nxf = (g.nx - 1) * g.ny
    assert np.allclose(g.face_t[:nxf], hy / hx)
    assert np.allclose(g.face_t[nxf:], hx / hy)
    left = g.bface_side == "left"
    assert np.allclose(g.bface_t[left], 2 * hy / hx)


def test_every_neighbour_pair_once():
    g = build_grid(2, 6, 4)
    pairs = {tuple(sorted(p)) for p in zip(g.face_k.tolist(), g.face_l.tolist())}
    assert len(pairs) == g.n_interior_faces
    ix, iy = np.arange(g.n_cells) % 6, np.arange(g.n_cells) // 6
    expected = set()
    for c in range(g.n_cells):
        for d in (1, 6):
            n = c + d
            if n < g.n_cells and (d == 6 or ix[n] == ix[c] + 1) and iy[n] - iy[c] in (0, 1):
                expected.add((c, n))
    assert pairs == expected


@pytest.mark.parametrize("kwargs", [dict(dim=2, nx=0, ny=3), dict(dim=1, nx=-1), dict(dim=2, nx=2, ny=2, lx=0.0),
                                    dict(dim=3, nx=2)])
def test_invalid_grid(kwargs):
    with pytest.raises(ValueError):
        build_grid(**kwargs)


def test_sidebc_validation():
    with pytest.raises(ValueError):
        SideBC("robin")


def test_cell_integral_examples():
    g = build_grid(2, 20, 20)
    assert cell_integral(g, np.ones(400)) == pytest.approx(1.0)
    assert cell_integral(build_grid(2, 3, 4, lx=2.0, ly=0.5), np.full(12, 3.0)) == pytest.approx(3.0)
    ind = np.zeros(400)
    ind[17] = 1.0
    assert cell_integral(g, ind) == pytest.approx(0.0025)


def test_dirichlet_energy_examples(rng):
    g1 = build_grid(1, 2)
    assert dirichlet_energy(g1, np.array([0.0, 1.0])) == pytest.approx(1.0)
    g = build_grid(2, 5, 3, boundary=DIRICHLET_X)
    assert dirichlet_energy(g, np.full(15, 0.1), boundary_values=g.bface_value) == pytest.approx(0.0, abs=1e-30)
    f = rng.normal(size=15)
    L = assemble_laplacian(g).matrix
    assert dirichlet_energy(g, f) == pytest.approx(0.5 * f @ (L @ f), rel=1e-13)


def test_summation_by_parts(rng):
    g = build_grid(2, 7, 5, boundary=BoundarySpec.all_neumann())
    L = assemble_laplacian(g).matrix
    f, h = rng.normal(size=35), rng.normal(size=35)
    sbp = np.sum(g.face_t * face_jumps(g, f) * face_jumps(g, h))
    assert f @ (L @ h) == pytest.approx(sbp, rel=1e-13)


def test_restrict_block_average():
    fine = build_grid(2, 4, 4)
    coarse = build_grid(2, 2, 2)
    f = np.arange(16.0)
    r = restrict(fine, coarse, f)
    assert r.tolist() == [2.5, 4.5, 10.5, 12.5]
    assert cell_integral(coarse, r) == pytest.approx(cell_integral(fine, f))
    with pytest.raises(ValueError):
        restrict(fine, build_grid(2, 3, 2), f)
