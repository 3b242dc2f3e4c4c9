import numpy as np
import pytest

from pfscatter import matter as mt


def _space(potential="harmonic", params=None, **grid):
    g = mt.ParticleGrid(**{"points": 32, **grid})
    return mt.MatterSpace(g, mt.one_body_potential(potential, params))


def test_laplacian_negative_semidefinite():
    s = _space(points=20)
    vals = np.linalg.eigvalsh(-s.laplacian().toarray())
    assert vals.min() >= -1e-12


def test_dirichlet_spectrum_closed_form():
    g = mt.ParticleGrid(points=10, extent=1.0)
    s = mt.MatterSpace(g)
    vals = np.sort(np.linalg.eigvalsh(-s.laplacian().toarray()))
    m = np.arange(1, 11)
    ref = 2 / g.spacing ** 2 * (1 - np.cos(np.pi * m / 11))
    assert np.allclose(vals, ref, atol=1e-11)


def test_momentum_hermitian():
    s = _space(dimension=2, points=6)
    for a in range(2):
        p = s.momentum(0, a).toarray()
        assert abs(p - p.conj().T).max() == 0


def test_spin_algebra_d3():
    g = mt.ParticleGrid(dimension=3, points=3, extent=1.0, spin=0.5)
    s = mt.MatterSpace(g)
    S = [s.spin(0, l).toarray() for l in range(3)]
    for l, m, n in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        assert abs(S[l] @ S[m] - S[m] @ S[l] - 1j * S[n]).max() <= 1e-15
    assert np.allclose(sum(x @ x for x in S), 0.75 * np.eye(s.dim))


def test_spin_zero_gives_zero_map():
    s = _space(points=5)
    assert s.spin(0, 2).nnz == 0


def test_harmonic_ground_energy():
    # -d^2/dx^2 + x^2/4 has ground energy 1/2
    s = _space(points=128, extent=8.0, params={"strength": 0.25})
    e, _ = mt.atomic_eigensystem(s)
    assert abs(e[0] - 0.5) <= 1e-3


def test_double_well_near_degenerate():
    s = _space("double_well", {"a": 0.5, "b": 2.0}, points=96)
    e, _ = mt.atomic_eigensystem(s, count=3)
    assert 0 < e[1] - e[0] < 0.01 * (e[2] - e[1])


def test_soft_coulomb_bound_state():
    s = _space("soft_coulomb", {"charge": 1.0, "softening": 1.0}, points=64, extent=12.0)
    e, _ = mt.atomic_eigensystem(s)
    assert e[0] < 0
    assert s.min_potential() == pytest.approx(-1 / np.sqrt(1 + (s.grid.spacing / 2) ** 2), rel=1e-12)


def test_tabulated_potential(tmp_path):
    p = tmp_path / "v.txt"
    p.write_text("-10 100\n0 0\n10 100\n")
    s = mt.MatterSpace(mt.ParticleGrid(points=9, extent=5.0), mt.one_body_potential("tabulated", path=p))
    assert np.allclose(s.potential_values(), 10 * np.abs(s.grid.axis))


def test_two_particle_exchange_symmetry():
    g = mt.ParticleGrid(points=8, n_particles=2)
    s = mt.MatterSpace(g, mt.one_body_potential("harmonic"), pair_strength=1.0)
    assert s.dim == 64
    assert s.exchange_defect(rng=0) == 0
    h = s.hamiltonian().toarray()
    swap = np.eye(64).reshape(8, 8, 64).transpose(1, 0, 2).reshape(64, 64)
    assert abs(swap @ h @ swap.T - h).max() <= 1e-13


def test_invalid_inputs():
    with pytest.raises(mt.MatterError):
        mt.ParticleGrid(n_particles=3)
    with pytest.raises(mt.MatterError):
        mt.ParticleGrid(spin=1.0)
    with pytest.raises(mt.MatterError):
        mt.one_body_potential("nonsense")
    with pytest.raises(mt.MatterError):
        mt.one_body_potential("tabulated")
    with pytest.raises(mt.MatterError):
        mt.MatterSpace(mt.ParticleGrid(points=4), lambda x: np.full(x.shape[:-1], np.inf))
