import numpy as np
import pytest

from pfscatter import hamiltonian as hm
from pfscatter.matter import MatterSpace, ParticleGrid, one_body_potential
from pfscatter.modes import make_grid


def _model(charge=0.3, n_max=2, points=12, dimension=1, spin=0.0, **kw):
    grid = make_grid(dimension, [0.7, 1.3] if dimension == 1 else [1.0],
                     directions=2 if dimension == 1 else 6, charge=charge)
    space = MatterSpace(ParticleGrid(dimension, points, 4.0, 1, spin), one_body_potential("harmonic"))
    return hm.PauliFierzModel(grid, space, n_max, **kw)


@pytest.fixture(scope="module")
def model():
    return _model()


def test_hermitian(model):
    h = model.hamiltonian
    assert abs(h - h.conj().T).max() <= 1e-12


def test_components_sum(model):
    total = sum(model.components.values())
    assert abs(total - model.hamiltonian).max() <= 1e-14


def test_decoupled_is_product():
    m = _model(charge=0.0)
    hf = m.components["field_energy"].diagonal()[:m.dim_fock]
    ref = np.kron(m.matter.hamiltonian().toarray(), np.eye(m.dim_fock)) + np.kron(np.eye(m.dim_matter), np.diag(hf))
    assert abs(m.hamiltonian.toarray() - ref).max() <= 1e-14
    assert m.components["a_linear"].count_nonzero() == 0


def test_vector_potential_hermitian(model):
    a = model.vector_potential(0)
    assert abs(a - a.conj().T).max() <= 1e-14


def test_d2_coincident_value(model):
    g = model.grid
    for i in range(g.n_modes):
        val = model.d2(i, i)
        ref = abs(g.kappa[i]) ** 2 / ((2 * np.pi) * np.linalg.norm(g.k[i]))
        assert np.allclose(val, ref, atol=1e-15)


def test_d2_conjugate_pairing(model):
    for i in range(4):
        for j in range(4):
            assert np.allclose(model.d2(i, j), np.conj(model.d2(j, i)), atol=1e-15)


def test_commutators_guarded():
    m = _model(n_max=3, points=10)
    rng = np.random.default_rng(5)
    psi = m.random_guarded_state(rng, 1)
    h = rng.normal(size=4) + 1j * rng.normal(size=4)
    assert m.comm1_residual(h, psi) <= 1e-10
    for i in range(4):
        assert m.comm2_residual(h, i, psi) <= 1e-10
    assert max(m.ccr_residuals(h, h[::-1], psi).values()) <= 1e-12


def test_top_sector_breaks_ccr():
    m = _model(n_max=2, points=6)
    psi = m.product_state(np.eye(m.dim_matter)[0], m.fock.basis_state((2, 0, 0, 0)))
    e = np.eye(4)[0].astype(complex)
    assert m.ccr_residuals(e, e, psi)["a_astar"] > 0.1


def test_memory_budget_refusal():
    with pytest.raises(hm.ModelSizeError, match="MB"):
        _model(points=64, n_max=4, memory_budget_mb=1.0)


def test_dimension_mismatch():
    grid = make_grid(3, [1.0], directions=6)
    with pytest.raises(ValueError):
        hm.PauliFierzModel(grid, MatterSpace(ParticleGrid(1, 8)), 1)


def test_d3_spin_model():
    m = _model(dimension=3, points=3, spin=0.5, n_max=2, charge=0.5)
    assert m.spin_enabled
    h = m.hamiltonian
    assert abs(h - h.conj().T).max() <= 1e-12
    assert m.components["spin_b"].nnz > 0
    psi = m.random_guarded_state(np.random.default_rng(0), 0)
    h12 = np.zeros(m.grid.n_modes, complex)
    h12[[0, 5]] = 1.0, 0.5j
    assert m.comm1_residual(h12, psi) <= 1e-10
