from math import comb, sqrt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pfscatter import fock as fk


@pytest.fixture(scope="module")
def basis():
    return fk.FockBasis(3, 3)


W = np.array([0.5, 0.8, 1.2])


@pytest.mark.parametrize("m,n", [(m, n) for m in range(1, 7) for n in range(1, 5)])
def test_basis_size(m, n):
    assert fk.FockBasis(m, n).dim == comb(m + n, n)


def test_ordering_graded(basis):
    totals = basis.photon_number
    assert np.all(np.diff(totals) >= 0)
    assert basis.states[0].sum() == 0
    for t in range(basis.n_max + 1):
        block = [tuple(s) for s in basis.states[totals == t]]
        assert block == sorted(block)


def test_create_on_vacuum(basis):
    out = fk.create(basis, W, np.eye(3)[1]).apply(basis.vacuum())
    expected = sqrt(W[1]) * basis.basis_state((0, 1, 0))
    assert np.allclose(out, expected, atol=1e-16)


def test_create_ladder_action(basis):
    out = fk.create(basis, W, np.eye(3)[0]).apply(basis.basis_state((1, 1, 0)))
    assert np.allclose(out, sqrt(W[0]) * sqrt(2) * basis.basis_state((2, 1, 0)))


def test_create_truncated_top(basis):
    out = fk.create(basis, W, np.ones(3)).apply(basis.basis_state((1, 1, 1)))
    assert np.all(out == 0)
    assert fk.create(basis, W, np.ones(3)).truncated


def test_one_photon_inner_product(basis):
    rng = np.random.default_rng(0)
    g, h = rng.normal(size=3) + 1j * rng.normal(size=3), rng.normal(size=3) + 1j * rng.normal(size=3)
    lhs = np.vdot(fk.create(basis, W, h).apply(basis.vacuum()), fk.create(basis, W, g).apply(basis.vacuum()))
    assert lhs == pytest.approx(np.sum(W * np.conj(h) * g), abs=1e-14)


def test_annihilate_vacuum_and_adjoint(basis):
    rng = np.random.default_rng(1)
    h = rng.normal(size=3) + 1j * rng.normal(size=3)
    a, c = fk.annihilate(basis, W, h), fk.create(basis, W, h)
    assert np.all(a.apply(basis.vacuum()) == 0)
    psi = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
    phi = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
    assert np.vdot(a.apply(psi), phi) == pytest.approx(np.vdot(psi, c.apply(phi)), abs=1e-13)
    assert abs(a.matrix - c.matrix.conj().T).max() == 0


def test_mode_annihilate_weight_free(basis):
    out = fk.mode_annihilate(basis, W, 2).apply(basis.basis_state((0, 0, 1)))
    # pointwise a(k_i) is b_i / sqrt(w_i)
    assert np.allclose(out * sqrt(W[2]), basis.vacuum())


def test_mode_annihilate_reconstructs_a(basis):
    rng = np.random.default_rng(2)
    h = rng.normal(size=3) + 1j * rng.normal(size=3)
    recon = sum(W[i] * np.conj(h[i]) * fk.mode_annihilate(basis, W, i).matrix for i in range(3))
    assert abs(recon - fk.annihilate(basis, W, h).matrix).max() < 1e-15


def test_mode_annihilate_one_photon_state(basis):
    one = fk.create(basis, W, np.eye(3)[0] / W[0]).apply(basis.vacuum())
    out = fk.mode_annihilate(basis, W, 0).apply(one)
    assert np.allclose(out, basis.vacuum() / W[0])
    assert np.allclose(fk.mode_annihilate(basis, W, 0).apply(basis.basis_state((1, 0, 0))) * sqrt(W[0]),
                       basis.vacuum())


def test_field(basis):
    assert abs(fk.field(basis, W, np.zeros(3)).matrix).max() == 0
    rng = np.random.default_rng(3)
    h = rng.normal(size=3) + 1j * rng.normal(size=3)
    phi = fk.field(basis, W, h)
    assert abs(phi.matrix - phi.matrix.conj().T).max() <= 1e-13
    vac = basis.vacuum()
    val = np.vdot(vac, phi.apply(phi.apply(vac)))
    assert val == pytest.approx(np.sum(W * abs(h) ** 2) / 2, abs=1e-14)


def test_hf_and_number():
    b = fk.FockBasis(2, 2)
    om = np.array([0.5, 1.2])
    assert np.all(fk.hf_apply(b, om, b.vacuum()) == 0)
    s = b.basis_state((1, 1))
    assert np.allclose(fk.hf_apply(b, om, s), 1.7 * s)
    s = b.basis_state((1, 0))
    assert np.allclose(fk.hf_apply(b, np.array([0.7, 1.0]), s), 0.7 * s)
    assert np.allclose(fk.number_apply(b, b.basis_state((2, 0))), 2 * b.basis_state((2, 0)))
    # both diagonal: they commute
    hf, n = np.diag(fk.hf_diagonal(b, om)), np.diag(fk.number_diagonal(b))
    assert np.array_equal(hf @ n, n @ hf)


def test_hf_apply_on_product_vector():
    b = fk.FockBasis(2, 1)
    om = np.array([0.5, 1.5])
    psi = np.arange(6, dtype=complex)
    out = fk.hf_apply(b, om, psi)
    assert np.allclose(out, psi * np.tile(fk.hf_diagonal(b, om), 2))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_ccr_guarded(seed):
    b = fk.FockBasis(3, 3)
    rng = np.random.default_rng(seed)
    g, h = rng.normal(size=3) + 1j * rng.normal(size=3), rng.normal(size=3) + 1j * rng.normal(size=3)
    psi = rng.normal(size=b.dim) + 1j * rng.normal(size=b.dim)
    psi[b.photon_number > b.n_max - 1] = 0
    ag, ch = fk.annihilate(b, W, g).matrix, fk.create(b, W, h).matrix
    ah = fk.annihilate(b, W, h).matrix
    res = (ag @ ch - ch @ ag) @ psi - np.sum(W * np.conj(g) * h) * psi
    assert np.linalg.norm(res) <= 1e-12 * max(1, np.linalg.norm(psi))
    assert np.linalg.norm((ag @ ah - ah @ ag) @ psi) <= 1e-12 * max(1, np.linalg.norm(psi))


def test_dumps(basis):
    lines = basis.dumps().splitlines()
    assert len(lines) == basis.dim
    assert lines[0] == "0 0 0 0"
