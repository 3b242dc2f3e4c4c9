import math

import numpy as np
import pytest
import scipy.sparse as sp

from pfscatter import fock as fk
from pfscatter import spectral
from pfscatter.checks import ABELIAN_FAMILIES
from pfscatter.modes import make_grid


def _herm(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (a + a.conj().T) / 2


def test_ground_state_dense_and_lanczos_agree(rng):
    h = sp.csr_matrix(_herm(rng, 60))
    d = spectral.ground_state(h, method="dense")
    lz = spectral.ground_state(h, method="lanczos")
    assert d.energy == pytest.approx(lz.energy, abs=1e-11)
    assert abs(abs(np.vdot(d.vector, lz.vector)) - 1) <= 1e-9
    assert d.residual <= 1e-12 * max(1, abs(d.energy)) * 100
    assert not d.degenerate


def test_degenerate_tie_break_is_deterministic():
    h = np.diag([1.0, 1.0, 2.0, 3.0]).astype(complex)
    u = np.linalg.qr(np.random.default_rng(0).normal(size=(4, 4)))[0]
    h = u @ h @ u.T
    a = spectral.ground_state(h)
    b = spectral.ground_state(h.copy())
    assert a.degenerate and b.degenerate
    assert np.array_equal(a.vector, b.vector)
    assert np.linalg.norm(h @ a.vector - a.vector) <= 1e-12


def test_diagonal_resolvent():
    h = np.diag([0.0, 1.0, 3.0])
    v = np.array([1.0, 2.0, 3.0])
    z = 1 + 0.5j
    x = spectral.resolvent_solve(h, z, v)
    assert np.allclose(x, v / (np.diag(h) - z), atol=1e-14)


def test_real_shift_rejected():
    with pytest.raises(ValueError):
        spectral.resolvent_solve(np.eye(3), 0.5, np.ones(3))


@pytest.mark.parametrize("method", ["dense", "lu", "gmres"])
def test_solver_methods_agree(rng, method):
    h = sp.csr_matrix(_herm(rng, 40))
    v = rng.normal(size=40) + 1j * rng.normal(size=40)
    ref = np.linalg.solve(h.toarray() - (0.3 + 0.1j) * np.eye(40), v)
    x = spectral.ResolventSolver(h, method=method).solve(0.3 + 0.1j, v).x
    assert np.linalg.norm(x - ref) <= 1e-9 * np.linalg.norm(ref)


def test_boundary_value_sweep_matches_dense(rng):
    n = 50
    h = _herm(rng, n)
    u, w = rng.normal(size=n) + 0j, rng.normal(size=n) + 0j
    etas = (0.4, 0.2, 0.1, 0.05)
    res = spectral.boundary_value(spectral.ResolventSolver(sp.csr_matrix(h)), u, w, 0.2, etas)
    for eta, val in zip(res.etas, res.values):
        ref = np.vdot(u, np.linalg.solve(h - (0.2 + 1j * eta) * np.eye(n), w))
        assert abs(val - ref) <= 1e-8 * max(1, abs(ref))
    assert list(res.etas) == sorted(etas, reverse=True)


def test_richardson_exact_on_linear():
    assert spectral.richardson([0.2, 0.1], [3.0 + 0.2, 3.0 + 0.1]) == pytest.approx(3.0)
    ext, prev, stable, _ = spectral.extrapolate_sweep([0.4, 0.2, 0.1], [1.4, 1.2, 1.1])
    assert ext == pytest.approx(1.0) and prev == pytest.approx(1.0) and stable


def test_halfline_zero_operator():
    v = np.array([1.0, -2.0])
    res = spectral.halfline_phase_integral(np.zeros((2, 2)), v, 0.5)
    assert np.allclose(res.closed_form, -1j * v / (-0.5j))
    assert np.allclose(res.closed_form, v / 0.5)
    assert res.rel_error <= 1e-10


def test_halfline_diagonal():
    a = np.diag([-1.0, 0.5, 2.0])
    v = np.ones(3)
    for eps in (0.5, 0.1):
        res = spectral.halfline_phase_integral(a, v, eps, tail_tol=1e-13)
        assert np.allclose(res.closed_form, -1j / (np.diag(a) - 1j * eps))
        assert res.rel_error <= 1e-8


def test_halfline_krylov_path(rng):
    a = sp.csr_matrix(_herm(rng, 20))
    v = rng.normal(size=20) + 0j
    res = spectral.halfline_phase_integral(a, v, 0.5, tail_tol=1e-10, method="krylov")
    assert res.rel_error <= 1e-8


@pytest.mark.parametrize("name", sorted(ABELIAN_FAMILIES))
def test_abelian_families(name):
    f, closed, limit, brk = ABELIAN_FAMILIES[name]
    for eps in (0.1, 0.01):
        val = spectral.damped_integral(f, eps, brk)
        assert val == pytest.approx(closed(eps), abs=1e-9)
        assert abs(val - limit) <= 5 * eps


def test_nonpositive_eps_rejected():
    with pytest.raises(ValueError):
        spectral.halfline_phase_integral(np.eye(2), np.ones(2), 0.0)
    with pytest.raises(ValueError):
        spectral.damped_integral(math.cos, -0.1)
    with pytest.raises(ValueError):
        spectral.verify_form_bound(np.eye(2), np.zeros(2), 0.0)


def test_spectral_norm_power_iteration(rng):
    a = rng.normal(size=(15, 10))
    est = spectral.spectral_norm(lambda x: a @ x, lambda y: a.T @ y, 10, tol=1e-12)
    assert est == pytest.approx(np.linalg.norm(a, 2), rel=1e-6)


def test_creation_bound_scale_invariance_and_zero(rng):
    grid = make_grid(1, [0.7, 1.3])
    basis = fk.FockBasis(4, 2)
    h = rng.normal(size=4) + 1j * rng.normal(size=4)
    r1 = spectral.verify_creation_bound(basis, grid, [h])
    r2 = spectral.verify_creation_bound(basis, grid, [3.7j * h])
    assert r1 == pytest.approx(r2, rel=1e-5)
    assert spectral.verify_creation_bound(basis, grid, [np.zeros(4)]) == 0
    c = spectral.calibrate_creation_constant(basis, grid, 1, draws=10, seed=1)
    assert r1 <= c


def test_form_bound_nonnegative_potential(rng):
    h = _herm(rng, 12)
    res = spectral.verify_form_bound(h, np.zeros(12), 0.5)
    assert res.d_eps == 0
    assert res.min_eigenvalue >= -1e-10


def test_form_bound_is_tight(rng):
    h = _herm(rng, 12)
    vm = np.abs(rng.normal(size=12))
    res = spectral.verify_form_bound(h, vm, 0.25, tol=1e-9)
    lower = np.linalg.eigvalsh(h)[0]
    exact = -np.linalg.eigvalsh(0.25 * (h - lower * np.eye(12)) - np.diag(vm))[0]
    assert res.d_eps == pytest.approx(max(exact, 0), abs=2e-9)
    assert res.d_eps_unshifted == pytest.approx(res.d_eps - 0.25 * lower)
