import numpy as np
import pytest

from conftest import build, desk_config
from pfscatter.modes import GridError
from pfscatter.scattering import Propagator


def _rand(rng, m=4):
    return rng.normal(size=m) + 1j * rng.normal(size=m)


def test_propagator_unitary_and_paths_agree(desk, rng):
    psi = rng.normal(size=desk.model.dim) + 0j
    psi /= np.linalg.norm(psi)
    dense = Propagator(desk.h, "dense").apply(psi, 5.0)
    kry = Propagator(desk.h, "krylov").apply(psi, 5.0)
    assert abs(np.linalg.norm(dense) - 1) <= 1e-12
    assert np.linalg.norm(dense - kry) <= 1e-8


def test_propagator_eigenvector_phase(desk):
    out = Propagator(desk.h, "dense").apply(desk.psi, 2.0)
    assert np.allclose(out, np.exp(-2j * desk.energy) * desk.psi, atol=1e-10)


def test_ground_state_quality(desk):
    r = desk.h @ desk.psi - desk.energy * desk.psi
    assert np.linalg.norm(r) <= 1e-10
    assert 0 < desk.ground.top_sector_weight < 1e-2


def test_decoupled_everything_vanishes(decoupled, rng):
    s = decoupled
    assert np.all(s.t_matrix(0.1) == 0)
    for i in range(4):
        assert s.pull_through(i).residual <= 1e-14
    h = _rand(rng)
    # with no coupling the asymptotic creator is the bare one
    assert np.allclose(s.asymptotic_create(h, 0.1, "in"), s.model.create(h) @ s.psi, atol=1e-14)


@pytest.mark.parametrize("direction", ["in", "out"])
def test_time_and_resolvent_paths_agree(desk, rng, direction):
    assert desk.cross_check_paths(_rand(rng), 0.2, direction) <= 1e-8


def test_krylov_time_path_matches(rng):
    s = build(desk_config(discretization={"matter_points": 16}, solver={"dense_threshold": 10}))
    h = _rand(rng)
    a = s.asymptotic_create(h, 0.4, "in", "time")
    b = s.asymptotic_create(h, 0.4, "in", "resolvent")
    assert np.linalg.norm(a - b) <= 1e-6 * np.linalg.norm(b)


def test_pull_through_residual_below_scale(desk):
    for i in range(4):
        p = desk.pull_through(i)
        assert 0 < p.residual < p.scale


def test_t_entry_term2_adjoint_identity(desk):
    # <u, (H - z)^{-1} v>^* = <v, (H - conj z)^{-1} u>
    i, j = 0, 1
    e = desk.t_entry(i, j, 0.1)
    z = desk.energy + desk.omega[j] + 0.1j
    back = desk.solver.solve(np.conj(z), desk.d1_psi(i)).x
    assert np.conj(e.term2) == pytest.approx(-np.vdot(desk.d1_psi(j), back), abs=1e-12)


def test_t_pair_extrapolation(desk):
    p = desk.t_pair(0, 1, (0.4, 0.2, 0.1, 0.05))
    assert [e.eta for e in p.entries] == [0.4, 0.2, 0.1, 0.05]
    assert p.entries[-1].value == pytest.approx(desk.t_value(0, 1, 0.05), abs=1e-12)


def test_mode_pair_specs(desk):
    assert len(desk.mode_pairs("all")) == 16
    assert desk.mode_pairs("diagonal") == [(i, i) for i in range(4)]
    assert set(desk.mode_pairs("shell")) == {(0, 0), (0, 1), (1, 0), (1, 1), (2, 2), (2, 3), (3, 2), (3, 3)}
    with pytest.raises(ValueError):
        desk.mode_pairs([(0, 9)])


def test_ray_scan_hits_grid_value(desk):
    r = desk.grid.radius[0]
    val = desk.ray_scan(0, [r], eta=0.1)[0]
    assert val == pytest.approx(desk.t_value(0, 0, 0.1), rel=1e-10)


def test_prop_identity_linear_in_h(desk, rng):
    h1, h2 = _rand(rng), _rand(rng)
    a = desk.verify_prop_tmat(0, h1, 0.2, path="resolvent")
    b = desk.verify_prop_tmat(0, h2, 0.2, path="resolvent")
    c = desk.verify_prop_tmat(0, h1 + 2j * h2, 0.2, path="resolvent")
    assert c.lhs == pytest.approx(a.lhs + 2j * b.lhs, abs=1e-12)
    assert c.rhs == pytest.approx(a.rhs + 2j * b.rhs, abs=1e-12)
    assert c.identity_residual <= 1e-10


def test_intertwine_at_zero_time(desk, rng):
    c = desk.verify_intertwine(_rand(rng), 0.0, 0.1)
    assert c.discrepancy <= 1e-14 and c.predicted == 0


def test_intertwine_prediction(desk, rng):
    c = desk.verify_intertwine(_rand(rng), 1.0, 0.1)
    assert c.prediction_mismatch <= 1e-10


def test_s_matrix_decomposition(desk):
    f, h = np.eye(4)[0].astype(complex), np.eye(4)[1].astype(complex)
    r = desk.s_matrix(f, h, 0.2)
    assert r.identity_residual <= 1e-10
    assert r.quadrature_error <= 1e-8
    assert r.within_budget
    assert np.isfinite(r.delta_form)


def test_s_matrix_rejects_bad_input(desk):
    with pytest.raises(GridError):
        desk.s_matrix(np.ones(3), np.ones(4), 0.1)
    with pytest.raises(GridError):
        desk.s_matrix(np.array([np.nan, 0, 0, 0]), np.ones(4), 0.1)


def test_eta_must_be_positive(desk):
    with pytest.raises(ValueError):
        desk.t_entry(0, 0, 0.0)
