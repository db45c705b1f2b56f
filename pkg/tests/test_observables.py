import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relgate import dyson, observables
from relgate.model import SIGMA_X, SIGMA_Z, density_from_bloch, target_state
from relgate.observables import UndefinedAngleError, bloch, delta_angles, purity, wrap_angle


def test_spec_examples():
    rec = bloch(np.diag([1.0, 0.0]).astype(complex))
    assert rec.r == (0.0, 0.0, 1.0) and rec.theta == 0.0
    rec = bloch(0.5 * (np.eye(2) + SIGMA_X))
    assert rec.theta == pytest.approx(math.pi / 2) and rec.phi == 0.0
    rec = bloch(0.5 * np.eye(2, dtype=complex))
    assert rec.radius == 0.0 and rec.purity == 0.5
    assert rec.theta is None and rec.phi is None


def test_purity_examples():
    assert purity(target_state(1.0, 2.0)) == pytest.approx(1.0)
    assert purity(0.5 * np.eye(2)) == 0.5
    assert purity(density_from_bloch(np.array([0.0, 0.0, 0.6]))) == pytest.approx(0.68)


def test_delta_angles_z_rotation():
    rho = target_state(math.pi / 2, 0.3)
    assert delta_angles(rho, rho) == (0.0, 0.0)
    U = np.diag([1.0, np.exp(1j * 0.1)])
    dt, dp = delta_angles(rho, U @ rho @ U.conj().T)
    assert dt == pytest.approx(0.0, abs=1e-15)
    assert dp == pytest.approx(0.1, abs=1e-15)


def test_undefined_angle_raises():
    with pytest.raises(UndefinedAngleError):
        delta_angles(0.5 * np.eye(2), target_state(1.0, 0.0))


def test_theta_uses_direction():
    # shrinking r must not move theta
    r = np.array([0.3, 0.4, 0.5])
    a, b = bloch(density_from_bloch(r)), bloch(density_from_bloch(0.5 * r))
    assert a.theta == pytest.approx(b.theta, abs=1e-15)
    assert observables.THETA_CONVENTION == "direction"


def test_wrap_angle():
    assert wrap_angle(math.pi) == math.pi
    assert wrap_angle(-math.pi) == math.pi
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    np.testing.assert_allclose(wrap_angle(np.array([0.0, 7.0])), [0.0, 7.0 - 2 * math.pi])


angle = st.floats(0.05, math.pi - 0.05)
azim = st.floats(-math.pi, math.pi)


@settings(max_examples=60, deadline=None)
@given(t1=angle, p1=azim, t2=angle, p2=azim, shrink=st.floats(0.1, 1.0))
def test_antisymmetry_and_purity_identity(t1, p1, t2, p2, shrink):
    a = target_state(t1, p1)
    b = 0.5 * np.eye(2) + shrink * (target_state(t2, p2) - 0.5 * np.eye(2))
    dt, dp = delta_angles(a, b)
    rt, rp = delta_angles(b, a)
    assert rt == pytest.approx(-dt, abs=1e-12)
    assert abs(wrap_angle(rp + dp)) < 1e-12
    assert purity(b) == pytest.approx(np.trace(b @ b).real, abs=1e-12)
    assert bloch(b).radius <= 1 + 1e-8


@settings(max_examples=60, deadline=None)
@given(t1=angle, p1=azim, t2=angle, p2=azim, chi=azim)
def test_basis_phase_invariance(t1, p1, t2, p2, chi):
    # relabelling |g> -> e^{i chi}|g> shifts every phi by the same amount
    a, b = target_state(t1, p1), target_state(t2, p2)
    U = np.diag([1.0, np.exp(1j * chi)])
    ua, ub = U @ a @ U.conj().T, U @ b @ U.conj().T
    d0, d1 = delta_angles(a, b), delta_angles(ua, ub)
    assert d1[0] == pytest.approx(d0[0], abs=1e-12)
    assert wrap_angle(d1[1] - d0[1]) == pytest.approx(0.0, abs=1e-11)


def test_batch_matches_scalar():
    rng = np.random.default_rng(3)
    rho0 = np.stack([target_state(t, p) for t, p in rng.uniform([0.1, -3], [3.0, 3], size=(8, 2))])
    rho = np.stack([0.9 * target_state(t, p) + 0.05 * np.eye(2) for t, p in rng.uniform([0.1, -3], [3.0, 3], size=(8, 2))])
    dt, dp, pur = observables.batch_angles(rho0, rho)
    for k in range(8):
        ref = delta_angles(rho0[k], rho[k])
        assert dt[k] == pytest.approx(ref[0], abs=1e-14)
        assert dp[k] == pytest.approx(ref[1], abs=1e-14)
        assert pur[k] == pytest.approx(purity(rho[k]), abs=1e-15)


def test_batch_marks_poles_and_mixed():
    north = target_state(0.0, 0.0)
    mixed = 0.5 * np.eye(2, dtype=complex)
    eq = target_state(math.pi / 2, 0.0)
    dt, dp, _ = observables.batch_angles(np.stack([north, eq, mixed]), np.stack([north, eq, eq]))
    assert dt[0] == 0.0 and math.isnan(dp[0])
    assert dt[1] == 0.0 and dp[1] == 0.0
    assert math.isnan(dt[2]) and math.isnan(dp[2])


def test_no_coupling_end_to_end(small_config):
    st_ = dyson.assemble(small_config.replace(**{"probe.coupling": 0.0, "target.coupling": 0.0}))
    assert delta_angles(st_.rho0, st_.rho) == (0.0, 0.0)


def test_pauli_reconstruction():
    rho = target_state(0.7, -1.1)
    r = observables.bloch_vector(rho)
    back = 0.5 * (np.eye(2) + r[0] * SIGMA_X + r[1] * np.array([[0, -1j], [1j, 0]]) + r[2] * SIGMA_Z)
    np.testing.assert_allclose(back, rho, atol=1e-15)
