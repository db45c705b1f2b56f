import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relgate import _kernels, amplitudes
from relgate.amplitudes import QuadratureError, build_table, stationary_I_closed, stationary_J_closed

from conftest import stationary_config

LABEL_SIGN = {"B": 1, "-B": -1}


def test_mode_fn_zeros_and_norm():
    L = math.pi
    assert amplitudes.mode_fn(2, L / 2, L) == 0.0
    assert amplitudes.mode_fn(3, 0.0, L) == 0.0
    assert amplitudes.mode_fn(3, L, L) == 0.0
    assert amplitudes.mode_fn(1, L / 2, L) == pytest.approx(1.0 / math.sqrt(math.pi))
    # integral of the squared profile is 1/(2 w_j)
    x = np.linspace(0, L, 20001)
    for j in (1, 4):
        val = np.trapezoid(amplitudes.mode_fn(j, x, L) ** 2, x)
        assert val == pytest.approx(1.0 / (2 * j), rel=1e-6)


def test_parse_label():
    assert amplitudes.parse_label("-A") == (0, -1)
    with pytest.raises(ValueError):
        amplitudes.parse_label("C")


@pytest.mark.parametrize("T", [0.3, 1.0, 2.5])
def test_stationary_target_I_closed_form(T):
    cfg = stationary_config(**{"probe.T": T, "target.x": 1.1})
    table = build_table(cfg)
    L = cfg.cavity.length
    for j in range(1, 4):
        w = j * math.pi / L
        prof = float(amplitudes.mode_fn(j, 1.1, L))
        for label, g in LABEL_SIGN.items():
            for s in (1, -1):
                ref = stationary_I_closed(g * s * 1.0 + w, prof, T)
                assert abs(table.I(label, s, j) - ref) < 1e-10


@pytest.mark.parametrize("T", [0.3, 1.0, 2.5])
def test_stationary_target_J_closed_form(T):
    cfg = stationary_config(**{"probe.T": T, "target.x": 1.1})
    table = build_table(cfg)
    L = cfg.cavity.length
    for j in range(1, 4):
        w = j * math.pi / L
        prof = float(amplitudes.mode_fn(j, 1.1, L))
        for mu, g1 in LABEL_SIGN.items():
            for s1 in (1, -1):
                for s2 in (1, -1):
                    ref = stationary_J_closed(g1 + w, s1 + s2 * w, prof, prof, T)
                    assert abs(table.J(mu, "B", s1, s2, j) - ref) < 1e-10


def test_resonant_double_integral():
    # gap and mode 1 on resonance: both phases vanish and J = p^2 T^2 / 2
    T = 1.7
    cfg = stationary_config(**{"probe.T": T})
    table = build_table(cfg)
    prof = float(amplitudes.mode_fn(1, math.pi / 2, math.pi))
    expect = prof * prof * T * T / 2
    assert stationary_J_closed(0.0, 0.0, prof, prof, T) == pytest.approx(expect, rel=1e-15)
    assert abs(table.J("-B", "B", 1, -1, 1) - expect) < 1e-12
    assert abs(table.I("-B", 1, 1) - prof * T) < 1e-12


def test_closed_form_resonance_branches():
    # the zero-rate branches agree with the limit of the generic formula
    near = stationary_J_closed(0.7, 1e-9, 1.0, 1.0, 2.0, dps=60)
    exact = stationary_J_closed(0.7, 0.0, 1.0, 1.0, 2.0)
    assert near == pytest.approx(exact, abs=1e-8)
    near = stationary_J_closed(1e-9, -1e-9, 1.0, 1.0, 2.0, dps=60)
    assert near == pytest.approx(2.0, abs=1e-8)


def test_probe_amplitudes_vanish_at_wall():
    # a = 0 keeps the probe at the node x = 0
    table = build_table(stationary_config(**{"probe.coupling": 0.01}))
    assert np.all(table.totals[:, :4] == 0)
    assert np.all(table.K[:, :2, :] == 0)


@pytest.mark.parametrize("a,T", [(0.5, 0.5), (2.3, 1.5)])
def test_backends_agree(small_config, a, T):
    cfg = small_config.replace(**{"probe.a": a, "probe.T": T})
    ref = build_table(cfg, kernel=_kernels.mode_integrals_numpy)
    kernels = [_kernels._mode_integrals_loops]
    if _kernels.HAVE_NUMBA:
        kernels.append(_kernels.mode_integrals_numba)
    for kern in kernels:
        other = build_table(cfg, kernel=kern)
        assert np.max(np.abs(other.totals - ref.totals)) < 1e-13
        assert np.max(np.abs(other.K - ref.K)) < 1e-13


def test_backend_selection():
    assert _kernels._select("numpy")[0] == "numpy"
    if _kernels.HAVE_NUMBA:
        assert _kernels._select("numba")[0] == "numba"
        with pytest.raises(ValueError):
            _kernels._select("fortran")


def test_extend_table_matches_build(small_config):
    t4 = build_table(small_config)
    t7 = build_table(small_config.replace(**{"cavity.modes": 7}))
    ext = amplitudes.extend_table(t4, small_config, 7)
    assert ext.n_modes == 7
    np.testing.assert_array_equal(ext.totals, t7.totals)
    np.testing.assert_array_equal(ext.K, t7.K)
    assert amplitudes.extend_table(t4, small_config, 3) is t4


def test_single_amplitudes_match_table(small_config):
    table = build_table(small_config)
    assert amplitudes.compute_I(small_config, "A", -1, 2) == table.I("A", -1, 2)
    assert amplitudes.compute_J(small_config, "-A", "B", 1, -1, 3) == table.J("-A", "B", 1, -1, 3)


def test_zero_time_gives_zeros(small_config):
    table = build_table(small_config.replace(**{"probe.T": 0.0}))
    assert not np.any(table.totals) and not np.any(table.K)
    assert table.max_error == 0.0


def test_quadrature_error_carries_estimate(small_config):
    cfg = small_config.replace(**{"numerics.max_refine": 1, "numerics.rtol": 1e-300, "numerics.atol": 1e-300})
    with pytest.raises(QuadratureError) as exc:
        build_table(cfg)
    assert exc.value.error > 0
    tot, K = exc.value.estimate
    assert tot.shape == (8,) and K.shape == (4, 8)


def test_csv_and_keys(small_config):
    table = build_table(small_config)
    keys = table.keys()
    assert len(keys) == small_config.cavity.modes * (8 + 32)
    text = table.to_csv()
    assert text.count("\n") == len(keys) + 1
    assert str(keys[0]) == "I[+;A;1]"


@settings(max_examples=25, deadline=None)
@given(a=st.floats(0, 2.3), T=st.floats(0.05, 1.5), j=st.integers(1, 4))
def test_ordered_integrals_sum_to_product(a, T, j):
    # K(g1, g2) + K(g2, g1) = I(g1) I(g2) for the two time orderings
    from relgate.model import SimulationConfig

    cfg = SimulationConfig().replace(**{"probe.a": a, "probe.T": T, "cavity.modes": 4, "numerics.mode_check": False})
    table = build_table(cfg)
    tot, K = table.totals[j - 1], table.K[j - 1]
    rows = _kernels.ROWS
    for r1, c1 in enumerate(rows):
        for r2, c2 in enumerate(rows):
            lhs = K[r1, c2] + K[r2, c1]
            assert abs(lhs - tot[c1] * tot[c2]) < 1e-11


def test_negated_label_and_sign_mirror(small_config):
    # flipping the gap label and the ladder sign together leaves the phase unchanged
    table = build_table(small_config)
    for d in "AB":
        for s in (1, -1):
            np.testing.assert_array_equal(table.I("-" + d, -s), table.I(d, s))
            for mu in ("A", "-A", "B", "-B"):
                for s2 in (1, -1):
                    np.testing.assert_array_equal(table.J(mu, "-" + d, -s, s2), table.J(mu, d, s, s2))


def test_dimensional_scaling(small_config):
    # Omega, omega_j, a -> 2x; T, L, x_B -> 1/2: I -> I/2, J -> J/4
    cfg = small_config.replace(**{"probe.a": 1.0, "probe.T": 1.0, "target.x": 1.2})
    scaled = cfg.replace(**{
        "probe.a": 2.0, "probe.T": 0.5, "probe.gap": 2.0, "target.gap": 2.0,
        "cavity.length": math.pi / 2, "target.x": 0.6,
    })
    t1, t2 = build_table(cfg), build_table(scaled)
    assert np.max(np.abs(t2.totals - t1.totals / 2)) < 1e-12
    assert np.max(np.abs(t2.K - t1.K / 4)) < 1e-12


def test_smooth_in_T(small_config):
    from relgate import kinematics

    a, T, j = 1.0, 0.8, 1
    L = small_config.cavity.length
    base = small_config.replace(**{"probe.a": a})
    I0 = amplitudes.compute_I(base, "A", 1, j, T=T)
    w = j * math.pi / L
    f = (
        kinematics.redshift(a, T) * amplitudes.mode_fn(j, kinematics.position(a, T), L)
        * np.exp(1j * (kinematics.proper_time(a, T) + w * T))
    )
    resid = []
    for delta in (1e-3, 5e-4):
        resid.append(abs(amplitudes.compute_I(base, "A", 1, j, T=T + delta) - I0 - f * delta))
    assert resid[0] / resid[1] == pytest.approx(4.0, rel=0.05)
