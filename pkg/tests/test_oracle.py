import math

import numpy as np
import pytest

from relgate import amplitudes, dyson, oracle
from relgate.model import SimulationConfig
from relgate.observables import delta_angles
from relgate.oracle import TruncatedSpace

from conftest import stationary_config


@pytest.fixture
def oracle_base():
    return SimulationConfig().replace(**{"field.alpha_re": 0.5})


def test_space_dimension():
    assert TruncatedSpace().dim == 484
    assert TruncatedSpace(1, 4).enlarged().n_max == 6


def test_coherent_amplitudes():
    c, tail = oracle.coherent_amplitudes(0.5, 10)
    assert np.sum(np.abs(c) ** 2) == pytest.approx(1.0, abs=1e-15)
    assert c[1] / c[0] == pytest.approx(0.5)
    assert 1e-8 < tail < 1e-7  # known: n_max = 10 leaves a ~7.7e-8 tail at alpha = 0.5
    c0, tail0 = oracle.coherent_amplitudes(0.0, 5)
    assert c0[0] == 1 and tail0 == 0.0


def test_no_coupling_keeps_initial_state(oracle_base):
    cfg = oracle_base.with_couplings(0.0)
    res = oracle.exact_evolve(cfg, TruncatedSpace(2, 4), check_truncation=False)
    st = dyson.assemble(oracle.oracle_config(cfg))
    assert np.max(np.abs(res.rho - st.rho0)) < 1e-14


def test_zero_time(oracle_base):
    res = oracle.exact_evolve(oracle_base.replace(**{"probe.T": 0.0}), TruncatedSpace(2, 4))
    assert res.steps == 0


def test_trace_and_positivity(oracle_base):
    res = oracle.exact_evolve(oracle_base.with_couplings(0.05), TruncatedSpace(2, 6), check_truncation=False)
    assert abs(np.trace(res.rho) - 1) < 1e-10
    assert np.linalg.eigvalsh(res.rho).min() > -1e-10
    assert res.step_change < 1e-10


def test_stationary_excitation_matches_first_order():
    # ground target, vacuum field: P_e = lambda^2 sum_j |I[B;+;j]|^2 + O(lambda^4)
    T, lam = 1.0, 0.02
    cfg = stationary_config(**{
        "probe.T": T, "target.theta": math.pi, "field.alpha_re": 0.0,
        "target.coupling": lam, "cavity.modes": 2,
    })
    res = oracle.exact_evolve(cfg, TruncatedSpace(2, 3))
    pe = res.rho[0, 0].real
    L = cfg.cavity.length
    pred = 0.0
    for j in (1, 2):
        prof = float(amplitudes.mode_fn(j, cfg.target.x, L))
        pred += abs(amplitudes.stationary_I_closed(1.0 + j * math.pi / L, prof, T)) ** 2
    pred *= lam * lam
    assert abs(pe - pred) < 10 * lam**4


@pytest.mark.parametrize("integrator,order", [("magnus4", 4), ("midpoint", 2)])
def test_step_order(oracle_base, integrator, order):
    ratio = oracle.step_order(oracle_base.with_couplings(0.1), TruncatedSpace(2, 4), integrator, steps=8)
    assert ratio == pytest.approx(2.0**order, rel=0.1)


def test_unknown_integrator(oracle_base):
    with pytest.raises(ValueError):
        oracle.evolve_fixed(oracle_base, TruncatedSpace(1, 2), 2, "euler")


def test_step_budget_exhausted(oracle_base):
    with pytest.raises(oracle.OracleError):
        oracle.exact_evolve(oracle_base.with_couplings(0.1), TruncatedSpace(1, 3), tol=1e-300, max_steps=64, check_truncation=False)


def test_truncation_visible():
    cfg = SimulationConfig().replace(**{"field.alpha_re": 2.0}).with_couplings(0.2)
    with pytest.raises(oracle.OracleError):
        oracle.exact_evolve(cfg, TruncatedSpace(1, 2))


def test_residual_scaling(oracle_base):
    rep = oracle.residual_scaling(oracle_base)
    assert rep.ok, rep.to_text()
    assert 2.7 <= rep.exponent <= 3.3
    assert 6 <= rep.distances[0] / rep.distances[1] <= 10
    assert rep.first_order_exponent == pytest.approx(2.0, abs=0.2)
    text = rep.to_text()
    assert text.startswith("lambda,trace_distance") and "status,ok" in text


def test_phi_sign_agrees(oracle_base):
    cfg = oracle_base.with_couplings(0.01)
    exact = oracle.exact_evolve(cfg)
    pert = dyson.assemble(oracle.oracle_config(cfg))
    d_exact = delta_angles(pert.rho0, exact.rho)[1]
    d_pert = delta_angles(pert.rho0, pert.rho)[1]
    assert d_exact != 0 and math.copysign(1, d_exact) == math.copysign(1, d_pert)
    assert d_pert == pytest.approx(d_exact, rel=0.05)


def test_fit_exponent():
    assert oracle.fit_exponent([1, 2, 4], [3, 24, 192]) == pytest.approx(3.0)
