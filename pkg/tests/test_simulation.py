import numpy as np
import pytest
import scipy.linalg

from hinf_observer import (NonFiniteState, PreconditionViolated, Scenario, UncertaintyRealization,
                           ZeroDisturbance, decay_check, integrate, l2_gain_estimate, example_system)
from hinf_observer.nonlinearities import Zero
from hinf_observer.simulation import disturbance, scenario_suite, sinusoid, unit_pulse

L5 = np.array([[5.0], [5.0]])


@pytest.fixture(scope="module")
def linear():
    return example_system(Zero(2))


def _exact(sys_, L, x0, xh0, t):
    # joint linear flow of (x, xhat) with phi = 0, w = 0, F = 0
    A, C = sys_.A, sys_.C
    M = np.block([[A, np.zeros((2, 2))], [L @ C, A - L @ C]])
    return np.array([scipy.linalg.expm(M * ti) @ np.concatenate([x0, xh0]) for ti in t])


def test_matches_matrix_exponential(linear):
    x0, xh0 = np.array([1.0, -1.0]), np.zeros(2)
    tr = integrate(Scenario(linear, L5, x0, xh0, t_final=5.0, dt=1e-3))
    ref = _exact(linear, L5, x0, xh0, tr.t[::100])
    got = np.hstack([tr.x, tr.xhat])[::100]
    assert np.abs(got - ref).max() < 1e-6


def test_rk4_order(linear):
    x0, xh0 = np.array([1.0, -1.0]), np.array([0.3, 0.2])
    errs = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        tr = integrate(Scenario(linear, L5, x0, xh0, t_final=2.0, dt=dt))
        ref = _exact(linear, L5, x0, xh0, [2.0])[0]
        errs.append(np.abs(np.concatenate([tr.x[-1], tr.xhat[-1]]) - ref).max())
    for a, b in zip(errs, errs[1:]):
        assert 16 / 4 <= a / b <= 16 * 4


def test_identical_start_gives_zero_error(example):
    x0 = np.array([0.7, -0.4])
    tr = integrate(Scenario(example, L5, x0, x0, t_final=2.0))
    assert np.abs(tr.e).max() < 1e-12


def test_trace_csv_columns(example):
    tr = integrate(Scenario(example, L5, [1, 0], [0, 0], w=sinusoid(1), t_final=0.01))
    header = tr.to_csv().splitlines()[0]
    assert header == "t,x_1,x_2,xhat_1,xhat_2,z_1,z_2,w_1"
    assert len(tr.to_csv().splitlines()) == 1 + 11


def test_blow_up_reported():
    sys_ = example_system(Zero(2)).replace(A=[[60.0, 0.0], [0.0, 60.0]])
    with pytest.raises(NonFiniteState):
        integrate(Scenario(sys_, np.zeros((2, 1)), [1, 1], [0, 0], t_final=20.0, dt=1e-2))


def test_decay_passes_for_synthesized_gain(example, pareto_095):
    tr = integrate(Scenario(example, pareto_095.L, [1.0, -1.0], [0.0, 0.0], t_final=10.0))
    assert decay_check(tr, 0.35, pareto_095.P1)


def test_decay_fails_for_undamped_error():
    osc = example_system(Zero(2)).replace(A=[[0.0, 1.0], [-1.0, 0.0]])
    tr = integrate(Scenario(osc, np.zeros((2, 1)), [1.0, 0.0], [0.0, 0.0], t_final=5.0))
    dc = decay_check(tr, 0.35, np.eye(2))
    assert not dc.passed
    assert dc.worst_ratio > 1


def test_decay_vacuous_for_zero_error(example):
    tr = integrate(Scenario(example, L5, [0.0, 0.0], [0.0, 0.0], t_final=1.0))
    assert decay_check(tr, 0.35, np.eye(2)).worst_ratio == 0.0


def test_decay_needs_nominal_trace(example):
    tr = integrate(Scenario(example, L5, [1, 0], [0, 0], w=sinusoid(1), t_final=0.1))
    with pytest.raises(PreconditionViolated):
        decay_check(tr, 0.35, np.eye(2))
    F = UncertaintyRealization.sinusoidal(np.eye(2))
    tr = integrate(Scenario(example, L5, [1, 0], [0, 0], F=F, t_final=0.1))
    with pytest.raises(PreconditionViolated):
        decay_check(tr, 0.35, np.eye(2))


def test_l2_gain_scale_invariant(linear):
    a = integrate(Scenario(linear, L5, [0, 0], [0, 0], w=unit_pulse(1), t_final=10.0))
    ten = lambda t: 10.0 * unit_pulse(1)(t)
    ten.kind = "pulse"
    b = integrate(Scenario(linear, L5, [0, 0], [0, 0], w=ten, t_final=10.0))
    assert l2_gain_estimate([b]) == pytest.approx(l2_gain_estimate([a]), rel=1e-9)


def test_l2_gain_zero_output(linear):
    sys_ = linear.replace(H=np.zeros((2, 2)))
    tr = integrate(Scenario(sys_, L5, [0, 0], [0, 0], w=sinusoid(1), t_final=2.0))
    assert l2_gain_estimate([tr]) == 0.0


def test_l2_gain_preconditions(example):
    tr = integrate(Scenario(example, L5, [0, 0], [0, 0], t_final=0.5))
    with pytest.raises(ZeroDisturbance):
        l2_gain_estimate([tr])
    tr = integrate(Scenario(example, L5, [1, 0], [0, 0], w=sinusoid(1), t_final=0.5))
    with pytest.raises(PreconditionViolated):
        l2_gain_estimate([tr])


def test_scenario_suite_is_seeded(example):
    a = scenario_suite(example, L5, 6, seed=3)
    b = scenario_suite(example, L5, 6, seed=3)
    assert [s.w.kind for s in a] == ["pulse", "sin", "noise"] * 2
    for s, r in zip(a, b):
        assert np.array_equal(s.w(1.3), r.w(1.3))
        assert np.array_equal(s.F(0.7), r.F(0.7))
        s.F.check(np.linspace(0, 20, 50))


def test_unknown_disturbance_kind():
    with pytest.raises(ValueError):
        disturbance("chirp", 1)
