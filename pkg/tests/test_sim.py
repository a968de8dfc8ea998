import numpy as np
import pytest
from scipy.integrate import trapezoid

from lowgain import examples as X
from lowgain import lfr as L
from lowgain import model as M
from lowgain import sim
from lowgain import synthesis as S
from lowgain.errors import (DimensionMismatch, NoCrossover, NonFiniteState, StepSizeUnderflow,
                            ZeroDenominator)

ONE = sim.SignalSpec.constant([1.0])


def test_signal_validation():
    with pytest.raises(ValueError):
        sim.SignalSpec.steps([(1.0, [1.0])])
    with pytest.raises(ValueError):
        sim.SignalSpec.steps([(0.0, [1.0]), (2.0, [0.0]), (2.0, [1.0])])
    with pytest.raises(ValueError):
        sim.SignalSpec("ramp")


def test_steps_are_right_continuous():
    w = sim.SignalSpec.steps([(0.0, [1.0]), (2.0, [3.0])])
    assert w(1.999)[0] == 1.0
    assert w(2.0)[0] == 3.0
    assert w.knots(10.0) == [2.0]


def test_step_sequence_is_cumulative():
    w = sim.SignalSpec.step_sequence(3, 10.0, amplitude=2.0)
    np.testing.assert_array_equal(w(0.0), [2.0, 0.0, 0.0])
    np.testing.assert_array_equal(w(25.0), [2.0, 2.0, 2.0])


def test_signal_dict_round_trip():
    for w in (ONE, sim.SignalSpec.steps([(0.0, [1.0, 0.0]), (3.0, [0.0, -1.0])])):
        back = sim.SignalSpec.from_dict(w.to_dict())
        for t in (0.0, 2.9, 3.0, 7.0):
            np.testing.assert_array_equal(back(t), w(t))


def test_pendulum_regulates():
    pl = X.pendulum_plant(2.0)
    res = sim.simulate_closed_loop(pl, M.IntegralController(np.eye(1), 0.05), ONE, 800.0)
    assert abs(res.e[0, -1]) < 1e-6
    assert res.u[0, -1] == pytest.approx(1.0, abs=1e-5)
    assert np.all(np.diff(res.t) > 0)
    assert res.x.shape == (1, res.t.size)


def test_pendulum_equilibrium_map():
    pl = X.pendulum_plant(2.0)
    xbar = pl.metadata["pi_x"](1.0, 0.0)
    assert xbar == pytest.approx(np.arcsin(0.5))
    assert abs(pl.f(xbar, 1.0, 0.0)) < 1e-12
    np.testing.assert_allclose(pl.f(np.array([0.0]), np.array([0.7]), np.array([0.2])), [0.5])


def test_frozen_integrator():
    pl = X.pendulum_plant(2.0)
    res = sim.simulate_closed_loop(pl, M.IntegralController(np.eye(1), 0.0),
                                 sim.SignalSpec.constant([0.0]), 40.0, eta0=[0.4])
    np.testing.assert_array_equal(res.eta[0], 0.4)
    assert res.x[0, -1] == pytest.approx(np.arcsin(0.2), abs=1e-8)


def test_lti_step_sequence_settles():
    # the H-infinity gain is faster than the Davison gain, so its epsilon is
    # chosen to match the Davison loop's bandwidth at eps = 0.1
    ss = M.random_stable_system(4, 10, 7, 5, 5)
    dc = M.dc_gains(ss)
    K = S.hinf_lti_synthesis(dc).K
    eps = sim.match_bandwidth_epsilon(dc, S.davison_gain(dc), 0.1, K)
    w = sim.SignalSpec.step_sequence(5, 10.0 / eps)
    res = sim.simulate_closed_loop(ss, M.IntegralController(K, eps), w, 5 * 10.0 / eps)
    events = sim.settling_report(res, 1e-4)
    assert len(events) == 5
    assert all(ev["settled_at"] is not None for ev in events)


def test_dimension_checks():
    pl = X.pendulum_plant(2.0)
    with pytest.raises(DimensionMismatch):
        sim.simulate_closed_loop(pl, M.IntegralController(np.eye(2), 0.1), ONE, 1.0)
    with pytest.raises(DimensionMismatch):
        sim.simulate_closed_loop(pl, M.IntegralController(np.eye(1), 0.1),
                                 sim.SignalSpec.constant([1.0, 2.0]), 1.0)


def test_blow_up_is_reported():
    def f(x, u, w):
        with np.errstate(over="ignore"):
            return x ** 2
    plant = M.NonlinearPlant(1, 1, 1, 1, f, lambda x, u, w: x)
    with pytest.raises((NonFiniteState, StepSizeUnderflow)):
        sim.simulate_closed_loop(plant, M.IntegralController(np.eye(1), 0.1), ONE, 5.0,
                                 x0=[1.0])
    with pytest.raises(NonFiniteState):
        sim.simulate_closed_loop(plant, M.IntegralController(np.eye(1), 0.1), ONE, 5.0,
                                 x0=[1.0], fixed_step=0.01)


def test_agc_reduced_equilibrium():
    spec = X.PowerSystemSpec(1.0, (1.0, 1.0), (1.0, 1.0))
    agc = X.agc_reduced(spec)
    assert agc(np.array([0.3]), np.array([1.0]))[0] == pytest.approx(-2 * 0.3 + 1)
    res = sim.simulate_reduced(agc, np.eye(1), ONE, [0.0], 20.0 / agc.rho_s)
    assert res.eta[0, -1] == pytest.approx(0.5, abs=1e-8)
    assert abs(res.e[0, -1]) < 1e-8
    lfr, d, _ = X.power_system_lfr(spec)
    via_lfr = sim.simulate_reduced((lfr, d), np.eye(1), ONE, [0.0], 20.0)
    assert abs(via_lfr.e[0, -1]) < 1e-6


def test_heterogeneous_agc_rate():
    spec = X.PowerSystemSpec.heterogeneous(beta=2.0)
    agc = X.agc_reduced(spec)
    assert agc.rho_s == pytest.approx(1.5 / 2.0)
    from lowgain.measures import grid_contraction_check
    worst, _ = grid_contraction_check(agc.jacobian, [(-10.0, 10.0)], [[0.0]], grid_density=201)
    assert worst <= -agc.rho_s + 1e-6
    res = sim.simulate_reduced(agc, np.eye(1), ONE, [0.0], 20.0 / agc.rho_s)
    assert abs(res.e[0, -1]) < 1e-6


def test_scalar_reduced_closed_form():
    res = sim.simulate_reduced(lambda u, w: u + w, np.eye(1), ONE, [2.0], 5.0)
    np.testing.assert_allclose(res.eta[0], -1.0 + 3.0 * np.exp(-res.t), atol=1e-7)


def test_error_is_minus_eta_rate():
    lfr, d, _ = X.power_system_lfr(X.PowerSystemSpec.heterogeneous())
    res = sim.simulate_reduced((lfr, d), np.eye(1), ONE, [3.0], 4.0, points_per_interval=4001)
    rate = np.gradient(res.eta[0], res.t)
    np.testing.assert_allclose(res.e[0, 5:-5], -rate[5:-5], atol=1e-4)


def test_saturated_reduced_converges():
    lfr, d, pair = X.saturated_uncertain_example(1, -0.5)
    K = S.robust_synthesis(lfr, pair, analyze=False).K
    w = sim.SignalSpec.constant(np.ones(lfr.n_w))
    res = sim.simulate_reduced((lfr, d), K, w, np.zeros(lfr.p), 150.0)
    assert np.all(np.isfinite(res.eta))
    assert np.max(np.abs(res.e[:, -1])) < 1e-6


def test_fixed_step_is_deterministic_and_agrees():
    lfr, d, _ = X.power_system_lfr(X.PowerSystemSpec.heterogeneous())
    w = sim.SignalSpec.steps([(0.0, [1.0]), (5.0, [-1.0])])
    a = sim.simulate_reduced((lfr, d), np.eye(1), w, [0.0], 10.0, fixed_step=0.005)
    b = sim.simulate_reduced((lfr, d), np.eye(1), w, [0.0], 10.0, fixed_step=0.005)
    np.testing.assert_array_equal(a.eta, b.eta)
    np.testing.assert_array_equal(a.t, b.t)
    c = sim.simulate_reduced((lfr, d), np.eye(1), w, [0.0], 10.0, points_per_interval=1001)
    for sa, sc in zip(a.segments, c.segments):
        np.testing.assert_allclose(sa.t, sc.t, atol=1e-12)
        np.testing.assert_allclose(sa.eta, sc.eta, atol=1e-5)


def test_csv_layout():
    ss = M.StateSpace(A=[[-1.0]], B=[[1.0]], C=[[1.0]], Bw=[[1.0]])
    res = sim.simulate_closed_loop(ss, M.IntegralController(np.eye(1), 0.5), ONE, 2.0)
    lines = res.to_csv().splitlines()
    assert lines[0] == "t,eta_1,e_1,u_1,x_1"
    assert len(lines) == res.t.size + 1


def test_incremental_gain_scalar_all_pass():
    lfr = L.make_lfr([[1.0]], E1=[[1.0]])
    pulse = sim.SignalSpec.steps([(0.0, [1.0]), (1.0, [0.0])])
    g = sim.incremental_gain_estimate(lfr, np.eye(1), pulse, sim.SignalSpec.constant([0.0]),
                                      [0.0], t_final=30.0)
    assert g <= 1.01


def test_incremental_gain_power_system():
    lfr, d, _ = X.power_system_lfr(X.PowerSystemSpec(1.0, (1.0,), (1.0,)))
    wa = sim.SignalSpec.steps([(0.0, [1.0]), (1.0, [0.0])])
    g = sim.incremental_gain_estimate((lfr, d), np.eye(1), wa, sim.SignalSpec.constant([0.0]),
                                      [0.0], t_final=30.0)
    assert 0.0 < g <= 1.01
    with pytest.raises(ZeroDenominator):
        sim.incremental_gain_estimate((lfr, d), np.eye(1), ONE, ONE, [0.0], t_final=5.0)


def test_energy_inequality_with_initial_offset():
    spec = X.PowerSystemSpec.heterogeneous()
    lfr, d, pair = X.power_system_lfr(spec)
    an = S.robust_analysis(lfr, pair.primal, np.eye(1))
    w = sim.SignalSpec.constant([0.5])
    ra = sim.simulate_reduced((lfr, d), np.eye(1), w, [2.0], 30.0)
    rb = sim.simulate_reduced((lfr, d), np.eye(1), w, [-1.0], 30.0)
    num = trapezoid((ra.e[0] - rb.e[0]) ** 2, ra.t)
    assert num <= np.linalg.eigvalsh(an.P)[-1] * 3.0 ** 2 * 1.02


def test_bandwidth_matching():
    dc = M.DcGains(np.array([[2.0]]), np.array([[1.0]]))
    K = S.davison_gain(dc)
    assert sim.crossover_frequency(dc, K, 0.3) == pytest.approx(0.3, rel=1e-9)
    assert sim.match_bandwidth_epsilon(dc, K, 0.3, K) == pytest.approx(0.3, rel=1e-3)
    eps = sim.match_bandwidth_epsilon(dc, K, 0.3, 2 * K)
    assert eps == pytest.approx(0.15, rel=1e-3)
    assert sim.crossover_frequency(dc, 2 * K, eps) == pytest.approx(0.3, rel=1e-3)
    with pytest.raises(NoCrossover):
        sim.crossover_frequency(M.DcGains(np.eye(1), np.zeros((1, 1))), np.eye(1), 1.0)


def test_faster_design_needs_smaller_epsilon():
    dc = M.dc_gains(M.random_stable_system(1, 30, 7, 5, 5))
    K_d = S.davison_gain(dc)
    K_h = S.hinf_lti_synthesis(dc).K
    eps = sim.match_bandwidth_epsilon(dc, K_d, 0.1, K_h)
    speed = np.min(np.linalg.eigvals(dc.G0 @ K_h).real)
    assert (eps > 0.1) == (speed < 1.0)
