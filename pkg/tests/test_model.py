import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from lowgain import model as M
from lowgain.errors import DimensionMismatch, NotHurwitz, RankDeficiencyAfterRetries
from lowgain.synthesis import davison_gain


def test_scalar_dc_gain():
    dc = M.dc_gains(M.StateSpace(A=[[-1.0]], B=[[1.0]], C=[[1.0]], D=[[0.0]]))
    assert dc.G0 == pytest.approx(np.array([[1.0]]))
    assert dc.Gw0.shape == (1, 0)


def test_identity_dc_gain():
    ss = M.StateSpace(A=-np.eye(2), B=np.eye(2), C=np.eye(2), Bw=[[1.0], [0.0]])
    dc = M.dc_gains(ss)
    np.testing.assert_allclose(dc.G0, np.eye(2))
    np.testing.assert_allclose(dc.Gw0, [[1.0], [0.0]])


def test_dc_gain_matches_settled_step_response():
    ss = M.random_stable_system(3, 6, 2, 2, 1)
    dc = M.dc_gains(ss)
    slowest = np.min(np.abs(np.linalg.eigvals(ss.A).real))
    t_end = 200.0 / slowest
    for j in range(ss.m):
        u = np.eye(ss.m)[j]
        sol = solve_ivp(lambda t, x: ss.A @ x + ss.B @ u, (0.0, t_end), np.zeros(ss.n),
                        method="LSODA", rtol=1e-11, atol=1e-13)
        np.testing.assert_allclose(ss.C @ sol.y[:, -1], dc.G0[:, j], atol=1e-6)


def test_dc_gain_rejects_unstable():
    with pytest.raises(NotHurwitz):
        M.dc_gains(M.StateSpace(A=[[0.5]], B=[[1.0]], C=[[1.0]]))


def test_state_space_dimension_check():
    with pytest.raises(DimensionMismatch):
        M.StateSpace(A=np.eye(2), B=np.ones((3, 1)), C=np.ones((1, 2)))


def test_state_space_json_round_trip():
    ss = M.random_stable_system(5, 4, 2, 2, 2)
    back = M.StateSpace.from_json(ss.to_json())
    for name in ("A", "B", "C", "D", "Bw", "Dw"):
        np.testing.assert_array_equal(getattr(back, name), getattr(ss, name))
    json.loads(ss.to_json())


@pytest.mark.parametrize("A, expected", [
    ([[-1.0]], True),
    ([[0.0, 1.0], [-1.0, 0.0]], False),
    ([[-1.0, 100.0], [0.0, -1.0]], True),
])
def test_is_hurwitz_examples(A, expected):
    assert M.is_hurwitz(A) is expected


def test_is_hurwitz_margin():
    assert M.is_hurwitz([[-0.5]], margin=0.4)
    assert not M.is_hurwitz([[-0.5]], margin=0.6)


@given(st.integers(0, 10_000))
def test_random_stable_system_is_stable_and_full_rank(seed):
    ss = M.random_stable_system(seed, 8, 3, 2, 2)
    assert M.is_hurwitz(ss.A, margin=0.09)
    G0 = M.dc_gains(ss).G0
    assert np.linalg.svd(G0, compute_uv=False)[-1] > 1e-8


def test_random_stable_system_reference_instance():
    a = M.random_stable_system(1, 30, 7, 5, 5)
    b = M.random_stable_system(1, 30, 7, 5, 5)
    for name in ("A", "B", "C", "Bw"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    assert M.is_hurwitz(a.A)
    assert np.linalg.matrix_rank(M.dc_gains(a).G0) == 5
    assert M.is_hurwitz(M.random_stable_system(7, 10, 3, 3, 1).A)


def test_random_stable_system_rejects_wide_output():
    with pytest.raises(RankDeficiencyAfterRetries):
        M.random_stable_system(0, 4, 2, 3, 1)


@pytest.mark.parametrize("g0, gw0, k, eps, expect", [
    (1.0, 1.0, 1.0, 1.0, (-1.0, -1.0, 1.0, 1.0)),
    (2.0, 3.0, 0.5, 2.0, (-2.0, -6.0, 1.0, 3.0)),
])
def test_slow_dynamics_scalar(g0, gw0, k, eps, expect):
    dc = M.DcGains(np.array([[g0]]), np.array([[gw0]]))
    s = M.slow_dynamics_lti(dc, [[k]], eps)
    got = (s.A[0, 0], s.Bw[0, 0], s.C[0, 0], s.Dw[0, 0])
    assert got == pytest.approx(expect)


@given(st.integers(0, 500), st.floats(0.01, 5.0))
def test_slow_dynamics_spectrum(seed, eps):
    dc = M.dc_gains(M.random_stable_system(seed, 5, 3, 2, 1))
    K = np.random.default_rng(seed).standard_normal((3, 2))
    s = M.slow_dynamics_lti(dc, K, eps)
    ev = np.sort_complex(np.linalg.eigvals(s.A))
    ref = np.sort_complex(-eps * np.linalg.eigvals(dc.G0 @ K))
    np.testing.assert_allclose(ev, ref, atol=1e-9 * (1 + np.abs(ref).max()))


def test_davison_sensitivity_closed_form():
    dc = M.dc_gains(M.random_stable_system(2, 12, 4, 3, 2))
    K = davison_gain(dc)
    eps = 0.3
    resp = M.sensitivity_response(dc, K, eps)
    gw = np.linalg.norm(dc.Gw0, 2)
    w = resp.omega
    np.testing.assert_allclose(resp.sigma_max, w / np.sqrt(w ** 2 + eps ** 2) * gw, atol=1e-9)
    at_eps = M.sensitivity_response(dc, K, eps, [eps]).sigma_max[0]
    assert at_eps == pytest.approx(gw / np.sqrt(2), abs=1e-9)
    high = M.sensitivity_response(dc, K, eps, [1e6 * eps]).sigma_max[0]
    assert high == pytest.approx(gw, abs=1e-6)


def test_sensitivity_rejects_bad_grid_and_shape():
    dc = M.DcGains(np.eye(2), np.ones((2, 1)))
    with pytest.raises(ValueError):
        M.sensitivity_response(dc, np.eye(2), 1.0, [0.0, 1.0])
    with pytest.raises(DimensionMismatch):
        M.sensitivity_response(dc, np.eye(3), 1.0)


def test_freq_response_csv():
    dc = M.DcGains(np.eye(1), np.ones((1, 1)))
    csv = M.sensitivity_response(dc, np.eye(1), 1.0, [1.0, 2.0]).to_csv().splitlines()
    assert csv[0] == "omega,sigma_max"
    assert len(csv) == 3


def test_integral_controller():
    c = M.IntegralController([[2.0, 0.0]], 0.1)
    assert c.is_linear
    np.testing.assert_allclose(c.control(np.array([1.0, 5.0])), [2.0])
    with pytest.raises(ValueError):
        M.IntegralController(np.eye(1), -1.0)
    nl = M.IntegralController(lambda eta: np.tanh(eta), 0.1)
    assert not nl.is_linear


def test_nonlinear_plant_from_state_space():
    ss = M.StateSpace(A=[[-2.0]], B=[[1.0]], C=[[3.0]], Bw=[[1.0]])
    pl = M.NonlinearPlant.from_state_space(ss)
    x, u, w = np.array([1.0]), np.array([0.5]), np.array([2.0])
    np.testing.assert_allclose(pl.rhs(x, u, w), [0.5])
    np.testing.assert_allclose(pl.output(x, u, w), [3.0])
