import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lowgain import examples as X
from lowgain import sdp
from lowgain.errors import NoFeasibleGamma


def _scalar_min():
    space = sdp.VarSpace()
    x = space.scalar("x")
    return sdp.LmiProblem.build(space, [sdp.psd(x - np.eye(1))], minimize=x)


def test_one_variable_minimum():
    sol = sdp.solve(_scalar_min())
    assert sol.status == "optimal"
    assert sol.value("x").item() == pytest.approx(1.0, abs=1e-6)
    assert sol.objective_value == pytest.approx(1.0, abs=1e-6)
    assert sol.min_block_eig >= -1e-9


def test_lyapunov_scalar():
    space = sdp.VarSpace()
    P = space.symmetric("P", 1)
    M = np.eye(1)
    prob = sdp.LmiProblem.build(space, [sdp.psd(M.T @ P + P @ M, strict=True),
                                        sdp.psd(P, strict=True)],
                                equalities=[(sdp.trace(P), 1.0)])
    sol = sdp.solve(prob)
    assert sol.ok
    assert sol.value("P").item() == pytest.approx(1.0, abs=1e-8)


def test_power_system_lmi_threshold():
    assert sdp.is_feasible(X.power_system_lmi(1.0, 1.0, 1.0, 1.01))
    assert not sdp.is_feasible(X.power_system_lmi(1.0, 1.0, 1.0, 0.99))


def test_infeasible_status():
    space = sdp.VarSpace()
    x = space.scalar("x")
    prob = sdp.LmiProblem.build(space, [sdp.psd(x - np.eye(1)), sdp.psd(-x)])
    sol = sdp.solve(prob)
    assert not sol.ok
    assert sol.status in ("infeasible", "numerical-failure")


def test_returned_points_are_verified():
    prob = X.power_system_lmi(2.0, 1.0, 4.0, 0.7)
    sol = sdp.solve(prob)
    assert sol.ok
    assert sdp.verify_point(prob, sol.x) >= -1e-9
    assert sol.min_block_eig == pytest.approx(sdp.verify_point(prob, sol.x), abs=1e-12)


@pytest.mark.parametrize("args, expected", [((1.0, 1.0, 1.0), 1.0), ((2.0, 1.0, 4.0), 0.625)])
def test_bisect_power_system(args, expected):
    g = sdp.bisect_gamma(lambda gam: X.power_system_lmi(*args, gam), 0.0, 4.0, tol=1e-3)
    assert g == pytest.approx(expected, abs=1e-3)
    assert sdp.is_feasible(X.power_system_lmi(*args, g + 1e-3))
    assert not sdp.is_feasible(X.power_system_lmi(*args, g - 1e-3))


def _bounded_real(a, b, c, gamma):
    # |c b / (s + a)| has H-infinity norm |c b| / a
    space = sdp.VarSpace()
    P = space.symmetric("P", 1)
    blk = sdp.bmat([[-2.0 * a * P + np.array([[c * c]]), b * P],
                    [b * P, np.array([[-gamma ** 2]])]])
    return sdp.LmiProblem.build(space, [sdp.nsd(blk, strict=True), sdp.psd(P, strict=True)])


def test_bisect_bounded_real_scalar():
    g = sdp.bisect_gamma(lambda gam: _bounded_real(1.0, 1.0, 3.0, gam), 0.0, 1.0, tol=1e-3)
    assert g == pytest.approx(3.0, abs=1e-3)


def test_bisect_cap_and_tol():
    space = sdp.VarSpace()
    x = space.scalar("x")
    never = sdp.LmiProblem.build(space, [sdp.psd(x - np.eye(1)), sdp.psd(-x)])
    with pytest.raises(NoFeasibleGamma):
        sdp.bisect_gamma(lambda g: never, 0.0, 1.0)
    with pytest.raises(ValueError):
        sdp.bisect_gamma(lambda g: never, 0.0, 1.0, tol=0.0)


@settings(max_examples=15)
@given(st.floats(0.3, 3.0), st.floats(1.0, 6.0), st.floats(0.2, 4.0))
def test_scaling_invariance(beta, kappa, gamma):
    prob = X.power_system_lmi(beta, 1.0, kappa, gamma)
    blocks = [sdp.LmiBlock(10.0 * b.const, {j: 10.0 * C for j, C in b.coeffs.items()},
                           b.strict, b.margin, b.name) for b in prob.blocks]
    scaled = sdp.LmiProblem(prob.n_vars, blocks, prob.objective, prob.equalities, prob.space)
    gstar = X.power_system_gamma_star(beta, 1.0, kappa)
    if abs(gamma - gstar) < 1e-3 * gstar:
        return
    assert sdp.is_feasible(prob) == sdp.is_feasible(scaled) == (gamma > gstar)


def test_affine_algebra():
    space = sdp.VarSpace()
    S = space.symmetric("S", 2)
    Z = space.matrix("Z", 2, 1, mask=np.array([[True], [False]]))
    x = np.arange(space.n, dtype=float) + 1.0
    Sv = space.value("S", x)
    np.testing.assert_allclose(Sv, Sv.T)
    assert space.value("Z", x)[1, 0] == 0.0
    expr = sdp.bmat([[S, Z], [Z.T, np.eye(1)]])
    assert expr.shape == (3, 3)
    np.testing.assert_allclose(sdp.trace(S).value(x), np.trace(Sv))
