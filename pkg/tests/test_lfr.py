import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lowgain import examples as X
from lowgain import lfr as L
from lowgain.errors import (DimensionMismatch, DualConeInvalid, DualUnavailable,
                            FixedPointDivergence, SingularBasis)

SAT = L.DeltaMap.from_channels([("sat", 1.0)])


def _scalar(J=0.0):
    return L.make_lfr([[0.0]], [[1.0]], [[1.0]], [[J]], np.zeros((1, 1)), np.zeros((1, 1)))


def test_lti_recovery():
    F, E1 = np.array([[1.0, 2.0]]), np.array([[3.0]])
    lfr = L.make_lfr(F, E1=E1)
    assert (lfr.n_p, lfr.n_q) == (0, 0)
    assert lfr.is_lti
    e = L.eval_pi_delta(lfr, None, [1.0, -1.0], [2.0])
    np.testing.assert_array_equal(e, F @ [1.0, -1.0] + E1 @ [2.0])


def test_rectangular_channels_allowed():
    lfr = L.make_lfr(np.eye(2), np.ones((2, 3)), np.ones((1, 2)))
    assert (lfr.n_p, lfr.n_q) == (3, 1)
    assert lfr.J.shape == (1, 3)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        L.make_lfr(np.eye(2), np.ones((3, 1)))
    with pytest.raises(DimensionMismatch):
        L.make_lfr(np.eye(2), H=np.ones((1, 2)), J=np.ones((2, 2)))


def test_saturated_example_channels():
    lfr, dmap, _ = X.saturated_uncertain_example(1)
    assert (lfr.n_p, lfr.n_q) == (3, 3)
    assert np.linalg.norm(lfr.J, 2) <= 0.45 + 1e-12


def test_json_round_trip():
    lfr, _, _ = X.saturated_uncertain_example(2)
    back = L.Lfr.from_json(lfr.to_json())
    for k in ("F", "G", "H", "J", "E1", "E2"):
        np.testing.assert_array_equal(getattr(back, k), getattr(lfr, k))


@pytest.mark.parametrize("u, expected", [(2.0, 1.0), (0.5, 0.5), (-3.0, -1.0)])
def test_eval_saturation(u, expected):
    assert L.eval_pi_delta(_scalar(), SAT, [u], [0.0])[0] == pytest.approx(expected)


def test_eval_linear_fixed_point():
    lin = L.DeltaMap.from_channels([("lin", 1.0)])
    assert L.eval_pi_delta(_scalar(0.5), lin, [1.0], [0.0])[0] == pytest.approx(2.0, abs=1e-9)


def test_eval_generic_callable_matches_channel_form():
    lfr, dmap, _ = X.saturated_uncertain_example(3, 0.4)
    generic = L.DeltaMap(lambda q: dmap(q), 3, 3)
    u, w = np.linspace(-1, 1, lfr.m), np.ones(lfr.n_w)
    np.testing.assert_allclose(L.eval_pi_delta(lfr, generic, u, w),
                               L.eval_pi_delta(lfr, dmap, u, w), atol=1e-9)


def test_fixed_point_divergence():
    lin = L.DeltaMap.from_channels([("lin", 1.0)])
    with pytest.raises(FixedPointDivergence):
        L.eval_pi_delta(_scalar(3.0), lin, [1.0], [0.0], max_iter=200)


def test_well_posedness_examples():
    assert L.well_posedness_check(_scalar(0.0)) is L.WellPosedness.YES
    twoI = L.make_lfr(np.eye(2), np.eye(2), np.eye(2), 2 * np.eye(2))
    assert L.well_posedness_check(twoI, "scalar") is L.WellPosedness.NO
    J = np.array([[0.0, 0.3], [-0.3, 0.0]])
    small = L.make_lfr(np.eye(2), np.eye(2), np.eye(2), J)
    assert L.well_posedness_check(small, "scalar") is L.WellPosedness.YES
    assert L.well_posedness_check(small, "nonlinear") is L.WellPosedness.UNVERIFIED
    assert not L.well_posedness_check(small, "nonlinear")
    assert L.well_posedness_check(small, "lipschitz", lipschitz=1.0) is L.WellPosedness.YES


def test_loop_shift_preserves_map():
    lfr, _, _ = X.saturated_uncertain_example(4)
    d = L.DeltaMap.from_channels([("tanh", 0.5, 1.0)] * 3)
    shifted = L.loop_shift(lfr, 0.5)
    d2 = L.DeltaMap.from_channels([("tanh", 0.0, 1.0)] * 3)
    u, w = np.ones(lfr.m), np.arange(lfr.n_w, dtype=float)
    np.testing.assert_allclose(L.eval_pi_delta(shifted, d2, u, w),
                               L.eval_pi_delta(lfr, d, u, w), atol=1e-8)


def test_lipschitz_cone_basis():
    np.testing.assert_array_equal(L.lipschitz_cone(1.0, 1, 1).basis[0], np.diag([-1.0, 1.0]))
    np.testing.assert_array_equal(L.lipschitz_cone(2.0, 2, 2).basis[0],
                                  np.diag([-1.0, -1.0, 4.0, 4.0]))
    sat2 = L.DeltaMap.from_channels([("sat", 1.0), ("sat", 2.0)])
    assert L.check_iqc_samples(L.lipschitz_cone(1.0, 2, 2), sat2, 1000)


def test_sector_cone_examples():
    pair = L.sector_cone(0.0, 1.0)
    np.testing.assert_array_equal(pair.primal.basis[0], [[-2.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(pair.dual.basis[0], [[0.0, 1.0], [1.0, 2.0]])
    with pytest.raises(SingularBasis):
        L.sector_cone(1.0, 1.0)
    inv = np.linalg.inv(np.array([[-2.0, 5.0], [5.0, -8.0]]))
    np.testing.assert_allclose(L.sector_dual_unshifted(1.0, 4.0).basis[0], inv, atol=1e-12)


def test_sector_shift_moves_to_origin():
    pair = L.sector_cone(1.0, 4.0)
    np.testing.assert_array_equal(pair.shift, [[1.0]])
    np.testing.assert_array_equal(pair.dual_primal.basis[0], L.sector_primal(0.0, 3.0).basis[0])
    pair.check_signs()


def test_unshifted_sector_breaks_sign_condition():
    bad = L.ConePair(L.sector_primal(1.0, 4.0), L.sector_dual_unshifted(1.0, 4.0),
                     lambda th: 1.0 / np.asarray(th))
    with pytest.raises(DualConeInvalid):
        bad.check_signs()


def test_parametric_identity_element():
    pair = L.parametric_cone(2)
    theta = np.array([1.0, 0.0, 1.0])
    np.testing.assert_array_equal(pair.primal.element(theta), np.diag([-1.0, -1, 1, 1]))
    np.testing.assert_allclose(pair.dual.element(pair.to_dual(theta)), np.diag([-1.0, -1, 1, 1]))
    with pytest.raises(DualUnavailable):
        L.parametric_cone(2, allow_skew=True).dual


@pytest.mark.parametrize("skew", [0.0, 0.3])
def test_parametric_form_for_scalar_uncertainty(skew):
    delta = 0.7
    dmap = L.DeltaMap.linear(delta * np.eye(2))
    cone = L.parametric_cone(2, allow_skew=True).primal
    rng = np.random.default_rng(1)
    A = rng.standard_normal((2, 2))
    Q = A @ A.T + np.eye(2)
    theta = np.array([Q[0, 0], Q[0, 1], Q[1, 1], skew])
    for _ in range(1000):
        dq = rng.standard_normal(2)
        val = cone.quad_form(theta, dmap(dq), dq)
        assert val == pytest.approx((1 - delta ** 2) * dq @ Q @ dq, abs=1e-9)
    assert L.check_iqc_samples(cone, dmap, 1000, theta=theta)


def test_daug_template_pattern():
    a = np.array([[1.0, 2.0], [2.0, 3.0]])
    b = np.array([[5.0, 6.0], [6.0, 7.0]])
    expected = np.array([[1.0, 0, 2, 0], [0, 5, 0, 6], [2, 0, 3, 0], [0, 6, 0, 7]])
    np.testing.assert_array_equal(L.daug(a, 1, b, 1), expected)


def test_daug_of_lipschitz_cones():
    cone = L.daug_cone(L.lipschitz_cone(1.0, 1, 1), L.lipschitz_cone(2.0, 1, 1))
    np.testing.assert_array_equal(cone.element([2.0, 3.0]), np.diag([-2.0, -3.0, 2.0, 12.0]))


def test_saturation_cone_is_daug_of_parts():
    pair = X.saturated_cone_pair()
    ref = L.daug_cone(L.sector_primal(0.0, 1.0), L.parametric_cone(2, allow_skew=True).primal)
    assert pair.analysis_cone.n_params == ref.n_params
    for M, R in zip(pair.analysis_cone.basis, ref.basis):
        np.testing.assert_array_equal(M, R)


@given(st.integers(0, 10_000))
def test_daug_form_is_sum(seed):
    rng = np.random.default_rng(seed)
    a, b = L.sector_primal(0.0, 1.0), L.parametric_cone(2).primal
    ta, tb = a.sample_interior(rng), b.sample_interior(rng)
    cone = L.daug_cone(a, b)
    pa, pb, qa, qb = (rng.standard_normal(k) for k in (1, 2, 1, 2))
    lhs = cone.quad_form(np.concatenate([ta, tb]), np.r_[pa, pb], np.r_[qa, qb])
    assert lhs == pytest.approx(a.quad_form(ta, pa, qa) + b.quad_form(tb, pb, qb), rel=1e-9,
                                abs=1e-9)


@pytest.mark.parametrize("pair", [
    L.sector_cone(0.0, 1.0), L.sector_cone(0.5, 3.0), L.lipschitz_pair(2.0, 2),
    L.parametric_cone(2), L.parametric_cone(3),
    L.daug_pair(L.sector_cone(0.0, 1.0), L.parametric_cone(2)),
])
def test_inversion_identity_and_signs(pair):
    rng = np.random.default_rng(0)
    primal = pair.dual_primal
    for _ in range(20):
        th = primal.sample_interior(rng)
        prod = primal.element(th) @ pair.dual.element(pair.to_dual(th))
        np.testing.assert_allclose(prod, np.eye(prod.shape[0]), atol=1e-8)
    pair.check_signs()


def test_iqc_sampling_examples():
    zero = L.DeltaMap(lambda q: np.zeros(1), 1, 1)
    assert L.check_iqc_samples(L.sector_primal(0.0, 1.0), zero, 200)
    assert L.check_iqc_samples(L.sector_primal(0.0, 1.0), SAT, 10_000)
    res = L.check_iqc_samples(L.lipschitz_cone(1.0, 1, 1), L.DeltaMap.linear([[2.0]]), 100)
    assert not res
    assert res.witness["value"] < 0


def test_tanh_channel_in_sector():
    d = L.DeltaMap.from_channels([("tanh", 0.5, 1.5)])
    assert L.check_iqc_samples(L.sector_primal(0.5, 2.0), d, 2000)


def test_cone_catalog_round_trip():
    pair = X.saturated_cone_pair()
    back = L.cone_from_dict(L.cone_to_dict(pair))
    assert back.primal.n_params == pair.primal.n_params
    assert back.analysis_cone.n_params == pair.analysis_cone.n_params
    with pytest.raises(ValueError):
        L.cone_from_dict({"kind": "mystery"})


def test_delta_map_round_trip():
    d = L.DeltaMap.from_channels([("sat", 1.0), ("lin", 0.3), ("tanh", 0.1, 2.0)])
    back = L.DeltaMap.from_dict(d.to_dict())
    q = np.array([2.0, -1.0, 0.4])
    np.testing.assert_array_equal(back(q), d(q))
    with pytest.raises(ValueError):
        L.DeltaMap.from_channels([("cubic", 1.0)])
