import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import fd_grad_pair, random_probe
from ipslearn.models import (
    Box,
    DimensionMismatch,
    ParamVector,
    TruthSchedule,
    eval_diffusion,
    eval_drift_mean,
    eval_drift_pair,
    eval_grad_mean,
    eval_grad_pair,
    make_model,
    truth_at,
    weight_matrix,
)
from ipslearn.rng import InvalidConfiguration


# ---------------------------------------------------------------------------
# Pair drift values


def test_linear_drift_value():
    m = make_model("linear")
    b = eval_drift_pair(m, np.array([1.0, 0.2]), np.array([1.0]), np.array([0.0]))
    assert b == pytest.approx([-1.2], abs=0)


def test_kuramoto_drift_vanishes_at_equal_phases():
    m = make_model("kuramoto")
    x = np.array([0.73])
    assert eval_drift_pair(m, np.array([1.5]), x, x) == pytest.approx([0.0], abs=0)


def test_kuramoto_antisymmetry_exact():
    m = make_model("kuramoto")
    rng = np.random.default_rng(0)
    for _ in range(20):
        th = rng.standard_normal(1)
        x, y = rng.standard_normal(1), rng.standard_normal(1)
        assert np.array_equal(
            m.drift_pair(th, x, y), -m.drift_pair(th, y, x)
        )


def test_cucker_smale_drift_value():
    # psi(0.5, 4) = 5^-0.5; velocity drift = -0.2*0 - 1.0*psi*(1-0)
    m = make_model("cucker-smale")
    b = eval_drift_pair(
        m, np.array([0.2, 1.0, 0.5]), np.array([0.0, 1.0]), np.array([2.0, 0.0])
    )
    psi = (1.0 + 4.0) ** -0.5
    assert b[0] == pytest.approx(1.0, abs=0)
    assert b[1] == pytest.approx(-psi, rel=1e-12)


def test_cucker_smale_exponent_gradient():
    # chain rule on (1+u)^-t3: d/dt3 of the velocity drift is
    # +t2*log(1+u)*(1+u)^-t3*(v_i - v_j); checked against the FD oracle
    m = make_model("cucker-smale")
    th = np.array([0.2, 1.0, 0.5])
    x, y = np.array([0.0, 1.0]), np.array([2.0, 0.0])
    expected = np.log(5.0) * 5.0**-0.5  # = 0.71976176...
    g = eval_grad_pair(m, th, x, y)
    assert g[2, 1] == pytest.approx(expected, rel=1e-12)
    fd = fd_grad_pair(m, th, x, y)
    assert g[2, 1] == pytest.approx(fd[2, 1], rel=1e-6)


def test_gradients_match_finite_differences(zoo_model):
    rng = np.random.default_rng(42)
    for _ in range(20):
        theta, x, y = random_probe(zoo_model, rng)
        g = eval_grad_pair(zoo_model, theta, x, y)
        fd = fd_grad_pair(zoo_model, theta, x, y)
        assert np.linalg.norm(g - fd) <= 1e-6 * (1 + np.linalg.norm(g))


def test_linear_grad_is_theta_free():
    m = make_model("linear")
    x, y = np.array([0.4]), np.array([-1.1])
    g1 = eval_grad_pair(m, np.array([1.0, 0.2]), x, y)
    g2 = eval_grad_pair(m, np.array([-3.0, 7.0]), x, y)
    assert np.array_equal(g1, g2)
    assert g1 == pytest.approx(np.array([[-0.4], [-(0.4 + 1.1)]]))


# ---------------------------------------------------------------------------
# Empirical-measure forms


def test_drift_mean_linear_closed_form():
    m = make_model("linear")
    rng = np.random.default_rng(1)
    pos = rng.standard_normal((8, 1))
    th = np.array([1.0, 0.2])
    xbar = pos.mean()
    want = -1.0 * pos[2] - 0.2 * (pos[2] - xbar)
    assert eval_drift_mean(m, th, 2, pos) == pytest.approx(want, rel=1e-14)


def test_drift_mean_single_particle_reduces_to_pair():
    for mid in ("linear", "kuramoto", "vol32"):
        m = make_model(mid)
        rng = np.random.default_rng(3)
        pos = rng.standard_normal((1, m.d))
        th = rng.standard_normal(m.p)
        assert eval_drift_mean(m, th, 0, pos) == pytest.approx(
            eval_drift_pair(m, th, pos[0], pos[0]), rel=1e-14
        )


def test_drift_and_grad_mean_match_bruteforce(zoo_model):
    rng = np.random.default_rng(7)
    pos = rng.standard_normal((7, zoo_model.d))
    th = rng.standard_normal(zoo_model.p)
    brute_b = np.mean([zoo_model.drift_pair(th, pos[3], pos[j]) for j in range(7)], axis=0)
    brute_g = np.mean([zoo_model.grad_pair(th, pos[3], pos[j]) for j in range(7)], axis=0)
    assert eval_drift_mean(zoo_model, th, 3, pos) == pytest.approx(brute_b, abs=1e-14)
    assert eval_grad_mean(zoo_model, th, 3, pos) == pytest.approx(brute_g, abs=1e-14)
    brute_all = np.stack(
        [np.mean([zoo_model.drift_pair(th, pos[i], pos[j]) for j in range(7)], axis=0)
         for i in range(7)]
    )
    assert zoo_model.drift_ensemble(th, pos) == pytest.approx(brute_all, abs=1e-14)


def test_drift_mean_permutation_invariant(zoo_model):
    rng = np.random.default_rng(11)
    pos = rng.standard_normal((6, zoo_model.d))
    th = rng.standard_normal(zoo_model.p)
    base = eval_drift_mean(zoo_model, th, 0, pos)
    perm = np.concatenate([pos[:1], pos[1:][::-1]])
    assert eval_drift_mean(zoo_model, th, 0, perm) == pytest.approx(base, rel=1e-12)


def test_dimension_mismatch_rejected():
    m = make_model("linear")
    with pytest.raises(DimensionMismatch):
        eval_drift_pair(m, np.array([1.0, 0.2]), np.array([1.0, 2.0]), np.array([0.0]))
    with pytest.raises(DimensionMismatch):
        eval_drift_pair(m, np.array([1.0]), np.array([1.0]), np.array([0.0]))
    with pytest.raises(DimensionMismatch):
        eval_drift_mean(m, np.array([1.0, 0.2]), 9, np.zeros((3, 1)))


# ---------------------------------------------------------------------------
# Weighting and diffusion


def test_identity_weighting_never_inverts():
    # degenerate sigma blocks would make the inverse blow up; identity
    # weighting must not touch them
    for mid in ("fitzhugh-nagumo", "cucker-smale", "vol32"):
        m = make_model(mid)
        assert m.weighting == "identity"
        assert np.array_equal(weight_matrix(m), np.eye(m.d))


def test_inverse_weighting_value():
    m = make_model("linear", sigma=2.0)
    assert weight_matrix(m) == pytest.approx(np.array([[0.25]]))


def test_constant_diffusion_returned():
    m = make_model("linear", sigma=1.0)
    assert eval_diffusion(m, None, 0, np.zeros((2, 1))) == pytest.approx(np.eye(1))


def test_vol32_diffusion_values():
    m = make_model("vol32")
    sig, dsig = eval_diffusion(m, np.array([0.7]), 0, np.array([[-2.0]]))
    assert sig == pytest.approx(np.array([[0.7 * 2.0**1.5]]), rel=1e-12)
    _, dsig1 = eval_diffusion(m, np.array([0.7]), 0, np.array([[1.0]]))
    assert dsig1 == pytest.approx([1.4], rel=1e-12)


# ---------------------------------------------------------------------------
# Truth schedules, boxes


def test_changepoint_is_right_continuous():
    s = TruthSchedule("changepoint", [1.5], [0.2], switch_time=5000.0)
    assert truth_at(s, 4999.9) == pytest.approx([1.5])
    assert truth_at(s, 5000.0) == pytest.approx([0.2])


def test_ramp_interpolates_and_clamps():
    s = TruthSchedule("ramp", [1.5], [0.2], horizon=10000.0)
    assert truth_at(s, 5000.0) == pytest.approx([0.85])
    assert truth_at(s, 20000.0) == pytest.approx([0.2])


def test_constant_ignores_time():
    s = TruthSchedule.constant([1.0, 0.2])
    for t in (0.0, 3.7, 1e6):
        assert truth_at(s, t) == pytest.approx([1.0, 0.2])


def test_truth_at_rejects_negative_time():
    with pytest.raises(InvalidConfiguration):
        truth_at(TruthSchedule.constant([1.0]), -1.0)


def test_box_membership_and_validation():
    b = Box(np.array([0.0, -np.inf]), np.array([1.0, np.inf]))
    assert b.contains(np.array([0.5, 100.0]))
    assert not b.contains(np.array([-0.1, 0.0]))
    with pytest.raises(InvalidConfiguration):
        Box(np.array([1.0]), np.array([0.0]))


def test_param_vector_validation():
    with pytest.raises(DimensionMismatch):
        ParamVector(np.array([1.0, 2.0]), Box.unbounded(3))
    pv = ParamVector(np.array([1.0, 2.0]), Box.unbounded(2))
    assert pv.admissible.contains(pv.values)


@settings(max_examples=30, deadline=None)
@given(
    th=st.floats(-3, 3),
    x=st.floats(-5, 5),
    y=st.floats(-5, 5),
)
def test_kuramoto_gradient_property(th, x, y):
    m = make_model("kuramoto")
    theta = np.array([th])
    g = eval_grad_pair(m, theta, np.array([x]), np.array([y]))
    fd = fd_grad_pair(m, theta, np.array([x]), np.array([y]))
    assert np.linalg.norm(g - fd) <= 1e-6 * (1 + np.linalg.norm(g))
