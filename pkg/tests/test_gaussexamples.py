import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from covshift import gaussexamples as ge
from covshift.distmodel import GaussianLinearEnv
from covshift.errors import InputError


def spd(gen, d, floor=0.3):
    A = gen.standard_normal((d, d))
    return A @ A.T / d + floor * np.eye(d)


def rotation(gen, d):
    Q, R = np.linalg.qr(gen.standard_normal((d, d)))
    return Q * np.sign(np.diag(R))


# linear regression

def test_linreg_identity_mean():
    env = GaussianLinearEnv(np.eye(5), np.eye(5), np.ones(5), 1.0)
    r = ge.linreg_shift_mc(env, 500, 2000, seed=0)
    assert 0.0075 <= r["mean_risk"] <= 0.0125 and r["discarded"] == 0


def test_linreg_degenerate():
    env = GaussianLinearEnv(np.eye(3), np.eye(3), np.ones(3), 0.0)
    assert ge.linreg_shift_mc(env, 20, 10)["mean_risk"] == 0
    env = GaussianLinearEnv(np.eye(3), np.zeros((3, 3)), np.ones(3), 1.0)
    assert ge.linreg_shift_mc(env, 20, 10)["mean_risk"] == 0


def test_linreg_rotation_equivariance(gen):
    d, n = 4, 60
    S0, Se, w = spd(gen, d), spd(gen, d), gen.standard_normal(d)
    Q = rotation(gen, d)
    a = ge.linreg_shift_mc(GaussianLinearEnv(S0, Se, w), n, 3000, seed=1)
    b = ge.linreg_shift_mc(GaussianLinearEnv(Q @ S0 @ Q.T, Q @ Se @ Q.T, Q @ w), n, 3000, seed=2)
    se = math.hypot(a["std_error"], b["std_error"])
    assert abs(a["mean_risk"] - b["mean_risk"]) <= 3 * se


def test_linreg_mean_trace_identity(gen):
    # E[e^T Se e] = sigma^2 tr(Se S0^-1) / (n - d - 1) for Gaussian designs
    d, n = 3, 40
    S0, Se = spd(gen, d), spd(gen, d)
    r = ge.linreg_shift_mc(GaussianLinearEnv(S0, Se, np.ones(d)), n, 6000, seed=3)
    want = np.trace(Se @ np.linalg.inv(S0)) / (n - d - 1)
    assert abs(r["mean_risk"] - want) <= 4 * r["std_error"]


def test_linreg_bound_values(gen):
    assert ge.linreg_bound(np.eye(5), np.eye(5), 500, 0.1) == pytest.approx(0.02139, abs=1e-5)
    d, L = 6, math.log(1 / 0.3)
    assert ge.linreg_bound(np.eye(d), np.eye(d), 50, 0.3) == pytest.approx(
        (d + math.sqrt(d) * math.sqrt(L) + L) / 50)
    S0, Se = spd(gen, 4), spd(gen, 4)
    assert ge.linreg_bound(S0, 3 * Se, 100, 0.2) == pytest.approx(3 * ge.linreg_bound(S0, Se, 100, 0.2))
    with pytest.raises(InputError):
        ge.linreg_bound(np.diag([1.0, 0.0]), np.eye(2), 10, 0.1)
    with pytest.raises(InputError):
        ge.linreg_bound(np.eye(2), np.eye(2), 10, 1.5)


def test_linreg_mean_below_bound():
    env = GaussianLinearEnv(np.eye(5), np.eye(5), np.ones(5), 1.0)
    r = ge.linreg_shift_mc(env, 500, 2000, seed=0)
    assert r["mean_risk"] <= ge.linreg_bound(np.eye(5), np.eye(5), 500, 0.5)


# classification

def test_disagreement_examples():
    w = np.array([1.0, 2.0])
    assert ge.class_disagreement_mc(np.eye(2), w, w, 10_000).value == 0
    r = ge.class_disagreement_mc(np.eye(2), [1, 0], [0, 1], 200_000, seed=1)
    assert abs(r.value - 0.5) <= 3 * r.std_error
    with pytest.raises(InputError):
        ge.class_disagreement_mc(np.eye(2), [0, 0], [0, 1], 10)


def test_angle_law_and_rival_forms(gen):
    d = 4
    S, w, v = spd(gen, d, 0.05), gen.standard_normal(d), gen.standard_normal(d)
    mc = ge.class_disagreement_mc(S, w, v, 10**6, seed=5)
    exact = ge.class_angle(S, w, v)
    assert abs(mc.value - exact) <= 3 * mc.std_error
    # theta / (2 pi) and inverse-root whitening both disagree with the simulation
    assert abs(mc.value - exact / 2) > 10 * mc.std_error
    assert abs(mc.value - ge.class_angle(S, w, v, power=-0.5)) > 10 * mc.std_error


def test_rescaling_invariance(gen):
    S, w, v = spd(gen, 3), gen.standard_normal(3), gen.standard_normal(3)
    a = ge.class_disagreement_mc(S, w, v, 400_000, seed=1)
    b = ge.class_disagreement_mc(S, 3 * w, 0.5 * v, 400_000, seed=2)
    assert abs(a.value - b.value) <= 3 * math.hypot(a.std_error, b.std_error)


def test_class_risk_bound(gen):
    for _ in range(200):
        d = int(gen.integers(2, 8))
        S, w, v = spd(gen, d, 0.05), gen.standard_normal(d), gen.standard_normal(d)
        assert ge.class_angle(S, w, v) <= ge.class_risk_bound(S, w, v, c=2.3) + 1e-12


# renormalization

def test_renormalize_examples(gen):
    w = gen.standard_normal(5)
    same = ge.renormalize_check(w, 2 * w)
    assert same.lhs == pytest.approx(0, abs=1e-15) and same.rhs == pytest.approx(0, abs=1e-15)
    anti = ge.renormalize_check(w, -w)
    assert anti.lhs == pytest.approx(2) and anti.rhs == pytest.approx(2) and anti.holds
    with pytest.raises(InputError):
        ge.renormalize_check(np.zeros(3), w[:3])


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 16), st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_renormalize_property(d, seed, scale):
    g = np.random.default_rng(seed)
    w, v = g.standard_normal(d), scale * g.standard_normal(d)
    assert ge.renormalize_check(w, v).holds


def test_renormalize_batch_matches(gen):
    W, V = gen.standard_normal((50, 6)), gen.standard_normal((50, 6))
    lhs, rhs = ge.renormalize_batch(W, V)
    for k in range(50):
        r = ge.renormalize_check(W[k], V[k])
        assert lhs[k] == pytest.approx(r.lhs) and rhs[k] == pytest.approx(r.rhs)


# distribution shift classification

def test_dist_shift_identity():
    r = ge.dist_shift_class_mc(np.eye(5), np.eye(5), np.ones(5), 1.0, 50)
    assert np.allclose(r["expression"], 0) and np.allclose(r["risk"], 0, atol=1e-7)


def test_dist_shift_median_below_trace_bound(gen):
    S0, Se, w = spd(gen, 8), spd(gen, 8), gen.standard_normal(8)
    r = ge.dist_shift_class_mc(S0, Se, w, 0.9, 500, seed=1, c=3.0)
    assert np.median(r["expression"]) <= r["trace_bound"]
    assert np.all(r["risk"] <= 0.5)


def test_dist_shift_uniform_direction(gen):
    # mean of the quadratic form over the sphere equals trace / (d - 1)
    S0, Se, w = spd(gen, 6), spd(gen, 6), gen.standard_normal(6)
    r = ge.dist_shift_class_mc(S0, Se, w, 0.8, 20_000, seed=2)
    se = r["quad"].std(ddof=1) / math.sqrt(20_000)
    assert abs(r["quad"].mean() - r["mean_quad"]) <= 4 * se


def test_dist_shift_concentration(gen):
    iqr = {}
    for d in (8, 64):
        S0, Se, w = spd(gen, d), spd(gen, d), gen.standard_normal(d)
        q = ge.dist_shift_class_mc(S0, Se, w, 0.9, 500, seed=3)["quad"]
        iqr[d] = np.subtract(*np.quantile(q, [0.75, 0.25]))
    assert iqr[64] < iqr[8]


def test_dist_shift_errors(gen):
    with pytest.raises(InputError):
        ge.dist_shift_class_mc(np.eye(3), np.eye(3), np.ones(3), 0.0, 10)
    with pytest.raises(InputError):
        ge.dist_shift_class_mc(np.diag([1.0, 1.0, 0.0]), np.eye(3), np.ones(3), 0.5, 10)
