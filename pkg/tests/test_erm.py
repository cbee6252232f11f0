import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from covshift import distmodel as dm
from covshift import erm
from covshift.errors import InputError, ShapeError
from covshift.funclass import Domain, FiniteFamily
from conftest import random_env


def fam(vals, dom):
    return FiniteFamily(np.atleast_2d(vals), 1.0, dom)


# finite ERM

def test_realizable_zero_loss(gen):
    env = random_env(gen, 4, 3)
    F = fam(np.vstack([gen.uniform(-1, 1, (5, 4)), env.f_star]), Domain.X)
    G = fam(np.vstack([env.g_star, gen.uniform(-1, 1, (4, 3))]), Domain.Y)
    s = dm.sample(env, 50, seed=1)
    sol = erm.erm_finite(F, G, s)
    assert sol.empirical_loss <= 1e-15
    a = F.values[sol.f_index, s.x_ids] + G.values[sol.g_index, s.y_ids]
    assert np.allclose(a, s.z)


def test_single_pair(gen):
    env = random_env(gen, 2, 2, sigma=0.5)
    s = dm.sample(env, 30, seed=2)
    F, G = fam(gen.uniform(-1, 1, 2), Domain.X), fam(gen.uniform(-1, 1, 2), Domain.Y)
    sol = erm.erm_finite(F, G, s)
    r = F.values[0, s.x_ids] + G.values[0, s.y_ids] - s.z
    assert (sol.f_index, sol.g_index) == (0, 0)
    assert sol.empirical_loss == pytest.approx(np.mean(r * r), rel=1e-12)


@pytest.mark.parametrize("threads", [1, 3])
def test_matches_double_loop(gen, threads):
    env = random_env(gen, 4, 4, sigma=0.3)
    F, G = fam(gen.uniform(-1, 1, (5, 4)), Domain.X), fam(gen.uniform(-1, 1, (7, 4)), Domain.Y)
    s = dm.sample(env, 20, seed=3)
    best, arg = np.inf, None
    for i in range(5):
        for j in range(7):
            L = np.mean((F.values[i, s.x_ids] + G.values[j, s.y_ids] - s.z) ** 2)
            if L < best - 1e-12:
                best, arg = L, (i, j)
    sol = erm.erm_finite(F, G, s, threads=threads, block=2)
    assert (sol.f_index, sol.g_index) == arg
    assert sol.empirical_loss == pytest.approx(best, rel=1e-12)


def test_ties_lexicographic():
    env = dm.DiscreteEnv.from_atoms([[0, 0, 1.0]])
    F = fam([[0.0], [0.0]], Domain.X)
    G = fam([[0.0], [0.0], [0.5]], Domain.Y)
    sol = erm.erm_finite(F, G, dm.sample(env, 5, seed=0))
    assert (sol.f_index, sol.g_index, sol.ties) == (0, 0, 4)


def test_erm_finite_domain_check(gen):
    env = random_env(gen, 2, 2)
    F = fam(np.zeros(2), Domain.Y)
    with pytest.raises(ShapeError):
        erm.erm_finite(F, F, dm.sample(env, 3, seed=0))


def test_consistency_in_n():
    g = np.random.default_rng(5)
    env = random_env(g, 4, 4, sigma=1.0)
    F = fam(np.vstack([env.f_star, g.uniform(-1, 1, (9, 4))]), Domain.X)
    G = fam(np.vstack([env.g_star, g.uniform(-1, 1, (9, 4))]), Domain.Y)
    means, ses = [], []
    for n in (50, 200, 800):
        r = []
        for seed in range(50):
            sol = erm.erm_finite(F, G, dm.sample(env, n, seed=seed))
            r.append(erm.risk_pair(env, F.values[sol.f_index], G.values[sol.g_index]))
        means.append(np.mean(r))
        ses.append(np.std(r, ddof=1) / np.sqrt(50))
    for k in range(2):
        assert means[k + 1] <= means[k] + ses[k]


# linear ERM

def test_linear_interpolation(gen):
    X, Y = gen.standard_normal((40, 3)), gen.standard_normal((40, 2))
    z = X @ [1.0, -2.0, 0.5] + Y @ [0.3, 0.7]
    sol = erm.erm_linear(X, Y, z)
    assert sol.empirical_loss <= 1e-20
    assert np.allclose(sol.f_weights, [1, -2, 0.5]) and sol.kkt_residual <= 1e-8


def test_linear_min_norm_split():
    X = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]])
    Y = np.ones((3, 1))
    z = np.array([2.0, 3.0, 4.0])
    sol = erm.erm_linear(X, Y, z)
    # shared constant direction: minimum norm splits the intercept equally
    assert sol.f_weights[0] == pytest.approx(sol.g_weights[0], abs=1e-12)
    assert sol.f_weights[0] + sol.g_weights[0] == pytest.approx(2.0)
    assert sol.kkt_residual <= 1e-8


def test_linear_ridge_shrinks(gen):
    X, Y = gen.standard_normal((30, 2)), gen.standard_normal((30, 2))
    z = gen.standard_normal(30)
    sol = erm.erm_linear(X, Y, z, ridge=1e12)
    assert np.abs(np.r_[sol.f_weights, sol.g_weights]).max() < 1e-10
    assert erm.erm_linear(X, Y, z, ridge=0.1).kkt_residual <= 1e-8


def test_linear_errors():
    with pytest.raises(InputError):
        erm.erm_linear(np.array([[np.inf]]), np.ones((1, 1)), [0.0])
    with pytest.raises(ShapeError):
        erm.erm_linear(np.ones((2, 1)), np.ones((3, 1)), [0.0, 1.0])
    with pytest.raises(InputError):
        erm.erm_linear(np.ones((1, 1)), np.ones((1, 1)), [0.0], ridge=-1)


# risks

def test_risk_examples(gen):
    env = random_env(gen, 3, 3)
    fs, gs = env.f_star, env.g_star
    assert erm.risk_pair(env, fs, gs) == 0
    assert erm.risk_pair(env, fs + 0.3, gs - 0.3) == pytest.approx(0, abs=1e-15)
    assert erm.risk_f(env, fs) == 0 and erm.risk_g_given_f(env, gs, fs) == 0
    f, g = gen.uniform(-1, 1, 3), gen.uniform(-1, 1, 3)
    want = sum(p * (f[x] - fs[x] + g[y] - gs[y]) ** 2
               for x, y, p in zip(env.x_ids, env.y_ids, env.probs))
    assert erm.risk_pair(env, f, g) == pytest.approx(want, rel=1e-12)


def test_risk_f_independent_constant():
    env = dm.DiscreteEnv.from_joint(np.outer([.3, .7], [.4, .6]), f_star=[0.2, -0.1])
    assert erm.risk_f(env, env.f_star + 0.5) == pytest.approx(0, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.floats(0.2, 1.0), st.integers(0, 2**32 - 1))
def test_decomposition_and_test_inequality(nx, ny, dens, seed):
    g = np.random.default_rng(seed)
    train = random_env(g, nx, ny, dens)
    test = random_env(g, nx, ny, dens, truth=False)
    f, gg = g.uniform(-1, 1, nx), g.uniform(-1, 1, ny)
    R = erm.risk_pair(train, f, gg)
    assert abs(R - erm.risk_f(train, f) - erm.risk_g_given_f(train, gg, f)) < 1e-10
    fs, gs = train.f_star, train.g_star
    Rt = erm.risk_pair(test, f, gg, fs, gs)
    rf = erm.risk_f(test, f, fs, beta_env=train)
    rg = erm.risk_g_given_f(test, gg, f, gs, fs, beta_env=train)
    assert Rt <= 2 * (rf + rg) + 1e-10
