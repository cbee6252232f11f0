import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from covshift import distmodel as dm
from covshift import funclass as fc
from covshift.errors import ConfigError, DomainError, InputError, ShapeError
from covshift.funclass import Domain, EvaluatedFamily, FiniteFamily
from conftest import random_env


def product_env(px, py, f_star=None, g_star=None):
    return dm.DiscreteEnv.from_joint(np.outer(px, py), 0.0, f_star, g_star)


# families and evaluation

def test_family_bound_enforced():
    with pytest.raises(ConfigError):
        FiniteFamily([[0.0, 2.0]], 1.0, Domain.X)
    F = FiniteFamily([[0.5, -1.0]], 1.0, Domain.X)
    assert not F.zero_included and F.with_zero().zero_included


def test_family_json_roundtrip():
    F = FiniteFamily([[0.5, -1.0], [0, 0]], 1.0, Domain.Y)
    back = FiniteFamily.from_dict(F.to_dict())
    assert np.array_equal(back.values, F.values) and back.domain == Domain.Y
    with pytest.raises(ConfigError):
        FiniteFamily.from_dict({**F.to_dict(), "extra": 1})


def test_evaluate_examples(gen):
    pts = dm.SampleSet(np.array([0, 1, 0]), np.array([0, 0, 0]), np.zeros(3), 3, 0)
    Z = FiniteFamily(np.zeros((2, 2)), 1.0, Domain.X)
    assert np.all(fc.evaluate(Z, pts).matrix == 0)
    F = FiniteFamily([[0.3, -0.7]], 1.0, Domain.X)
    assert np.array_equal(fc.evaluate(F, pts).matrix, [[0.3, -0.7, 0.3]])
    vals = gen.uniform(-1, 1, (4, 5))
    G = FiniteFamily(vals, 1.0, Domain.Y)
    ys = gen.integers(0, 5, 9)
    s = dm.SampleSet(np.zeros(9, int), ys, np.zeros(9), 9, 0)
    M = fc.evaluate(G, s).matrix
    for i in range(4):
        for j in range(9):
            assert M[i, j] == vals[i, ys[j]]


def test_evaluate_out_of_range():
    F = FiniteFamily([[0.3, -0.7]], 1.0, Domain.X)
    s = dm.SampleSet(np.array([2]), np.array([0]), np.zeros(1), 1, 0)
    with pytest.raises(DomainError):
        fc.evaluate(F, s)


def test_evaluated_family_rejects_nonfinite():
    with pytest.raises(InputError):
        EvaluatedFamily(np.array([[1.0, np.nan]]))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.integers(1, 10), st.integers(0, 2**32 - 1))
def test_rad_monotone_in_q(m, n, seed):
    V = EvaluatedFamily(np.random.default_rng(seed).standard_normal((m, n)))
    r = [V.rad(q) for q in (1, 2, 4, np.inf)]
    assert all(a <= b * (1 + 1e-12) + 1e-15 for a, b in zip(r, r[1:]))


def test_linear_family_rff():
    L = fc.LinearFamily(8, 1.0, "random-fourier", {"bandwidth": 1.0, "seed": 3})
    X = np.linspace(-1, 1, 5)[:, None]
    Phi = L.features(X)
    assert Phi.shape == (5, 8)
    assert np.all(np.abs(Phi) <= np.sqrt(2 / 8) + 1e-15)
    with pytest.raises(ConfigError):
        fc.LinearFamily(0, 1.0)


# bias

def test_bias_examples(gen):
    env = random_env(gen, 3, 3)
    assert np.allclose(fc.bias_beta(env, env.f_star), 0)
    ind = product_env([0.2, 0.3, 0.5], [0.6, 0.4], f_star=np.zeros(3))
    f = np.array([1.0, -2.0, 0.5])
    assert np.allclose(fc.bias_beta(ind, f), 0.2 - 0.6 + 0.25)
    P = env.joint()
    f = gen.standard_normal(3)
    want = [(P[:, y] * (f - env.f_star)).sum() / P[:, y].sum() for y in range(3)]
    assert np.allclose(fc.bias_beta(env, f), want, atol=1e-14)


def test_bias_zero_mass():
    env = dm.DiscreteEnv.from_atoms([[0, 0, 1.0]], num_x=1, num_y=2)
    assert np.array_equal(fc.bias_beta(env, np.ones(1)), [1.0, 0.0])
    with pytest.raises(DomainError):
        fc.bias_beta(env, np.ones(1), y_ids=[1])


# centering

def test_center_trivial(gen):
    env = random_env(gen, 2, 3)
    F = FiniteFamily([env.f_star], 1.0, Domain.X)
    G = FiniteFamily([env.g_star], 1.0, Domain.Y)
    for fam in fc.center_families(env, F, G):
        assert np.all(fam.values == 0)
    ind = product_env([0.5, 0.5], [0.3, 0.7], np.array([0.1, -0.2]), np.zeros(2))
    Fc = FiniteFamily([ind.f_star + 0.4], 1.0, Domain.X)
    F_cnt, _, _ = fc.center_families(ind, Fc, FiniteFamily([np.zeros(2)], 1.0, Domain.Y))
    assert np.allclose(F_cnt.values, 0)


def test_center_shapes_and_bound(gen):
    env = random_env(gen, 2, 2)
    F = FiniteFamily(gen.uniform(-1, 1, (3, 2)), 1.0, Domain.X)
    G = FiniteFamily(gen.uniform(-1, 1, (2, 2)), 1.0, Domain.Y)
    F_cnt, G_cnt, H_cnt = fc.center_families(env, F, G)
    assert F_cnt.m == 3 and G_cnt.m == 6 and H_cnt.m == 6
    for fam in (F_cnt, G_cnt, H_cnt):
        assert np.abs(fam.values).max() <= 4.0


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_centering_identity_and_orthogonality(nx, ny, seed):
    g = np.random.default_rng(seed)
    env = random_env(g, nx, ny, density=0.8)
    F = FiniteFamily(g.uniform(-1, 1, (3, nx)), 1.0, Domain.X)
    G = FiniteFamily(g.uniform(-1, 1, (2, ny)), 1.0, Domain.Y)
    cf = fc.center_families(env, F, G)
    cell = env.cell
    for i in range(3):
        for j in range(2):
            k = i * 2 + j
            lhs = cf.F_cnt.values[i, cell] + cf.G_cnt.values[k, env.y_ids]
            assert np.allclose(lhs, cf.H_cnt.values[k, cell], atol=1e-12)
        w = g.standard_normal(ny)
        assert abs(dm.expect(env, cf.F_cnt.values[i, cell] * w[env.y_ids])) < 1e-10


# localization and products

def test_localize_empirical(gen):
    M = np.vstack([np.zeros(4), gen.standard_normal((9, 4))])
    V = EvaluatedFamily(M)
    assert fc.localize_empirical(V, np.inf).m == 10
    loc0 = fc.localize_empirical(V, 0.0)
    assert loc0.m == 1 and np.all(loc0.matrix == 0)
    r = np.median(V.norms(2))
    assert fc.localize_empirical(V, r).m == np.count_nonzero(np.sort(V.norms(2)) <= r)
    with pytest.raises(InputError):
        fc.localize_empirical(V, -1)


def test_localize_population(gen):
    env = random_env(gen, 3, 2)
    vals = np.vstack([np.zeros(3), gen.uniform(-1, 1, (7, 3))])
    F = FiniteFamily(vals, 1.0, Domain.X)
    full, mask = fc.localize_population(env, F, np.inf)
    assert full.m == 8 and mask.all()
    zero, _ = fc.localize_population(env, F, 0.0)
    assert zero.m == 1
    norms2 = np.array([dm.expect(env, v[env.x_ids] ** 2) for v in vals])
    r = np.sqrt(np.median(norms2))
    _, mask = fc.localize_population(env, F, r)
    assert np.array_equal(mask, norms2 <= r * r)


def test_hadamard(gen):
    V = EvaluatedFamily(gen.standard_normal((2, 3)))
    assert np.array_equal(fc.hadamard(V, EvaluatedFamily(np.ones((1, 3)))).matrix, V.matrix)
    assert np.all(fc.hadamard(EvaluatedFamily(np.zeros((1, 3))), V).matrix == 0)
    U = EvaluatedFamily(gen.standard_normal((2, 3)))
    H = fc.hadamard(V, U).matrix
    for i in range(2):
        for j in range(2):
            assert np.array_equal(H[i * 2 + j], V.matrix[i] * U.matrix[j])
    with pytest.raises(ShapeError):
        fc.hadamard(V, EvaluatedFamily(np.ones((1, 4))))


# conditional completeness

def test_completeness_independent_affine():
    env = product_env([0.5, 0.5], [0.5, 0.5], np.zeros(2), np.zeros(2))
    F = FiniteFamily([[0, 0], [0.2, 0.2]], 1.0, Domain.X)
    G = FiniteFamily([[0, 0], [0.2, 0.2], [-0.2, -0.2], [-0.4, -0.4]], 1.0, Domain.Y)
    rep = fc.check_conditional_completeness(env, F, G, gamma=0.1)
    assert rep.holds and rep.checked == 2


def test_completeness_counterexample():
    env = dm.DiscreteEnv.from_atoms([[0, 0, .5], [1, 1, .5]], f_star=[0, 0], g_star=[0, 0])
    F = FiniteFamily([[0, 0], [0.5, -0.5]], 1.0, Domain.X)
    G = FiniteFamily([[0, 0]], 1.0, Domain.Y)
    rep = fc.check_conditional_completeness(env, F, G, gamma=1.0)
    assert not rep.holds and (1, 0) in [tuple(w[:2]) for w in rep.witnesses]
    tiny = fc.check_conditional_completeness(env, F, G, gamma=1e-6)
    assert tiny.holds
    with pytest.raises(InputError):
        fc.check_conditional_completeness(env, F, G, gamma=0)
