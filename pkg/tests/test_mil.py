import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tmsc import tensor as T
from tmsc.mil import init_mil, mil_attention_pool, mil_pool_batch

from gradcheck import max_relative_error

D = 8


def _bag(rng, n):
    return [(rng.normal(size=D), float(rng.uniform(0.1, 2.0))) for _ in range(n)]


def test_singleton_bag():
    params = init_mil(D, 0)
    h = np.random.default_rng(0).normal(size=D)
    z, a = mil_attention_pool([(h, 0.7)], params)
    assert a.data.tolist() == [1.0]
    np.testing.assert_allclose(z.data, 0.7 * h, rtol=1e-6)


def test_identical_instances():
    params = init_mil(D, 1)
    h = np.random.default_rng(1).normal(size=D)
    z, a = mil_attention_pool([(h, 0.4)] * 5, params)
    np.testing.assert_allclose(a.data, 0.2, rtol=1e-6)
    np.testing.assert_allclose(z.data, 0.4 * h, rtol=1e-5, atol=1e-6)


@settings(max_examples=40)
@given(st.integers(0, 2**31), st.integers(1, 8))
def test_permutation_invariance_and_simplex(seed, n):
    rng = np.random.default_rng(seed)
    params = init_mil(D, seed % 7)
    bag = _bag(rng, n)
    z, a = mil_attention_pool(bag, params)
    perm = rng.permutation(n)
    z2, _ = mil_attention_pool([bag[i] for i in perm], params)
    np.testing.assert_allclose(z.data, z2.data, atol=1e-6)
    assert np.all(a.data >= 0)
    assert abs(float(a.data.astype(np.float64).sum()) - 1) < 1e-6


def test_zero_attention_instance_contributes_nothing():
    rng = np.random.default_rng(2)
    params = init_mil(D, 2)
    bag = _bag(rng, 3)
    with T.precision(np.float64):
        z, a = mil_attention_pool(bag, params)
        z0, a0 = mil_attention_pool(bag[:2] + [(rng.normal(size=D) * 100, 0.0)], params)
    manual = sum(a0.data[i] * bag[i][1] * bag[i][0] for i in range(2))
    np.testing.assert_allclose(z0.data, manual, atol=1e-12)


def test_empty_and_ragged_rejected():
    params = init_mil(D, 0)
    with pytest.raises(ValueError):
        mil_attention_pool([], params)
    with pytest.raises(T.ShapeError):
        mil_attention_pool([(np.zeros(D), 1.0), (np.zeros(D + 1), 1.0)], params)
    with pytest.raises(T.ShapeError):
        mil_pool_batch(T.Tensor(np.zeros((1, 2, D))), np.ones((1, 3)), params)


def test_default_hidden_width():
    assert init_mil(32, 0).V.shape == (16, 32)
    assert init_mil(32, 0, hidden=5).w.shape == (5,)


def test_batch_matches_single():
    rng = np.random.default_rng(3)
    params = init_mil(D, 3)
    bags = [_bag(rng, 4) for _ in range(3)]
    h = T.Tensor(np.stack([[x for x, _ in b] for b in bags]))
    w = np.array([[a for _, a in b] for b in bags])
    zb, ab = mil_pool_batch(h, w, params)
    for i, bag in enumerate(bags):
        z, a = mil_attention_pool(bag, params)
        np.testing.assert_allclose(zb.data[i], z.data, atol=1e-6)
        np.testing.assert_allclose(ab.data[i], a.data, atol=1e-6)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(4)
    with T.precision(np.float64):
        params = init_mil(D, 4)
        for p in params.parameters():
            p.data = p.data.astype(np.float64)
        feats = [T.parameter(rng.normal(size=D)) for _ in range(5)]
        weights = [float(rng.uniform(0.2, 1.5)) for _ in range(5)]
        target = T.Tensor(rng.normal(size=D))

        def loss():
            z, _ = mil_attention_pool(list(zip(feats, weights)), params)
            return T.sum(z * target)

        err, _, _ = max_relative_error(loss, params.parameters() + feats)
    assert err < 1e-3
