import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tmsc import tensor as T
from tmsc.evidential import (
    EvidenceHeadParams,
    Opinion,
    TotalConflictError,
    alpha_from_opinion,
    average_combine,
    average_combine_tensor,
    conflict,
    ds_combine,
    ds_combine_tensor,
    evidence_head,
    init_head,
    opinion_from_evidence,
    opinions_from_alpha,
)

from gradcheck import max_relative_error


def random_opinion(rng, k):
    mass = rng.dirichlet(np.ones(k + 1))
    return Opinion(mass[:k], float(mass[k]))


def test_worked_opinion():
    dp, op = opinion_from_evidence([4, 1, 1])
    np.testing.assert_array_equal(dp.alpha, [5, 2, 2])
    assert dp.strength == 9
    np.testing.assert_allclose(op.b, [4 / 9, 1 / 9, 1 / 9], atol=1e-12)
    assert op.u == pytest.approx(1 / 3, abs=1e-12)
    np.testing.assert_allclose(alpha_from_opinion(op).alpha, [5, 2, 2], atol=1e-12)


def test_vacuous_and_limit():
    _, op = opinion_from_evidence(np.zeros(3))
    assert op.u == 1 and not op.b.any()
    np.testing.assert_array_equal(alpha_from_opinion(op).alpha, [1, 1, 1])
    _, sharp = opinion_from_evidence([1e12, 0, 0])
    assert sharp.b[0] > 1 - 1e-9 and sharp.u < 1e-9


def test_rejections():
    with pytest.raises(ValueError):
        opinion_from_evidence([-0.1, 1])
    with pytest.raises(ValueError):
        alpha_from_opinion(Opinion(np.array([1.0, 0.0]), 0.0))
    with pytest.raises(ValueError):
        ds_combine(Opinion(np.array([0.5, 0.5]), 0.0), Opinion(np.array([0.2, 0.2, 0.2]), 0.4))
    with pytest.raises(TotalConflictError, match="conflict"):
        ds_combine(Opinion(np.array([1.0, 0.0]), 0.0), Opinion(np.array([0.0, 1.0]), 0.0))


def test_worked_fusion():
    m1 = Opinion(np.array([0.6, 0.2]), 0.2)
    m2 = Opinion(np.array([0.3, 0.3]), 0.4)
    assert conflict(m1, m2) == pytest.approx(0.24, abs=1e-12)
    f = ds_combine(m1, m2)
    np.testing.assert_allclose(f.b, [0.48 / 0.76, 0.2 / 0.76], atol=1e-12)
    assert f.u == pytest.approx(0.08 / 0.76, abs=1e-12)
    np.testing.assert_allclose(f.b, [0.6316, 0.2632], atol=1e-4)
    assert f.mass() == pytest.approx(1, abs=1e-12)


@settings(max_examples=200)
@given(st.integers(0, 2**31), st.integers(2, 6))
def test_fusion_algebra(seed, k):
    rng = np.random.default_rng(seed)
    m1, m2 = random_opinion(rng, k), random_opinion(rng, k)
    f, g = ds_combine(m1, m2), ds_combine(m2, m1)
    assert abs(f.mass() - 1) < 1e-6
    np.testing.assert_allclose(f.b, g.b, atol=1e-9)
    assert abs(f.u - g.u) < 1e-9
    vac = Opinion(np.zeros(k), 1.0)
    ident = ds_combine(m1, vac)
    np.testing.assert_allclose(ident.b, m1.b, atol=1e-9)
    assert abs(ident.u - m1.u) < 1e-9
    same = ds_combine(m1, m1)
    assert same.u <= m1.u + 1e-12


def test_confident_view_dominates():
    # DS fusion also sharpens shared beliefs, so single pairs can overshoot;
    # the claim is statistical over random pairs with the same belief ordering.
    rng = np.random.default_rng(0)
    closer, gaps = 0, []
    for _ in range(2000):
        u1, u2 = sorted(rng.uniform(0.05, 0.95, size=2))
        m1 = Opinion(np.sort(rng.dirichlet(np.ones(3)))[::-1] * (1 - u1), u1)
        m2 = Opinion(np.sort(rng.dirichlet(np.ones(3)))[::-1] * (1 - u2), u2)
        f = ds_combine(m1, m2)
        gap = np.abs(f.b - m2.b).sum() - np.abs(f.b - m1.b).sum()
        closer += gap >= 0
        gaps.append(gap)
    assert closer / 2000 > 0.9
    assert np.mean(gaps) > 0


def test_average_combine():
    m1 = Opinion(np.array([0.6, 0.2]), 0.2)
    m2 = Opinion(np.array([0.3, 0.3]), 0.4)
    f = average_combine(m1, m2)
    np.testing.assert_allclose(f.b, [0.45, 0.25])
    assert f.u == pytest.approx(0.3)


def test_evidence_head():
    z = T.Tensor(np.random.default_rng(0).normal(size=5))
    zero = EvidenceHeadParams(T.parameter(np.zeros((3, 5))), T.parameter(np.zeros(3)))
    np.testing.assert_allclose(evidence_head(z, zero).data, np.log(2), rtol=1e-6)
    big = EvidenceHeadParams(T.parameter(np.zeros((2, 5))), T.parameter([40.0, -40.0]))
    e = evidence_head(z, big).data
    assert e[0] == pytest.approx(40, rel=1e-6) and e[1] > 0
    with pytest.raises(T.ShapeError):
        evidence_head(T.Tensor(np.zeros(4)), zero)
    batched = evidence_head(T.Tensor(np.zeros((7, 5))), init_head(3, 5, 0))
    assert batched.shape == (7, 3) and np.all(batched.data > 0)


@pytest.mark.parametrize("mode", ["tmsn", "avg"])
def test_tensor_fusion_matches_values(mode):
    rng = np.random.default_rng(1)
    e1, e2 = rng.exponential(2.0, size=(6, 3)), rng.exponential(2.0, size=(6, 3))
    fuse_t = ds_combine_tensor if mode == "tmsn" else average_combine_tensor
    fuse = ds_combine if mode == "tmsn" else average_combine
    with T.precision(np.float64):
        alpha = fuse_t(T.Tensor(e1), T.Tensor(e2)).data
    for row, got in zip(range(6), opinions_from_alpha(alpha)):
        want = fuse(opinion_from_evidence(e1[row])[1], opinion_from_evidence(e2[row])[1])
        np.testing.assert_allclose(got.b, want.b, atol=1e-12)
        assert got.u == pytest.approx(want.u, abs=1e-12)


def test_tensor_fusion_gradients():
    rng = np.random.default_rng(2)
    with T.precision(np.float64):
        e1 = T.parameter(rng.exponential(1.5, size=(3, 2)))
        e2 = T.parameter(rng.exponential(1.5, size=(3, 2)))
        probe = T.Tensor(rng.normal(size=(3, 2)))
        err, _, _ = max_relative_error(lambda: T.sum(ds_combine_tensor(e1, e2) * probe), [e1, e2])
    assert err < 1e-3
