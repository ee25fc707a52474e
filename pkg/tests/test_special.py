import math

import mpmath
import numpy as np
import pytest

from tmsc.special import digamma, lgamma, trigamma

GRID = [1e-3, 0.05, 0.5, 1.0, 1.5, 2.0, 3.0, 5.999, 6.0, 7.25, 13.0, 101.0, 1e4]


@pytest.mark.parametrize("x", GRID)
def test_digamma_matches_mpmath(x):
    assert digamma(x) == pytest.approx(float(mpmath.digamma(x)), abs=1e-8, rel=1e-10)


@pytest.mark.parametrize("x", GRID)
def test_lgamma_matches_mpmath(x):
    assert lgamma(x) == pytest.approx(float(mpmath.loggamma(x)), abs=1e-8, rel=1e-10)


@pytest.mark.parametrize("x", GRID)
def test_trigamma_matches_mpmath(x):
    assert trigamma(x) == pytest.approx(float(mpmath.polygamma(1, x)), rel=1e-9)


def test_digamma_reference_points():
    euler_gamma = 0.5772156649015329
    assert digamma(1.0) == pytest.approx(-euler_gamma, abs=1e-8)
    assert digamma(2.0) == pytest.approx(1 - euler_gamma, abs=1e-8)
    assert digamma(0.5) == pytest.approx(-euler_gamma - 2 * math.log(2), abs=1e-8)


def test_digamma_series_definition():
    # psi(1) = -gamma = sum_{n>=1} (1/n - log(1 + 1/n)), summed with mpmath
    series = mpmath.nsum(lambda n: 1 / n - mpmath.log(1 + 1 / n), [1, mpmath.inf])
    assert digamma(1.0) == pytest.approx(-float(series), abs=1e-8)


def test_lgamma_reference_points():
    assert lgamma(1.0) == pytest.approx(0.0, abs=1e-10)
    assert lgamma(2.0) == pytest.approx(0.0, abs=1e-10)
    assert lgamma(3.0) == pytest.approx(math.log(2), abs=1e-8)


def test_vectorised_agrees_with_scalar():
    xs = np.array(GRID)
    np.testing.assert_allclose(digamma(xs), [digamma(x) for x in GRID], rtol=0, atol=0)
    np.testing.assert_allclose(lgamma(xs), [lgamma(x) for x in GRID], rtol=0, atol=0)


@pytest.mark.parametrize("fn", [digamma, lgamma, trigamma])
@pytest.mark.parametrize("bad", [0.0, -1.0, -0.5])
def test_domain_error(fn, bad):
    with pytest.raises(ValueError, match="domain"):
        fn(bad)
