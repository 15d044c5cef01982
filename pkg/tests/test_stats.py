import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qgeom import stats

# mpmath at 30 digits, frozen
ERF_ORACLE = {
    1.0: 0.84270079294971487,
    0.5: 0.52049987781304654,
    2.0: 0.99532226501895273,
    2.4999: 0.99959283009966655,
    2.5: 0.99959304798255504,
    3.0: 0.99997790950300141,
    4.5: 0.99999999980338396,
    -1.7: -0.98379045859077456,
}


@pytest.mark.parametrize("x,expected", sorted(ERF_ORACLE.items()))
def test_erf_matches_high_precision_oracle(x, expected):
    assert abs(stats.erf(x) - expected) <= 1e-12


def test_erf_against_mpmath_dense_grid():
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 30
    worst = max(abs(stats.erf(x) - float(mpmath.erf(x))) for x in np.linspace(-7, 7, 2801))
    assert worst <= 1e-12


def test_erf_basic_values():
    assert stats.erf(0.0) == 0.0
    assert stats.erf(1.0) == pytest.approx(0.8427007929, abs=1e-10)
    assert stats.erf(-1.0) == -stats.erf(1.0)


@given(st.floats(-30, 30, allow_nan=False))
def test_erf_odd_and_bounded(x):
    assert stats.erf(-x) == -stats.erf(x)
    assert abs(stats.erf(x)) <= 1.0


@pytest.mark.parametrize("fn", [stats.erf, stats.erfc, stats.std_normal_pdf, stats.std_normal_cdf])
@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_non_finite_is_domain_error(fn, bad):
    with pytest.raises(ValueError):
        fn(bad)


def test_pdf_values():
    assert stats.std_normal_pdf(0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
    assert stats.std_normal_pdf(0.6) == pytest.approx(0.33322460289179964, rel=1e-13)
    assert stats.std_normal_pdf(10) == pytest.approx(7.6945986267064193e-23, rel=1e-12)


@given(st.floats(-30, 30, allow_nan=False))
def test_pdf_symmetric_positive(x):
    assert stats.std_normal_pdf(x) > 0
    assert abs(stats.std_normal_pdf(-x) - stats.std_normal_pdf(x)) <= 1e-14


def test_cdf_values():
    assert stats.std_normal_cdf(0) == 0.5
    assert stats.std_normal_cdf(0.6) == pytest.approx(0.72574688224992641, abs=1e-13)
    assert stats.std_normal_cdf(-0.6) == pytest.approx(0.27425311775007359, abs=1e-13)
    assert stats.std_normal_cdf(-5) == pytest.approx(2.8665157187919391e-7, rel=1e-11)
    assert stats.std_normal_cdf(-8) == pytest.approx(6.2209605742717841e-16, rel=1e-11)


@given(st.floats(-12, 12, allow_nan=False))
def test_cdf_symmetry(x):
    assert abs(stats.std_normal_cdf(-x) - (1 - stats.std_normal_cdf(x))) <= 1e-14


def test_cdf_monotone_on_grid():
    vals = [stats.std_normal_cdf(x) for x in np.linspace(-9, 9, 5001)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_cdf_derivative_is_pdf():
    h = 1e-4
    # scrambled Halton points on [-6, 6]
    from scipy.stats import qmc

    pts = qmc.Halton(d=1, seed=3).random(20000).ravel() * 12 - 6
    worst = max(abs((stats.std_normal_cdf(x + h) - stats.std_normal_cdf(x - h)) / (2 * h)
                    - stats.std_normal_pdf(x)) for x in pts)
    assert worst <= 1e-6


def test_folded_normal_mean():
    assert stats.folded_normal_mean(1) == pytest.approx(0.7978845608, abs=1e-10)
    assert stats.folded_normal_mean(2) == pytest.approx(1.5957691216, abs=1e-10)
    assert stats.folded_normal_mean(0.5) == pytest.approx(0.3989422804, abs=1e-10)
    for bad in (0, -1):
        with pytest.raises(ValueError):
            stats.folded_normal_mean(bad)


def test_folded_normal_mean_monte_carlo():
    z = np.random.default_rng(5).standard_normal(1_000_000)
    a = np.abs(z)
    se = a.std(ddof=1) / math.sqrt(a.size)
    assert abs(a.mean() - stats.folded_normal_mean(1)) <= 4 * se


def test_truncated_normal_mean():
    assert stats.truncated_normal_mean(0, 1) == pytest.approx(0.7978845608, abs=1e-10)
    # phi(0.6) / (1 - Phi(0.6)) from the mpmath oracle
    assert stats.truncated_normal_mean(0.6, 1) == pytest.approx(1.2150257602375433, rel=1e-12)
    assert stats.truncated_normal_mean(0, 3) == pytest.approx(2.3936536824, abs=1e-9)


def test_truncated_normal_mean_exceeds_cut_and_is_monotone():
    grid = np.arange(0, 4.0001, 0.01)
    vals = [stats.truncated_normal_mean(t) for t in grid]
    assert all(v >= t for v, t in zip(vals, grid))
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_truncated_normal_mean_overflow():
    with pytest.raises(OverflowError):
        stats.truncated_normal_mean(40.0)
    with pytest.raises(ValueError):
        stats.truncated_normal_mean(0.0, -1.0)
