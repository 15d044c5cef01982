"""Scalar Gaussian special functions.

``erf``/``erfc`` are evaluated locally: a positive-term series near the
origin and a Lentz continued fraction for the tails, both accurate to about
1e-15 absolute in double precision.
"""
from __future__ import annotations

import math

SQRT2 = math.sqrt(2.0)
SQRT_2PI = math.sqrt(2.0 * math.pi)
_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)
_SERIES_LIMIT = 2.5
_CF_TINY = 1e-300


def _check_finite(x: float) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"expected a finite value, got {x!r}")
    return x


def _erf_series(x: float) -> float:
    # erf(x) = 2/sqrt(pi) * exp(-x^2) * sum_k 2^k x^(2k+1) / (1*3*...*(2k+1))
    x2 = x * x
    term = x
    total = x
    k = 0
    while True:
        k += 1
        term *= 2.0 * x2 / (2 * k + 1)
        total += term
        if abs(term) <= 1e-17 * abs(total):
            break
    return _TWO_OVER_SQRT_PI * math.exp(-x2) * total


def _erfc_cf(x: float) -> float:
    """erfc for x >= _SERIES_LIMIT via modified Lentz on
    erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))."""
    f = x
    c = x
    d = 0.0
    k = 1
    while k < 5000:
        a = 0.5 * k
        d = x + a * d
        if d == 0.0:
            d = _CF_TINY
        c = x + a / c
        if c == 0.0:
            c = _CF_TINY
        d = 1.0 / d
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < 1e-16:
            break
        k += 1
    return math.exp(-x * x) / (math.sqrt(math.pi) * f)


def erf(x: float) -> float:
    """Error function, odd, with absolute error below 1e-12."""
    x = _check_finite(x)
    ax = abs(x)
    if ax < _SERIES_LIMIT:
        val = _erf_series(ax)
    else:
        val = 1.0 - _erfc_cf(ax)
    return val if x >= 0 else -val


def erfc(x: float) -> float:
    """Complementary error function with relative accuracy kept in the upper tail."""
    x = _check_finite(x)
    if x >= _SERIES_LIMIT:
        return _erfc_cf(x)
    if x > -_SERIES_LIMIT:
        return 1.0 - erf(x)
    return 2.0 - _erfc_cf(-x)


def std_normal_pdf(x: float) -> float:
    x = _check_finite(x)
    return math.exp(-0.5 * x * x) / SQRT_2PI


def std_normal_cdf(x: float) -> float:
    """Phi(x) = (1 + erf(x/sqrt 2)) / 2, evaluated through erfc so both tails stay accurate."""
    x = _check_finite(x)
    if x == 0.0:
        return 0.5
    return 0.5 * erfc(-x / SQRT2)


def std_normal_sf(x: float) -> float:
    """Upper tail 1 - Phi(x)."""
    x = _check_finite(x)
    if x == 0.0:
        return 0.5
    return 0.5 * erfc(x / SQRT2)


def folded_normal_mean(sigma: float) -> float:
    """Mean of |X| for X ~ N(0, sigma^2)."""
    sigma = _check_finite(sigma)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return sigma * math.sqrt(2.0 / math.pi)


def truncated_normal_mean(t: float, sigma: float = 1.0) -> float:
    """E[X | X > t*sigma] for X ~ N(0, sigma^2); ``t`` is in units of sigma.

    Raises OverflowError once the tail mass underflows to zero; past that
    point use the asymptote ``sigma * t``.
    """
    t = _check_finite(t)
    sigma = _check_finite(sigma)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    tail = std_normal_sf(t)
    if tail == 0.0:
        raise OverflowError(
            f"tail mass 1-Phi({t}) underflows; use the asymptotic value sigma*t"
        )
    return sigma * std_normal_pdf(t) / tail
