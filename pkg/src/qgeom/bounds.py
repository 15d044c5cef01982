"""Closed-form cosine and norm bounds for quantized Gaussian vectors.

All cosine-type bounds are lower bounds on the expected cosine between a
Gaussian vector and its quantized image. Thresholds are in units of sigma.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .stats import std_normal_pdf, std_normal_sf

FORMULA_IDS = (
    "binary", "ternary", "nbit", "nbit_draft", "eps_norm", "l2_norm",
    "max_gaussian", "mse_decompose", "delta_opt_draft",
)


@dataclass(frozen=True)
class BoundValue:
    formula_id: str
    value: float
    params: dict = field(default_factory=dict)


def binary_bound() -> float:
    """Expected cosine lower bound for sign quantization, sqrt(2/pi)."""
    return math.sqrt(2.0 / math.pi)


def ternary_bound(t: float) -> float:
    """``2 phi(t) / sqrt(2 - 2 Phi(t))`` for a dead-zone half-width of ``t`` sigmas."""
    if t < 0:
        raise ValueError("threshold t must be >= 0")
    # 2 - 2 Phi(t) computed as 2 * sf(t) to keep precision in the tail
    tail = 2.0 * std_normal_sf(t)
    if tail == 0.0:
        raise OverflowError(f"2 - 2*Phi({t}) underflows")
    return 2.0 * std_normal_pdf(t) / math.sqrt(tail)


def ternary_optimal_threshold(t_lo: float, t_hi: float, step: float) -> tuple[float, float]:
    """Grid maximizer of :func:`ternary_bound` on ``[t_lo, t_hi]``; returns ``(t*, angle in degrees)``.

    Ties go to the smaller threshold. ``t_lo == t_hi`` evaluates a single point.
    """
    if t_lo < 0 or t_hi < t_lo:
        raise ValueError("need 0 <= t_lo <= t_hi")
    if t_hi > t_lo and step <= 0:
        raise ValueError("step must be positive")
    count = 1 if t_hi == t_lo else int(math.floor((t_hi - t_lo) / step + 1e-9)) + 1
    grid = [t_lo + i * step for i in range(count)]
    if not grid:
        raise ValueError("empty threshold grid")
    values = [ternary_bound(t) for t in grid]
    best = int(np.argmax(values))
    return grid[best], math.degrees(math.acos(values[best]))


def _check_bits_count(bits: int, n: int) -> None:
    if bits < 1:
        raise ValueError("bits must be >= 1")
    if n < 2:
        raise ValueError("N must be >= 2 (ln N must be positive)")


def nbit_bound_final(bits: int, n: int) -> float:
    """``2^M / (2^M + sqrt(ln N) / sqrt 6)`` for midrise quantization with ``delta = max|W| / 2^M``."""
    _check_bits_count(bits, n)
    levels = 2.0 ** bits
    return levels / (levels + math.sqrt(math.log(n)) / math.sqrt(6.0))


def nbit_bound_draft(bits: int, n: int) -> float:
    """Earlier, looser form ``2^(M-1) / (2^(M-1) + sqrt(2 ln N))``."""
    _check_bits_count(bits, n)
    levels = 2.0 ** (bits - 1)
    return levels / (levels + math.sqrt(2.0 * math.log(n)))


def eps_norm_bound(n: int, delta_expectation: float) -> float:
    """Jensen bound ``E||eps|| <= sqrt(N/12) E[delta]`` for uniform noise on ``[-delta/2, delta/2]``."""
    if n < 1 or delta_expectation <= 0:
        raise ValueError("need N >= 1 and a positive step expectation")
    return math.sqrt(n / 12.0) * delta_expectation


def l2_norm_expectation(n: int, sigma: float) -> float:
    """Upper bound ``sqrt(N) sigma`` on ``E||W||`` for ``W ~ N(0, sigma^2 I_N)``; tight as N grows."""
    if n < 1 or sigma <= 0:
        raise ValueError("need N >= 1 and sigma > 0")
    return math.sqrt(n) * sigma


def chi_mean(n: int, sigma: float = 1.0) -> float:
    """Exact ``E||W||``: ``sigma * sqrt 2 * Gamma((N+1)/2) / Gamma(N/2)``."""
    return sigma * math.sqrt(2.0) * math.exp(math.lgamma((n + 1) / 2.0) - math.lgamma(n / 2.0))


def max_gaussian_bound(n: int, sigma: float = 1.0) -> tuple[float, float]:
    """``(0.23 sigma sqrt(ln N), sqrt 2 sigma sqrt(ln N))`` bracketing E[max of N Gaussians]."""
    if n < 2 or sigma <= 0:
        raise ValueError("need N >= 2 and sigma > 0")
    root = math.sqrt(math.log(n))
    return 0.23 * sigma * root, math.sqrt(2.0) * sigma * root


def mse_decompose(w, q) -> tuple[float, float, float]:
    """Split the mean squared error of ``w - q`` into squared bias and (population) variance."""
    w = np.asarray(w, dtype=np.float64).ravel()
    q = np.asarray(q, dtype=np.float64).ravel()
    if w.shape != q.shape:
        raise ValueError("length mismatch")
    if w.size < 2:
        raise ValueError("need at least two elements")
    err = w - q
    mse = float(np.mean(err * err))
    bias = float(np.mean(err))
    variance = float(np.mean((err - bias) ** 2))
    return mse, bias * bias, variance


def delta_opt_draft(bits: int, max_w: float, n: int) -> float:
    """Evaluates ``2^k max(W) / (N + 2^(2k))``. No optimality is claimed."""
    if bits < 1 or max_w <= 0 or n < 1:
        raise ValueError("need bits >= 1, max_w > 0, N >= 1")
    return 2.0 ** bits * max_w / (n + 2.0 ** (2 * bits))


def delta_grid_search(w, deltas) -> list[dict]:
    """Empirical midrise MSE for each candidate step, for comparison with :func:`delta_opt_draft`.

    Values beyond the representable range are not clipped: the step alone
    sets the error.
    """
    w = np.asarray(w, dtype=np.float64).ravel()
    rows = []
    for d in deltas:
        q = d * (np.floor(w / d) + 0.5)
        mse, bias_sq, var = mse_decompose(w, q)
        rows.append({"delta": float(d), "mse": mse, "bias_sq": bias_sq, "variance": var})
    return rows


def evaluate(formula_id: str, **params) -> BoundValue:
    """Evaluate a named bound; used by the command line."""
    if formula_id == "binary":
        v = binary_bound()
    elif formula_id == "ternary":
        v = ternary_bound(float(params.get("t", 0.0)))
    elif formula_id == "nbit":
        v = nbit_bound_final(int(params["M"]), int(params["N"]))
    elif formula_id == "nbit_draft":
        v = nbit_bound_draft(int(params["M"]), int(params["N"]))
    elif formula_id == "eps_norm":
        v = eps_norm_bound(int(params["N"]), float(params["delta"]))
    elif formula_id == "l2_norm":
        v = l2_norm_expectation(int(params["N"]), float(params.get("sigma", 1.0)))
    elif formula_id == "max_gaussian":
        lo, hi = max_gaussian_bound(int(params["N"]), float(params.get("sigma", 1.0)))
        return BoundValue(formula_id, hi, {**params, "lower": lo, "upper": hi})
    elif formula_id == "delta_opt_draft":
        v = delta_opt_draft(int(params["M"]), float(params["max_w"]), int(params["N"]))
    else:
        raise KeyError(formula_id)
    return BoundValue(formula_id, v, dict(params))
