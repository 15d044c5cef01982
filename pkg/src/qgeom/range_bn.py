"""Range batch normalization and a standard batch-norm reference.

Range BN replaces the batch standard deviation with ``C(n) * (max - min)``
of the centred column, ``C(n) = 1/sqrt(2 ln n)``. Both normalizers always
use batch statistics (training mode only).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class BnParams:
    gamma: np.ndarray
    beta: np.ndarray
    epsilon_stability: float = 1e-5

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=np.float64).ravel()
        b = np.asarray(self.beta, dtype=np.float64).ravel()
        if g.shape != b.shape:
            raise ValueError("gamma and beta must have the same length")
        if not 0 < self.epsilon_stability <= 1e-2:
            raise ValueError("epsilon_stability must lie in (0, 1e-2]")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "beta", b)

    @classmethod
    def identity(cls, d: int, epsilon_stability: float = 1e-5) -> BnParams:
        return cls(np.ones(d), np.zeros(d), epsilon_stability)


class DegenerateFeatureError(ValueError):
    """A batch column has zero spread, so it cannot be normalized."""

    def __init__(self, column: int):
        super().__init__(f"feature column {column} has zero range")
        self.column = column


def c_of_n(n: int) -> float:
    if n <= 1:
        raise ValueError("batch size must be >= 2 (ln n must be positive)")
    return 1.0 / math.sqrt(2.0 * math.log(n))


def _batch(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("batch must be an n x d matrix")
    if x.shape[0] < 2:
        raise ValueError("batch size must be >= 2")
    if not np.all(np.isfinite(x)):
        raise ValueError("batch contains non-finite values")
    return x


def _check_params(params: BnParams | None, d: int) -> None:
    if params is not None and params.gamma.shape[0] != d:
        raise ValueError(f"BN params have {params.gamma.shape[0]} features, batch has {d}")


def _affine(xhat, params, use_affine):
    if use_affine and params is not None:
        return xhat * params.gamma + params.beta
    return xhat


def _range_stats(x: np.ndarray):
    n = x.shape[0]
    centred = x - x.mean(axis=0)
    amin, amax = _kernels.column_extrema(centred)
    cols = np.arange(x.shape[1])
    spread = centred[amax, cols] - centred[amin, cols]
    bad = np.flatnonzero(spread <= 0)
    if bad.size:
        raise DegenerateFeatureError(int(bad[0]))
    return centred, c_of_n(n) * spread, amin, amax


def range_scale(x) -> np.ndarray:
    """Per-column ``C(n) * range(x - mean)``, the Range BN estimate of sigma."""
    return _range_stats(_batch(x))[1]


def range_bn_forward(x, params: BnParams | None = None, use_affine: bool = False) -> np.ndarray:
    x = _batch(x)
    _check_params(params, x.shape[1])
    centred, denom, _, _ = _range_stats(x)
    return _affine(centred / denom, params, use_affine)


def range_bn_backward(x, upstream, params: BnParams | None = None, use_affine: bool = False):
    """Gradients ``(dx, dgamma, dbeta)``.

    max/min are differentiated as one-hot selectors at their arg-max/arg-min
    rows (lowest row on ties).
    """
    x = _batch(x)
    g = np.asarray(upstream, dtype=np.float64)
    if g.ndim == 1:
        g = g[:, None]
    if g.shape != x.shape:
        raise ValueError("upstream gradient shape must match the batch")
    _check_params(params, x.shape[1])
    n, d = x.shape
    centred, denom, amin, amax = _range_stats(x)
    xhat = centred / denom
    if use_affine and params is not None:
        dgamma = np.sum(g * xhat, axis=0)
        dbeta = np.sum(g, axis=0)
        gx = g * params.gamma
    else:
        dgamma = np.zeros(d)
        dbeta = np.zeros(d)
        gx = g
    # d xhat_i / d x_j = (delta_ij - 1/n)/denom - xhat_i/spread * (1[j=amax] - 1[j=amin])
    dx = (gx - gx.mean(axis=0)) / denom
    spread_term = np.sum(gx * xhat, axis=0) * c_of_n(n) / denom
    cols = np.arange(d)
    dx[amax, cols] -= spread_term
    dx[amin, cols] += spread_term
    return dx, dgamma, dbeta


def standard_bn_forward(x, params: BnParams | None = None, use_affine: bool = False) -> np.ndarray:
    """Classic batch norm with population variance; ``params=None`` means no epsilon and no affine."""
    x = _batch(x)
    _check_params(params, x.shape[1])
    eps = params.epsilon_stability if params is not None else 0.0
    centred = x - x.mean(axis=0)
    std = np.sqrt(np.mean(centred * centred, axis=0) + eps)
    bad = np.flatnonzero(std <= 0)
    if bad.size:
        raise DegenerateFeatureError(int(bad[0]))
    return _affine(centred / std, params, use_affine)


def standard_bn_backward(x, upstream, params: BnParams | None = None, use_affine: bool = False):
    x = _batch(x)
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != x.shape:
        raise ValueError("upstream gradient shape must match the batch")
    _check_params(params, x.shape[1])
    eps = params.epsilon_stability if params is not None else 0.0
    n, d = x.shape
    centred = x - x.mean(axis=0)
    std = np.sqrt(np.mean(centred * centred, axis=0) + eps)
    xhat = centred / std
    if use_affine and params is not None:
        dgamma, dbeta, gx = np.sum(g * xhat, axis=0), np.sum(g, axis=0), g * params.gamma
    else:
        dgamma, dbeta, gx = np.zeros(d), np.zeros(d), g
    dx = (gx - gx.mean(axis=0) - xhat * np.mean(gx * xhat, axis=0)) / std
    return dx, dgamma, dbeta


def range_bn_forward_quantized(x, bits: int = 8, params: BnParams | None = None,
                               use_affine: bool = False) -> np.ndarray:
    """Range BN applied to gemmlowp-quantized inputs (qualitative comparisons only)."""
    from .quantizers import fake_quantize, QuantizerSpec

    return range_bn_forward(fake_quantize(_batch(x), QuantizerSpec.gemmlowp(bits)), params, use_affine)
