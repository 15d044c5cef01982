"""Numpy implementations of the hot kernels.

Each function mirrors one in ``_core.pyx`` and is used when the compiled
extension is unavailable (or ``QGEOM_PURE_PYTHON=1``).
"""
import numpy as np


def fused_binary(w):
    a = np.abs(w)
    return float(np.sum(a)), float(np.sum(w * w)), float(w.shape[0])


def fused_ternary(w, t):
    a = np.abs(w)
    keep = a > t
    return float(np.sum(a[keep])), float(np.sum(w * w)), float(np.count_nonzero(keep))


def fused_midrise(w, delta):
    q = delta * (np.floor(w / delta) + 0.5)
    return float(np.sum(w * q)), float(np.sum(w * w)), float(np.sum(q * q))


def fused_dot(w, q):
    return float(np.sum(w * q)), float(np.sum(w * w)), float(np.sum(q * q))


def stochastic_round(x, step, u):
    scaled = x / step
    lo = np.floor(scaled)
    frac = scaled - lo
    return (lo + (u < frac)) * step


def stochastic_ternarize(g, s, u):
    codes = np.zeros(g.shape[0], dtype=np.int8)
    fire = u < np.abs(g) / s
    codes[fire & (g > 0)] = 1
    codes[fire & (g < 0)] = -1
    return codes


def column_extrema(x):
    # argmin/argmax return the first occurrence, i.e. the lowest row on ties
    return np.argmin(x, axis=0).astype(np.int64), np.argmax(x, axis=0).astype(np.int64)
