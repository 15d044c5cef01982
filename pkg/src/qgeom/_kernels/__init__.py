"""Hot-kernel dispatch.

The compiled extension is preferred; set ``QGEOM_PURE_PYTHON=1`` to force the
numpy fallback. ``BACKEND`` names the active implementation.
"""
import os

import numpy as np

from . import _pure as pure

try:
    from . import _core as compiled
except ImportError:  # extension not built
    compiled = None

if compiled is not None and os.environ.get("QGEOM_PURE_PYTHON", "") != "1":
    _impl = compiled
    BACKEND = "cython"
else:
    _impl = pure
    BACKEND = "python"


def _vec(a):
    return np.ascontiguousarray(a, dtype=np.float64).ravel()


def fused_binary(w):
    return _impl.fused_binary(_vec(w))


def fused_ternary(w, t):
    return _impl.fused_ternary(_vec(w), float(t))


def fused_midrise(w, delta):
    return _impl.fused_midrise(_vec(w), float(delta))


def fused_dot(w, q):
    return _impl.fused_dot(_vec(w), _vec(q))


def stochastic_round(x, step, u):
    x = np.asarray(x, dtype=np.float64)
    out = _impl.stochastic_round(_vec(x), float(step), _vec(u))
    return np.asarray(out).reshape(x.shape)


def stochastic_ternarize(g, s, u):
    g = np.asarray(g, dtype=np.float64)
    return np.asarray(_impl.stochastic_ternarize(_vec(g), float(s), _vec(u))).reshape(g.shape)


def column_extrema(x):
    return _impl.column_extrema(np.ascontiguousarray(x, dtype=np.float64))


__all__ = [
    "BACKEND", "compiled", "pure", "fused_binary", "fused_ternary", "fused_midrise",
    "fused_dot", "stochastic_round", "stochastic_ternarize", "column_extrema",
]
