"""Cosine similarity and angle between a vector and its quantized image."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels
from .quantizers import QuantizedVector, WeightVector


@dataclass(frozen=True)
class GeometryReport:
    dot: float
    l1_w: float
    l2_w: float
    l2_q: float
    cosine: float
    angle_deg: float

    def as_dict(self) -> dict:
        return asdict(self)


def _real(v) -> np.ndarray:
    if isinstance(v, QuantizedVector):
        v = v.dequantize()
    elif isinstance(v, WeightVector):
        v = v.values
    return np.ascontiguousarray(v, dtype=np.float64).ravel()


def cosine_from_sums(dot: float, ww: float, qq: float) -> float:
    """Cosine from a dot product and two squared norms, clamped to [-1, 1]."""
    if ww <= 0 or qq <= 0:
        raise ValueError("zero-norm operand")
    return max(-1.0, min(1.0, dot / (math.sqrt(ww) * math.sqrt(qq))))


def angle_deg(cosine: float) -> float:
    return math.degrees(math.acos(max(-1.0, min(1.0, cosine))))


def _report(w: np.ndarray, q: np.ndarray) -> GeometryReport:
    if w.shape != q.shape:
        raise ValueError(f"length mismatch: {w.shape[0]} vs {q.shape[0]}")
    dot, ww, qq = _kernels.fused_dot(w, q)
    cos = cosine_from_sums(dot, ww, qq)
    return GeometryReport(dot, float(np.sum(np.abs(w))), math.sqrt(ww), math.sqrt(qq),
                          cos, angle_deg(cos))


def cosine_between(w, q) -> GeometryReport:
    """Geometry of ``w`` against ``q``; a QuantizedVector is compared through its real levels."""
    return _report(_real(w), _real(q))


def angle_wrt_noise(w, eps) -> GeometryReport:
    """Angle between a vector and an additive noise vector."""
    return _report(_real(w), _real(eps))


def cosine(a, b) -> float:
    """Plain cosine similarity of two arrays of any (equal) shape."""
    return cosine_between(a, b).cosine
