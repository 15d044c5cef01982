"""Quantizers for weight, activation and gradient vectors.

Deterministic schemes (binary, ternary, midrise, gemmlowp) and their
stochastic counterparts. Every quantizer returns a :class:`QuantizedVector`
holding integer codes plus whatever is needed to map them back to reals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

SCHEMES = ("binary", "ternary", "midrise", "gemmlowp")
ROUNDINGS = ("nearest", "stochastic")


@dataclass(frozen=True)
class WeightVector:
    values: np.ndarray
    sigma_nominal: float = 1.0

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(v)):
            raise ValueError("weight vector contains non-finite values")
        object.__setattr__(self, "values", v)
        if self.sigma_nominal <= 0:
            raise ValueError("sigma_nominal must be positive")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


@dataclass(frozen=True)
class ClampPolicy:
    """How gemmlowp picks ``v_min``/``v_max``.

    ``abs_max_min`` uses the tensor extrema; ``chunked_average`` splits the
    flattened tensor into ``k`` chunks and averages the chunk maxima and
    minima, which is less sensitive to single outliers.
    """
    mode: str = "abs_max_min"
    k: int = 1

    def __post_init__(self):
        if self.mode not in ("abs_max_min", "chunked_average"):
            raise ValueError(f"unknown clamp mode {self.mode!r}")
        if self.k < 1:
            raise ValueError("chunk count k must be >= 1")

    def limits(self, x: np.ndarray) -> tuple[float, float]:
        x = np.asarray(x, dtype=np.float64).ravel()
        if self.mode == "abs_max_min":
            return float(x.min()), float(x.max())
        if self.k > x.shape[0]:
            raise ValueError(f"chunk count k={self.k} exceeds tensor size {x.shape[0]}")
        chunks = np.array_split(x, self.k)
        return (float(np.mean([c.min() for c in chunks])),
                float(np.mean([c.max() for c in chunks])))


@dataclass(frozen=True)
class QuantizerSpec:
    """Scheme selection plus its parameters.

    Binary and ternary ignore ``rounding``. ``draft_divisor`` switches the
    midrise step from ``max|w| / 2**bits`` to ``max|w| / 2**(bits-1)``.
    ``headroom`` makes gemmlowp use ``(v_max - v_min) / (2**bits - 1)`` so the
    integer zero point can never push ``v_min`` or ``v_max`` off the grid.
    """
    scheme: str
    rounding: str = "nearest"
    t: float = 0.0
    bits: int = 8
    clamp: ClampPolicy = field(default_factory=ClampPolicy)
    draft_divisor: bool = False
    headroom: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.rounding not in ROUNDINGS:
            raise ValueError(f"unknown rounding {self.rounding!r}")
        if self.t < 0:
            raise ValueError("ternary threshold must be >= 0")
        if not 1 <= self.bits <= 16:
            raise ValueError("bits must lie in [1, 16]")

    @classmethod
    def binary(cls) -> QuantizerSpec:
        return cls("binary")

    @classmethod
    def ternary(cls, t: float) -> QuantizerSpec:
        return cls("ternary", t=t)

    @classmethod
    def midrise(cls, bits: int, rounding: str = "nearest", draft_divisor: bool = False) -> QuantizerSpec:
        return cls("midrise", rounding=rounding, bits=bits, draft_divisor=draft_divisor)

    @classmethod
    def gemmlowp(cls, bits: int = 8, clamp: ClampPolicy | None = None,
                 rounding: str = "nearest", headroom: bool = False) -> QuantizerSpec:
        return cls("gemmlowp", rounding=rounding, bits=bits, clamp=clamp or ClampPolicy(),
                   headroom=headroom)


@dataclass(frozen=True)
class QuantizedVector:
    codes: np.ndarray
    scale: float
    zero_point: int
    spec: QuantizerSpec
    v_min: float = -np.inf
    v_max: float = np.inf

    def dequantize(self) -> np.ndarray:
        codes = self.codes.astype(np.float64)
        if self.spec.scheme == "midrise":
            return self.scale * (codes + 0.5)
        return (codes - self.zero_point) * self.scale

    def __len__(self):
        return self.codes.shape[0]


def _values(w) -> np.ndarray:
    if isinstance(w, WeightVector):
        return w.values
    v = np.ascontiguousarray(w, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("input contains non-finite values")
    return v


def _need_rng(rng):
    if rng is None:
        raise ValueError("stochastic rounding requires an explicit rng (numpy Generator)")
    return rng


def quantize_binary(w) -> QuantizedVector:
    v = _values(w)
    if v.size == 0:
        raise ValueError("cannot quantize an empty vector")
    # sign(0) := +1, including -0.0
    codes = np.where(v < 0, -1, 1).astype(np.int8)
    return QuantizedVector(codes, 1.0, 0, QuantizerSpec.binary())


def quantize_ternary(w, t: float) -> QuantizedVector:
    """Codes are +1 above ``t``, -1 below ``-t`` and 0 on the closed band ``|x| <= t``.

    ``t`` is absolute; multiply by sigma beforehand for sigma-unit thresholds.
    """
    if t < 0:
        raise ValueError("threshold t must be >= 0")
    v = _values(w)
    if v.size == 0:
        raise ValueError("cannot quantize an empty vector")
    codes = np.zeros(v.shape, dtype=np.int8)
    codes[v > t] = 1
    codes[v < -t] = -1
    return QuantizedVector(codes, 1.0, 0, QuantizerSpec.ternary(t))


def midrise_step(w, bits: int, draft_divisor: bool = False) -> float:
    v = _values(w)
    peak = float(np.max(np.abs(v))) if v.size else 0.0
    if peak == 0.0:
        raise ValueError("degenerate input: all-zero vector gives a zero quantization step")
    return peak / 2.0 ** (bits - 1 if draft_divisor else bits)


def quantize_uniform_midrise(w, bits: int, rounding: str = "nearest", rng=None,
                             draft_divisor: bool = False) -> QuantizedVector:
    """Midrise quantizer with levels ``delta * (k + 1/2)``, ``delta = max|w| / 2**bits``."""
    spec = QuantizerSpec.midrise(bits, rounding, draft_divisor)
    v = _values(w)
    delta = midrise_step(v, bits, draft_divisor)
    if rounding == "nearest":
        codes = np.floor(v / delta)
    else:
        u = _need_rng(rng).random(v.shape)
        # stochastic rounding onto the shifted grid delta*(k + 1/2)
        codes = _kernels.stochastic_round(v / delta - 0.5, 1.0, u)
    return QuantizedVector(codes.astype(np.int64), delta, 0, spec)


def gemmlowp_params(v_min: float, v_max: float, bits: int,
                    headroom: bool = False) -> tuple[float, int]:
    """``scale = (v_max - v_min) / 2**bits`` and the zero point clamped into ``[0, 2**bits]``.

    With ``headroom`` the divisor is ``2**bits - 1`` and the zero point is
    rounded up, which places ``[v_min, v_max]`` inside the grid.
    """
    if not v_max > v_min:
        raise ValueError(f"degenerate input: v_max ({v_max}) must exceed v_min ({v_min})")
    levels = 2 ** bits
    scale = (v_max - v_min) / (levels - 1 if headroom else levels)
    if not (math.isfinite(scale) and scale > 0):
        raise ValueError(f"range [{v_min}, {v_max}] gives no usable scale at {bits} bits")
    rnd = np.ceil if headroom else np.rint
    zero_point = int(rnd(min(max(-v_min / scale, 0.0), float(levels))))
    return scale, zero_point


def quantize_gemmlowp(x, bits: int = 8, clamp: ClampPolicy | None = None,
                      rounding: str = "nearest", rng=None, headroom: bool = False) -> QuantizedVector:
    """Affine quantization ``code = round(x/scale + zero_point)`` clipped to ``[0, 2**bits]``.

    Nearest rounding is half-to-even (``np.rint``). Without ``headroom`` the
    rounded zero point can leave one extreme up to ``scale/2`` outside the
    grid, where it saturates; stochastic rounding is then biased there.
    """
    spec = QuantizerSpec.gemmlowp(bits, clamp, rounding, headroom)
    v = _values(x)
    v_min, v_max = spec.clamp.limits(v)
    scale, zp = gemmlowp_params(v_min, v_max, bits, headroom)
    shifted = v / scale + zp
    if rounding == "nearest":
        codes = np.rint(shifted)
    else:
        codes = _kernels.stochastic_round(shifted, 1.0, _need_rng(rng).random(v.shape))
    codes = np.clip(codes, 0, 2 ** bits).astype(np.int64)
    return QuantizedVector(codes, scale, zp, spec, v_min, v_max)


def stochastic_round(x, grid_step: float, rng):
    """Round ``x`` down or up to the grid so that the expectation equals ``x``.

    Accepts scalars or arrays; a scalar input returns a float.
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("stochastic_round needs finite input")
    out = _kernels.stochastic_round(arr, grid_step, _need_rng(rng).random(arr.shape))
    return float(out) if arr.ndim == 0 else out


def stochastic_ternarize(g, rng) -> QuantizedVector:
    """Unbiased ternarization: ``s * sign(g_i)`` with probability ``|g_i|/s``, ``s = max|g|``.

    An all-zero input yields all-zero codes with scale 1.
    """
    v = _values(g)
    u = _need_rng(rng).random(v.shape)
    s = float(np.max(np.abs(v))) if v.size else 0.0
    spec = QuantizerSpec("ternary")
    if s == 0.0:
        return QuantizedVector(np.zeros(v.shape, dtype=np.int8), 1.0, 0, spec)
    return QuantizedVector(_kernels.stochastic_ternarize(v, s, u), s, 0, spec)


def quantize(w, spec: QuantizerSpec, rng=None) -> QuantizedVector:
    """Dispatch on ``spec.scheme``."""
    if spec.scheme == "binary":
        return quantize_binary(w)
    if spec.scheme == "ternary":
        return quantize_ternary(w, spec.t)
    if spec.scheme == "midrise":
        return quantize_uniform_midrise(w, spec.bits, spec.rounding, rng, spec.draft_divisor)
    return quantize_gemmlowp(w, spec.bits, spec.clamp, spec.rounding, rng, spec.headroom)


def fake_quantize(x, spec: QuantizerSpec | None, rng=None) -> np.ndarray:
    """Quantize then dequantize, preserving shape. ``spec=None`` is the identity."""
    x = np.asarray(x, dtype=np.float64)
    if spec is None:
        return x.copy()
    return quantize(x.ravel(), spec, rng).dequantize().reshape(x.shape)
