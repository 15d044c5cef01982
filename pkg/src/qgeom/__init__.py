"""Quantization geometry toolkit.

Quantizers, closed-form cosine bounds for quantized Gaussian vectors, a
seeded Monte-Carlo harness that checks them, Range batch normalization and
a small quantized back-propagation trainer.
"""
__version__ = "0.1.0"

from ._kernels import BACKEND
from .bounds import (
    binary_bound, eps_norm_bound, max_gaussian_bound, nbit_bound_draft, nbit_bound_final,
    ternary_bound, ternary_optimal_threshold,
)
from .geometry import GeometryReport, angle_wrt_noise, cosine_between
from .quantizers import (
    ClampPolicy, QuantizedVector, QuantizerSpec, WeightVector, quantize, quantize_binary,
    quantize_gemmlowp, quantize_ternary, quantize_uniform_midrise, stochastic_round,
    stochastic_ternarize,
)
from .range_bn import BnParams, c_of_n, range_bn_backward, range_bn_forward, standard_bn_forward

__all__ = [
    "BACKEND", "binary_bound", "eps_norm_bound", "max_gaussian_bound", "nbit_bound_draft",
    "nbit_bound_final", "ternary_bound", "ternary_optimal_threshold", "GeometryReport",
    "angle_wrt_noise", "cosine_between", "ClampPolicy", "QuantizedVector", "QuantizerSpec",
    "WeightVector", "quantize", "quantize_binary", "quantize_gemmlowp", "quantize_ternary",
    "quantize_uniform_midrise", "stochastic_round", "stochastic_ternarize", "BnParams", "c_of_n",
    "range_bn_backward", "range_bn_forward", "standard_bn_forward",
]
