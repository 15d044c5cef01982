"""Desk-scale quantized back-propagation on a small MLP.

Forward: every linear layer multiplies gemmlowp fake-quantized inputs by
fake-quantized weights, followed by batch normalization (Range BN by
default) and ReLU; the last layer feeds a softmax cross-entropy loss.

Backward: the layer gradient ``g`` arriving at each linear layer is split in
two copies. The low-precision copy (stochastic rounding) propagates to the
previous layer, ``g_prev = g_low @ W_q.T``; the high-precision copy forms the
weight gradient ``g_W = I_q.T @ g_high``. Quantizers are crossed with a
straight-through estimator that passes gradients inside the clamp range and
zeroes them outside. Master weights stay in float64.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import range_bn as bn
from .geometry import cosine
from .quantizers import ClampPolicy, QuantizerSpec, quantize, stochastic_ternarize


class TrainingAborted(RuntimeError):
    """Raised when the loss becomes NaN or infinite."""


# -- configuration ---------------------------------------------------------

@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "blobs"
    n_points: int = 2000
    n_classes: int = 4
    spread: float = 0.7
    radius: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("blobs", "rings"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.n_points < self.n_classes or self.n_classes < 2:
            raise ValueError("need at least two classes and one point per class")


@dataclass(frozen=True)
class NetConfig:
    hidden: tuple = (32, 32)
    norm: str = "range"
    affine: bool = True

    def __post_init__(self):
        if self.norm not in ("range", "standard", "none"):
            raise ValueError(f"unknown normalization {self.norm!r}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


@dataclass(frozen=True)
class BifurcationConfig:
    """``gl_high_bits=None`` keeps the high copy in full precision; 16 emulates a 16-bit grid."""
    enabled: bool = True
    gl_low_bits: int = 8
    gl_high_bits: int | None = None

    def __post_init__(self):
        if self.gl_high_bits is not None and self.gl_high_bits < self.gl_low_bits:
            raise ValueError("high-precision copy must not be coarser than the low copy")


@dataclass(frozen=True)
class QuantConfig:
    """``enabled=False`` gives a plain full-precision network."""
    enabled: bool = False
    weight_bits: int = 8
    act_bits: int = 8
    act_chunks: int = 4
    bifurcation: BifurcationConfig = field(default_factory=BifurcationConfig)
    pin_first_last: bool = False
    tern_samples: int = 0

    @property
    def weight_spec(self) -> QuantizerSpec:
        return QuantizerSpec.gemmlowp(self.weight_bits)

    @property
    def act_spec(self) -> QuantizerSpec:
        return QuantizerSpec.gemmlowp(self.act_bits, ClampPolicy("chunked_average", self.act_chunks))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 0.1
    momentum: float = 0.9
    seed: int = 0
    trace: bool = True
    hist_bins: int = 40


# -- data and parameters ---------------------------------------------------

def make_dataset(cfg: DatasetConfig) -> tuple[np.ndarray, np.ndarray]:
    """2-D synthetic classification data: Gaussian blobs on a circle or concentric rings."""
    rng = np.random.default_rng(cfg.seed)
    y = np.arange(cfg.n_points) % cfg.n_classes
    if cfg.kind == "blobs":
        angles = 2 * np.pi * y / cfg.n_classes
        centres = cfg.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        x = centres + cfg.spread * rng.standard_normal((cfg.n_points, 2))
    else:
        r = cfg.radius * (y + 1) / cfg.n_classes + cfg.spread * 0.25 * rng.standard_normal(cfg.n_points)
        theta = rng.uniform(0, 2 * np.pi, cfg.n_points)
        x = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    perm = rng.permutation(cfg.n_points)
    return x[perm], y[perm]


@dataclass
class Net:
    weights: list
    biases: list
    gammas: list
    betas: list
    norm: str = "range"
    affine: bool = True

    @classmethod
    def init(cls, sizes, rng: np.random.Generator, norm: str = "range", affine: bool = True) -> Net:
        ws, bs, gs, betas = [], [], [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            ws.append(rng.standard_normal((fan_in, fan_out)) * math.sqrt(2.0 / fan_in))
            bs.append(np.zeros(fan_out))
        for width in sizes[1:-1]:
            gs.append(np.ones(width))
            betas.append(np.zeros(width))
        return cls(ws, bs, gs, betas, norm, affine)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases, *self.gammas, *self.betas]

    def n_params(self) -> int:
        return sum(p.size for p in self.params())


# -- layer primitives ------------------------------------------------------

def _fake_quant(x: np.ndarray, spec: QuantizerSpec | None, rng=None):
    """Return (dequantized tensor, STE mask)."""
    if spec is None:
        return x, None
    q = quantize(x.ravel(), spec, rng)
    mask = ((x >= q.v_min) & (x <= q.v_max)) if spec.scheme == "gemmlowp" else None
    return q.dequantize().reshape(x.shape), mask


def gradient_spec(bits: int, rounding: str) -> QuantizerSpec:
    """Layer-gradient quantizer: gemmlowp with one spare level so no element saturates,
    which keeps stochastic rounding unbiased on every coordinate."""
    return QuantizerSpec.gemmlowp(bits, rounding=rounding, headroom=True)


def _quant_grad(g: np.ndarray, bits: int | None, rounding: str, rng) -> np.ndarray:
    if bits is None:
        return g
    if np.ptp(g) == 0:
        return g.copy()
    return _fake_quant(g, gradient_spec(bits, rounding), rng)[0]


def _bn_forward(h, net: Net, i):
    p = bn.BnParams(net.gammas[i], net.betas[i]) if net.affine else None
    if net.norm == "range":
        return bn.range_bn_forward(h, p, net.affine)
    return bn.standard_bn_forward(h, p if p is not None else bn.BnParams.identity(h.shape[1]), net.affine)


def _bn_backward(h, g, net: Net, i):
    p = bn.BnParams(net.gammas[i], net.betas[i]) if net.affine else None
    if net.norm == "range":
        return bn.range_bn_backward(h, g, p, net.affine)
    return bn.standard_bn_backward(h, g, p if p is not None else bn.BnParams.identity(h.shape[1]), net.affine)


def softmax_xent(logits: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient with respect to the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    n = y.shape[0]
    loss = -float(np.mean(np.log(p[np.arange(n), y] + 1e-300)))
    p[np.arange(n), y] -= 1.0
    return loss, p / n


def _layer_quantized(qcfg: QuantConfig | None, i: int, n_layers: int) -> bool:
    if qcfg is None or not qcfg.enabled:
        return False
    return not (qcfg.pin_first_last and i in (0, n_layers - 1))


def forward(x, net: Net, qcfg: QuantConfig | None = None, rng=None):
    """Forward pass; returns ``(logits, caches)``."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != net.weights[0].shape[0]:
        raise ValueError("input shape does not match the first layer")
    if a.shape[0] < 2 and net.norm != "none":
        raise ValueError("batch normalization needs a batch of at least 2")
    caches = []
    for i in range(net.n_layers):
        quant = _layer_quantized(qcfg, i, net.n_layers)
        inp, in_mask = _fake_quant(a, qcfg.act_spec if quant else None, rng)
        w_q, w_mask = _fake_quant(net.weights[i], qcfg.weight_spec if quant else None, rng)
        h = inp @ w_q + net.biases[i]
        cache = {"input": inp, "in_mask": in_mask, "w_q": w_q, "w_mask": w_mask, "pre": h, "quant": quant}
        if i < net.n_layers - 1:
            if net.norm != "none":
                hn = _bn_forward(h, net, i)
            else:
                hn = h
            cache["bn_out"] = hn
            a = np.maximum(hn, 0.0)
        else:
            a = h
        caches.append(cache)
    return a, caches


@dataclass
class Grads:
    weights: list
    biases: list
    gammas: list
    betas: list
    layer_grads: list  # gradient arriving at each linear layer's output, as used for g_prev
    layer_grads_ref: list  # unquantized version of the same tensor

    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases, *self.gammas, *self.betas]


def backward_bifurcated(g_out, caches, net: Net, qcfg: QuantConfig | None = None, rng=None) -> Grads:
    """Back-propagate ``g_out`` (gradient w.r.t. the logits) through cached layers."""
    if not caches or len(caches) != net.n_layers:
        raise ValueError("forward caches missing or incomplete")
    L = net.n_layers
    gw, gb = [None] * L, [None] * L
    gg, gbeta = [np.zeros_like(p) for p in net.gammas], [np.zeros_like(p) for p in net.betas]
    used, ref = [None] * L, [None] * L
    bif = qcfg.bifurcation if qcfg is not None else BifurcationConfig(enabled=False)
    g = np.asarray(g_out, dtype=np.float64)
    for i in reversed(range(L)):
        c = caches[i]
        if i < L - 1:
            g = g * (c["bn_out"] > 0)
            if net.norm != "none":
                g, dgam, dbet = _bn_backward(c["pre"], g, net, i)
                if net.affine:
                    gg[i], gbeta[i] = dgam, dbet
        ref[i] = g
        quant_grads = c["quant"] and qcfg is not None and qcfg.enabled
        if quant_grads:
            g_low = _quant_grad(g, bif.gl_low_bits, "stochastic", rng)
            if bif.enabled:
                g_high = _quant_grad(g, bif.gl_high_bits, "nearest", rng)
            else:
                g_high = g_low
        else:
            g_low = g_high = g
        used[i] = g_low
        if quant_grads and qcfg.tern_samples > 0:
            gw_i = multi_stochastic_ternarization_update(g_high, c["input"], qcfg.tern_samples, rng)
        else:
            gw_i = c["input"].T @ g_high
        if c["w_mask"] is not None:
            gw_i = gw_i * c["w_mask"]
        gw[i] = gw_i
        gb[i] = g_high.sum(axis=0)
        if i > 0:
            g = g_low @ c["w_q"].T
            if c["in_mask"] is not None:
                g = g * c["in_mask"]
    return Grads(gw, gb, gg, gbeta, used, ref)


def loss_and_grads(x, y, net: Net, qcfg: QuantConfig | None = None, rng=None):
    logits, caches = forward(x, net, qcfg, rng)
    loss, g = softmax_xent(logits, y)
    return loss, backward_bifurcated(g, caches, net, qcfg, rng), logits, caches


def loss_only(x, y, net: Net) -> float:
    logits, _ = forward(x, net)
    return softmax_xent(logits, y)[0]


# -- multi-sample stochastic ternarization ---------------------------------

def multi_stochastic_ternarization_update(g_s, a, samples: int, rng) -> np.ndarray:
    """Average of ``samples`` weight-gradient products, each with a fresh stochastic
    ternarization of ``g_s``: ``a.T @ StcTern(g_s)`` (layout ``(d_in, d_out)``).

    Unbiased for ``a.T @ g_s``; the variance falls as ``1/samples``.
    """
    if samples < 1:
        raise ValueError("number of samples must be >= 1")
    g_s = np.asarray(g_s, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if a.shape[0] != g_s.shape[0]:
        raise ValueError("g_s and a must share the batch dimension")
    acc = np.zeros((a.shape[1], g_s.shape[1]))
    for _ in range(samples):
        acc += a.T @ stochastic_ternarize(g_s.ravel(), rng).dequantize().reshape(g_s.shape)
    return acc / samples


def ternarization_correlation(g_s, a, samples: int, rng) -> float:
    """Pearson correlation between the sampled estimate and the exact product ``a.T @ g_s``."""
    est = multi_stochastic_ternarization_update(g_s, a, samples, rng).ravel()
    exact = (np.asarray(a).T @ np.asarray(g_s)).ravel()
    if np.std(est) == 0 or np.std(exact) == 0:
        return float("nan")
    return float(np.corrcoef(est, exact)[0, 1])


# -- training loop ---------------------------------------------------------

@dataclass
class AngleTrace:
    """Per layer, per step cosines: ``weight`` (W vs Q(W)), ``grad_layer``
    (propagated g vs unquantized g) and ``grad_weight`` (g_W vs the g_W of a
    gradient-unquantized backward through the same forward caches)."""
    weight: list = field(default_factory=list)
    grad_layer: list = field(default_factory=list)
    grad_weight: list = field(default_factory=list)

    def record(self, kind: str, layer: int, value: float) -> None:
        rows = getattr(self, kind)
        while len(rows) <= layer:
            rows.append([])
        rows[layer].append(value)

    def mean(self, kind: str) -> float:
        vals = [v for layer in getattr(self, kind) for v in layer]
        return float(np.mean(vals)) if vals else float("nan")

    def as_dict(self) -> dict:
        return {"weight": self.weight, "grad_layer": self.grad_layer, "grad_weight": self.grad_weight,
                "mean": {k: self.mean(k) for k in ("weight", "grad_layer", "grad_weight")}}


@dataclass
class TrainingReport:
    final_accuracy: float
    final_loss: float
    loss_curve: list
    accuracy_curve: list
    angle_trace: AngleTrace
    histograms: dict
    config: dict

    def to_json(self) -> str:
        body = {
            "final_accuracy": self.final_accuracy,
            "final_loss": self.final_loss,
            "loss_curve": self.loss_curve,
            "accuracy_curve": self.accuracy_curve,
            "angle_trace": self.angle_trace.as_dict(),
            "config": self.config,
        }
        return json.dumps(body, indent=2, default=_json_default)

    def histograms_csv(self) -> str:
        lines = ["tensor,bin_lo,bin_hi,count"]
        for name, h in self.histograms.items():
            edges, counts = h["edges"], h["counts"]
            for k, c in enumerate(counts):
                lines.append(f"{name},{edges[k]!r},{edges[k + 1]!r},{c}")
        return "\n".join(lines) + "\n"


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o))


def histogram(values: np.ndarray, bins: int) -> dict:
    """Bin counts over the observed range (counts suit a log-scale plot)."""
    v = np.asarray(values, dtype=np.float64).ravel()
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(v, bins=bins, range=(lo, hi))
    return {"edges": [float(e) for e in edges], "counts": [int(c) for c in counts]}


def accuracy(x, y, net: Net, qcfg: QuantConfig | None = None, batch: int = 500) -> float:
    """Training-mode accuracy, evaluated in chunks of about ``batch`` rows."""
    chunks = np.array_split(np.arange(x.shape[0]), max(1, x.shape[0] // batch))
    correct = 0
    for idx in chunks:
        logits, _ = forward(x[idx], net, qcfg)
        correct += int(np.sum(np.argmax(logits, axis=1) == y[idx]))
    return correct / x.shape[0]


def train(dataset_cfg: DatasetConfig, net_cfg: NetConfig, quant_cfg: QuantConfig,
          train_cfg: TrainConfig) -> TrainingReport:
    """SGD with momentum on float64 master weights; batch statistics throughout."""
    x, y = make_dataset(dataset_cfg)
    seeds = np.random.SeedSequence(train_cfg.seed).spawn(3)
    init_rng, shuffle_rng, quant_rng = (np.random.Generator(np.random.Philox(s)) for s in seeds)
    sizes = [x.shape[1], *net_cfg.hidden, dataset_cfg.n_classes]
    net = Net.init(sizes, init_rng, net_cfg.norm, net_cfg.affine)
    velocity = [np.zeros_like(p) for p in net.params()]
    trace = AngleTrace()
    loss_curve, acc_curve = [], []
    n = x.shape[0]
    bs = train_cfg.batch_size
    last = None
    for _epoch in range(train_cfg.epochs):
        perm = shuffle_rng.permutation(n)
        epoch_losses = []
        for s in range(0, n - 1, bs):
            idx = perm[s:s + bs]
            if idx.shape[0] < 2:
                continue
            xb, yb = x[idx], y[idx]
            loss, grads, logits, caches = loss_and_grads(xb, yb, net, quant_cfg, quant_rng)
            if not math.isfinite(loss):
                raise TrainingAborted(f"non-finite loss {loss} in epoch {_epoch}")
            epoch_losses.append(loss)
            if train_cfg.trace:
                _record_angles(trace, grads, caches, net, logits, yb)
            for p, v, gp in zip(net.params(), velocity, grads.params()):
                v *= train_cfg.momentum
                v -= train_cfg.lr * gp
                p += v
            last = (caches, grads)
        loss_curve.append(float(np.mean(epoch_losses)))
        acc_curve.append(accuracy(x, y, net, quant_cfg))
    hists = {}
    if last is not None:
        caches, grads = last
        for i, c in enumerate(caches):
            hists[f"act{i}"] = histogram(c["input"], train_cfg.hist_bins)
            hists[f"g_layer{i}"] = histogram(grads.layer_grads_ref[i], train_cfg.hist_bins)
            hists[f"g_w{i}"] = histogram(grads.weights[i], train_cfg.hist_bins)
    config = {"dataset": asdict(dataset_cfg), "net": asdict(net_cfg), "quant": asdict(quant_cfg),
              "train": asdict(train_cfg)}
    return TrainingReport(acc_curve[-1] if acc_curve else float("nan"),
                          loss_curve[-1] if loss_curve else float("nan"),
                          loss_curve, acc_curve, trace, hists, config)


def _safe_cos(a, b) -> float | None:
    if not np.any(a) or not np.any(b):
        return None
    return cosine(a, b)


def _record_angles(trace: AngleTrace, grads: Grads, caches, net: Net, logits, yb) -> None:
    # reference: the same forward caches, no gradient quantization anywhere
    _, g_out = softmax_xent(logits, yb)
    ref = backward_bifurcated(g_out, caches, net, None)
    for i, c in enumerate(caches):
        pairs = (("weight", net.weights[i], c["w_q"]),
                 ("grad_layer", grads.layer_grads_ref[i], grads.layer_grads[i]),
                 ("grad_weight", ref.weights[i], grads.weights[i]))
        for kind, a, b in pairs:
            v = _safe_cos(a, b)
            if v is not None:
                trace.record(kind, i, v)
