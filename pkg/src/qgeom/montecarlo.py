"""Seeded Monte-Carlo harness for cosine/angle statistics and parameter sweeps.

Every trial draws from its own counter-based stream, ``Philox`` keyed by
``(master_seed, trial_index)``, so trials are independent of execution order
and results are identical for any worker count. Gaussian variates come from
the Box-Muller transform: ``r = sqrt(-2 ln(1 - u1))``, ``z = (r cos 2 pi u2,
r sin 2 pi u2)`` interleaved, on 53-bit uniforms.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels, bounds
from .geometry import angle_deg, cosine_from_sums
from .quantizers import QuantizerSpec, WeightVector, midrise_step, quantize

CSV_HEADER = ("param", "emp_cos", "se", "theory_cos", "emp_angle", "theory_angle")


def trial_rng(master_seed: int, trial_index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(master_seed), int(trial_index)])))


def box_muller(rng: np.random.Generator, n: int) -> np.ndarray:
    m = (n + 1) // 2
    u1 = 1.0 - rng.random(m)
    u2 = rng.random(m)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * m)
    z[0::2] = r * np.cos(2.0 * np.pi * u2)
    z[1::2] = r * np.sin(2.0 * np.pi * u2)
    return z[:n]


def sample_gaussian(n: int, sigma: float, seed, trial_index: int = 0) -> WeightVector:
    """``n`` i.i.d. N(0, sigma^2) draws; a fixed seed gives the same stream for every sigma."""
    if n < 1 or sigma <= 0:
        raise ValueError("need n >= 1 and sigma > 0")
    return WeightVector(sigma * box_muller(trial_rng(seed, trial_index), n), sigma)


@dataclass(frozen=True)
class McConfig:
    n: int = 10_000
    sigma: float = 1.0
    trials: int = 100
    master_seed: int = 0
    spec: QuantizerSpec = field(default_factory=QuantizerSpec.binary)
    jobs: int = 1

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("vector dimension n must be >= 2")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class SweepRow:
    param: float
    emp_cos: float
    se: float
    theory_cos: float
    emp_angle: float
    theory_angle: float


@dataclass
class SweepResult:
    kind: str
    rows: list[SweepRow]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.rows:
            writer.writerow([repr(float(getattr(r, k))) for k in CSV_HEADER])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "rows": [asdict(r) for r in self.rows]}, indent=2)

    def argmin_angle(self) -> float:
        return min(self.rows, key=lambda r: (r.emp_angle, r.param)).param


def _scheme_sums(w: np.ndarray, spec: QuantizerSpec, sigma: float,
                 rng: np.random.Generator) -> tuple[float, float, float]:
    if spec.scheme == "binary":
        return _kernels.fused_binary(w)
    if spec.scheme == "ternary":
        return _kernels.fused_ternary(w, spec.t * sigma)
    if spec.scheme == "midrise" and spec.rounding == "nearest":
        return _kernels.fused_midrise(w, midrise_step(w, spec.bits, spec.draft_divisor))
    # stochastic and gemmlowp paths are not fused
    return _kernels.fused_dot(w, quantize(w, spec, rng).dequantize())


def _run_trials(cfg: McConfig, specs: list[QuantizerSpec]) -> np.ndarray:
    """Cosine matrix of shape (trials, len(specs)); each trial reuses one draw across specs."""

    def one(trial: int) -> list[float]:
        rng = trial_rng(cfg.master_seed, trial)
        w = cfg.sigma * box_muller(rng, cfg.n)
        return [cosine_from_sums(*_scheme_sums(w, s, cfg.sigma, rng)) for s in specs]

    indices = range(cfg.trials)
    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            out = list(pool.map(one, indices))
    else:
        out = [one(i) for i in indices]
    return np.asarray(out, dtype=np.float64).reshape(cfg.trials, len(specs))


def _summarize(cos_col: np.ndarray) -> tuple[float, float, float]:
    # trial order is fixed, so fsum gives the same mean whatever the worker count
    trials = cos_col.shape[0]
    mean = math.fsum(cos_col) / trials
    se = math.sqrt(math.fsum((cos_col - mean) ** 2) / (trials - 1) / trials) if trials > 1 else 0.0
    mean_angle = math.fsum(angle_deg(c) for c in cos_col) / trials
    return mean, se, mean_angle


def empirical_cosine(cfg: McConfig) -> tuple[float, float, float]:
    """Mean cosine, its standard error, and mean angle in degrees over ``cfg.trials`` draws."""
    return _summarize(_run_trials(cfg, [cfg.spec])[:, 0])


def theory_cosine(spec: QuantizerSpec, n: int) -> float:
    if spec.scheme == "binary":
        return bounds.binary_bound()
    if spec.scheme == "ternary":
        return bounds.ternary_bound(spec.t)
    if spec.scheme == "midrise":
        return (bounds.nbit_bound_draft if spec.draft_divisor else bounds.nbit_bound_final)(spec.bits, n)
    return float("nan")


def _sweep(cfg: McConfig, kind: str, params, specs) -> SweepResult:
    cos = _run_trials(cfg, specs)
    rows = []
    for j, (p, spec) in enumerate(zip(params, specs)):
        mean, se, ang = _summarize(cos[:, j])
        theory = theory_cosine(spec, cfg.n)
        th_angle = angle_deg(theory) if math.isfinite(theory) else float("nan")
        rows.append(SweepRow(float(p), mean, se, theory, ang, th_angle))
    return SweepResult(kind, rows)


def _check_grid(grid) -> list:
    grid = list(grid)
    if not grid:
        raise ValueError("empty grid")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be strictly ascending")
    return grid


def sweep_threshold(cfg: McConfig, t_grid) -> SweepResult:
    """Ternary sweep over thresholds given in sigma units."""
    grid = _check_grid(t_grid)
    if grid[0] < 0:
        raise ValueError("thresholds must be >= 0")
    return _sweep(cfg, "threshold", grid, [QuantizerSpec.ternary(t) for t in grid])


def sweep_bits(cfg: McConfig, bits_grid) -> SweepResult:
    """Midrise (nearest rounding) sweep over bit widths."""
    grid = [int(m) for m in _check_grid(bits_grid)]
    if grid[0] < 1 or grid[-1] > 16:
        raise ValueError("bit widths must lie in [1, 16]")
    draft = cfg.spec.scheme == "midrise" and cfg.spec.draft_divisor
    return _sweep(cfg, "bits", grid, [QuantizerSpec.midrise(m, draft_divisor=draft) for m in grid])


def eps_orthogonality_check(n: int, trials: int, seed: int, inject_degenerate: bool = False) -> dict:
    """Cosine between a Gaussian vector and independent uniform noise.

    Passes when ``|mean| <= 3 se`` and the spread is within 25% of ``1/sqrt(n)``
    (50% below n = 100, where the normal approximation is rough).
    ``inject_degenerate`` sets the noise equal to the vector, a negative control.
    """
    if n < 2 or trials < 2:
        raise ValueError("need n >= 2 and trials >= 2")
    cos = np.empty(trials)
    for i in range(trials):
        rng = trial_rng(seed, i)
        w = box_muller(rng, n)
        eps = w if inject_degenerate else rng.random(n) - 0.5
        cos[i] = cosine_from_sums(*_kernels.fused_dot(w, eps))
    mean = float(np.mean(cos))
    std = float(np.std(cos, ddof=1))
    se = std / math.sqrt(trials)
    expected = 1.0 / math.sqrt(n)
    tol = 0.25 if n >= 100 else 0.5
    mean_ok = abs(mean) <= 3 * se if se > 0 else abs(mean) < 1e-12
    std_ok = abs(std - expected) <= tol * expected
    return {"n": n, "trials": trials, "mean_cos": mean, "std_cos": std, "se": se,
            "expected_std": expected, "std_tolerance": tol, "mean_ok": bool(mean_ok),
            "std_ok": bool(std_ok), "passed": bool(mean_ok and std_ok)}


def eps_norm_check(n: int, delta: float, trials: int, seed: int) -> dict:
    """Norm of uniform noise on ``[-delta/2, delta/2]^n`` against ``sqrt(n/12) delta``.

    Also reports the two steps behind the bound: the sample Jensen step
    ``mean||eps|| <= sqrt(mean||eps||^2)`` and the second moment
    ``E eps_i^2 = delta^2/12``.
    """
    norms = np.empty(trials)
    sq = np.empty(trials)
    for i in range(trials):
        eps = delta * (trial_rng(seed, i).random(n) - 0.5)
        s = float(np.sum(eps * eps))
        sq[i] = s
        norms[i] = math.sqrt(s)
    bound = bounds.eps_norm_bound(n, delta)
    mean_norm = math.fsum(norms) / trials
    rms_norm = math.sqrt(math.fsum(sq) / trials)
    per_coord = sq / n
    se_second = float(np.std(per_coord, ddof=1)) / math.sqrt(trials)
    return {"n": n, "delta": delta, "trials": trials, "bound": bound,
            "mean_norm": mean_norm, "rms_norm": rms_norm,
            "z_vs_bound": (mean_norm - bound) / (float(np.std(norms, ddof=1)) / math.sqrt(trials)),
            "second_moment": float(np.mean(per_coord)), "second_moment_theory": delta * delta / 12.0,
            "second_moment_se": se_second,
            "jensen_ok": bool(mean_norm <= rms_norm + 1e-12),
            "passed": bool(mean_norm <= bound + 1e-12)}
