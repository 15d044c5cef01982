"""Command line entry point.

Exit codes: 0 success, 1 property check failed, 2 usage/config error,
3 output not writable, 4 training aborted (non-finite loss).
Data goes to stdout; diagnostics go to stderr. Every file written is
accompanied by a ``<file>.manifest.json`` sidecar.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import secrets
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, bounds, montecarlo as mc, range_bn
from .config import ConfigError, load_config

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_UNWRITABLE, EXIT_ABORT = 0, 1, 2, 3, 4
OUTPUT_DIR_ENV = "QGEOM_OUTPUT_DIR"


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _eprint(*args):
    print(*args, file=sys.stderr)


def _resolve_out(path: str) -> Path:
    p = Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    return p


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_UNWRITABLE) from exc


def manifest(command: str, config: dict, seed) -> dict:
    return {
        "command": command,
        "config": config,
        "master_seed": seed,
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def _write_with_manifest(path: Path, text: str, man: dict) -> None:
    _write(path, text)
    _write(path.with_name(path.name + ".manifest.json"), json.dumps(man, indent=2, default=str) + "\n")


def _seed(args) -> int:
    if args.seed is None:
        args.seed = secrets.randbits(63)
        _eprint(f"seed: {args.seed}")
    return args.seed


def parse_grid(text: str, integer: bool = False) -> list:
    """``a:b:step`` (inclusive), ``a:b`` (step 1) or a comma list."""
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) == 2:
                parts.append(1.0)
            if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
                raise ValueError
            lo, hi, step = parts
            count = int(math.floor((hi - lo) / step + 1e-9)) + 1
            # round away accumulated float noise so grid values print cleanly
            grid = [round(lo + i * step, 12) for i in range(count)]
        else:
            grid = [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise CliError(f"invalid grid {text!r}", EXIT_USAGE) from None
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
        raise CliError(f"invalid grid {text!r}: must be nonempty and ascending", EXIT_USAGE)
    if integer:
        if any(g != int(g) for g in grid):
            raise CliError(f"bit grid {text!r} must contain integers", EXIT_USAGE)
        grid = [int(g) for g in grid]
    return grid


# -- subcommands -----------------------------------------------------------

def cmd_theory(args) -> int:
    params = {k: v for k, v in (("t", args.t), ("M", args.M), ("N", args.N), ("delta", args.delta),
                                ("sigma", args.sigma), ("max_w", args.max_w)) if v is not None}
    try:
        result = bounds.evaluate(args.formula, **params)
    except KeyError as exc:
        raise CliError(f"missing parameter {exc} for formula {args.formula}", EXIT_USAGE) from None
    except (ValueError, OverflowError) as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    if args.formula == "max_gaussian":
        print(f"{result.params['lower']:.10g} {result.params['upper']:.10g}")
    else:
        print(f"{result.value:.10g}")
    if args.json:
        body = {"formula_id": result.formula_id, "value": result.value, "params": result.params}
        man = manifest("theory", {"formula": args.formula, **params}, None)
        _write_with_manifest(_resolve_out(args.json), json.dumps(body, indent=2) + "\n", man)
    return EXIT_OK


def cmd_sweep(args) -> int:
    seed = _seed(args)
    grid = parse_grid(args.grid, integer=args.kind == "bits")
    try:
        cfg = mc.McConfig(n=args.n, sigma=args.sigma, trials=args.trials, master_seed=seed, jobs=args.jobs)
        if args.kind == "threshold":
            result = mc.sweep_threshold(cfg, grid)
        else:
            result = mc.sweep_bits(cfg, grid)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    config = {"kind": args.kind, "grid": grid, "n": args.n, "sigma": args.sigma, "trials": args.trials}
    man = manifest("sweep", config, seed)
    out = _resolve_out(args.out)
    _write_with_manifest(out, result.to_csv(), man)
    if args.json:
        _write_with_manifest(_resolve_out(args.json), result.to_json() + "\n", man)
    _eprint(f"wrote {len(result.rows)} rows to {out}")
    return EXIT_OK


def rangebn_report(n: int, d: int, sigma: float, batches: int, seed: int,
                   scales=(0.5, 3.0, 100.0)) -> dict:
    """Expectation sandwich ``0.325 <= E[C(n) range] / sigma <= 2`` and positive-scale invariance."""
    rng = mc.trial_rng(seed, 0)
    # every column of this matrix is one independent batch of a single feature
    ratios = []
    remaining = batches * d
    chunk = max(1, min(remaining, 2_000_000 // max(n, 1)))
    while remaining > 0:
        m = min(chunk, remaining)
        x = sigma * mc.box_muller(rng, n * m).reshape(n, m)
        ratios.append(range_bn.range_scale(x) / sigma)
        remaining -= m
    ratios = np.concatenate(ratios)
    mean_ratio = float(np.mean(ratios))
    sandwich_ok = 0.325 <= mean_ratio <= 2.0

    x = sigma * mc.box_muller(rng, n * d).reshape(n, d)
    base_range = range_bn.range_bn_forward(x)
    base_std = range_bn.standard_bn_forward(x)
    invariance = []
    for c in scales:
        err_r = float(np.max(np.abs(range_bn.range_bn_forward(c * x) - base_range)))
        err_s = float(np.max(np.abs(range_bn.standard_bn_forward(c * x) - base_std)))
        invariance.append({"c": c, "range_bn_max_err": err_r, "standard_bn_max_err": err_s,
                           "ok": err_r <= 1e-9 and err_s <= 1e-9})
    inv_ok = all(r["ok"] for r in invariance)
    return {"n": n, "d": d, "sigma": sigma, "batches": batches, "c_of_n": range_bn.c_of_n(n),
            "mean_ratio": mean_ratio, "ratio_se": float(np.std(ratios, ddof=1) / math.sqrt(ratios.size))
            if ratios.size > 1 else 0.0,
            "sandwich": [0.325, 2.0], "sandwich_ok": sandwich_ok,
            "scale_invariance": invariance, "scale_invariance_ok": inv_ok,
            "passed": bool(sandwich_ok and inv_ok)}


def cmd_rangebn(args) -> int:
    seed = _seed(args)
    if args.n < 2 or args.d < 1 or args.batches < 1 or args.sigma <= 0:
        raise CliError("need n >= 2, d >= 1, batches >= 1, sigma > 0", EXIT_USAGE)
    report = rangebn_report(args.n, args.d, args.sigma, args.batches, seed)
    text = json.dumps(report, indent=2) + "\n"
    print(text, end="")
    if args.out:
        config = {"n": args.n, "d": args.d, "sigma": args.sigma, "batches": args.batches}
        _write_with_manifest(_resolve_out(args.out), text, manifest("rangebn", config, seed))
    return EXIT_OK if report["passed"] else EXIT_FAIL


def _config_path(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    bundled = resources.files("qgeom") / "configs" / (name if name.endswith(".ini") else name + ".ini")
    if bundled.is_file():
        return Path(str(bundled))
    raise CliError(f"config file {name!r} not found", EXIT_USAGE)


def cmd_train(args) -> int:
    import dataclasses

    from .train import TrainingAborted, train

    path = _config_path(args.config)
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        raise CliError(f"{path}: {exc}", EXIT_USAGE) from None
    if args.no_bifurcation:
        q = cfg["quant"]
        cfg["quant"] = dataclasses.replace(q, bifurcation=dataclasses.replace(q.bifurcation, enabled=False))
    if args.seed is not None:
        cfg["train"] = dataclasses.replace(cfg["train"], seed=args.seed)
    try:
        report = train(cfg["dataset"], cfg["net"], cfg["quant"], cfg["train"])
    except TrainingAborted as exc:
        raise CliError(str(exc), EXIT_ABORT) from None
    out_dir = _resolve_out(args.out_dir)
    man = manifest("train", report.config, cfg["train"].seed)
    _write_with_manifest(out_dir / "report.json", report.to_json() + "\n", man)
    _write_with_manifest(out_dir / "histograms.csv", report.histograms_csv(), man)
    print(json.dumps({"final_accuracy": report.final_accuracy, "final_loss": report.final_loss,
                      "mean_grad_weight_cos": report.angle_trace.mean("grad_weight"),
                      "mean_grad_layer_cos": report.angle_trace.mean("grad_layer"),
                      "mean_weight_cos": report.angle_trace.mean("weight")}))
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qgeom", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    th = sub.add_parser("theory", help="evaluate a closed-form bound")
    th.add_argument("formula", choices=[f for f in bounds.FORMULA_IDS if f != "mse_decompose"])
    th.add_argument("--t", type=float)
    th.add_argument("--M", type=int)
    th.add_argument("--N", type=int)
    th.add_argument("--delta", type=float)
    th.add_argument("--sigma", type=float)
    th.add_argument("--max-w", dest="max_w", type=float)
    th.add_argument("--json", help="also write the value as JSON")
    th.set_defaults(func=cmd_theory)

    sw = sub.add_parser("sweep", help="Monte-Carlo sweep written as CSV")
    sw.add_argument("kind", choices=["threshold", "bits"])
    sw.add_argument("--grid", required=True, help="a:b:step, a:b or a comma list")
    sw.add_argument("--n", type=int, default=10_000)
    sw.add_argument("--sigma", type=float, default=1.0)
    sw.add_argument("--trials", type=int, default=100)
    sw.add_argument("--seed", type=int)
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--out", required=True)
    sw.add_argument("--json", help="also write the sweep as JSON")
    sw.set_defaults(func=cmd_sweep)

    rb = sub.add_parser("rangebn", help="Range BN expectation sandwich and scale invariance")
    rb.add_argument("--n", type=int, default=256)
    rb.add_argument("--d", type=int, default=1)
    rb.add_argument("--sigma", type=float, default=1.0)
    rb.add_argument("--batches", type=int, default=10_000)
    rb.add_argument("--seed", type=int)
    rb.add_argument("--out")
    rb.set_defaults(func=cmd_rangebn)

    tr = sub.add_parser("train", help="train the small MLP from a config file")
    tr.add_argument("config", help="path, or a bundled name: fullprec, bifurcated8bit")
    tr.add_argument("--out-dir", default="train_out")
    tr.add_argument("--seed", type=int, help="override [train] seed")
    tr.add_argument("--no-bifurcation", action="store_true")
    tr.set_defaults(func=cmd_train)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        _eprint(f"error: {exc}")
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
