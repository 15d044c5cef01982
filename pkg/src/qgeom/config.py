"""Trainer configuration files.

INI-style sections parsed with :mod:`configparser`::

    [dataset]   kind, n_points, n_classes, spread, radius, seed
    [net]       hidden (comma-separated widths), norm, affine
    [quant]     enabled, weight_bits, act_bits, act_chunks, pin_first_last, tern_samples
    [bifurcation] enabled, gl_low_bits, gl_high_bits ("full" or an integer)
    [train]     epochs, batch_size, lr, momentum, seed, trace, hist_bins

Unknown sections or keys and unparsable values raise :class:`ConfigError`
naming the line and field.
"""
from __future__ import annotations

import configparser
import dataclasses
import re

from .train import BifurcationConfig, DatasetConfig, NetConfig, QuantConfig, TrainConfig

SECTIONS = {
    "dataset": DatasetConfig,
    "net": NetConfig,
    "quant": QuantConfig,
    "bifurcation": BifurcationConfig,
    "train": TrainConfig,
}


class ConfigError(ValueError):
    pass


def _line_of(text: str, section: str, key: str | None) -> int:
    in_section = False
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if stripped.startswith("["):
            in_section = stripped.strip("[]").strip().lower() == section
            if key is None and in_section:
                return lineno
        elif in_section and key is not None and re.match(rf"{re.escape(key)}\s*[=:]", stripped, re.I):
            return lineno
    return 0


_BOOL = {"true": True, "yes": True, "on": True, "1": True,
         "false": False, "no": False, "off": False, "0": False}


def _coerce(name: str, raw: str, default):
    raw = raw.strip()
    if name == "hidden":
        return tuple(int(v) for v in raw.split(",") if v.strip())
    if name == "gl_high_bits":
        return None if raw.lower() in ("full", "none", "") else int(raw)
    if isinstance(default, bool):
        if raw.lower() not in _BOOL:
            raise ValueError(f"expected a boolean, got {raw!r}")
        return _BOOL[raw.lower()]
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config(text: str) -> dict:
    """Parse config text into ``{"dataset": DatasetConfig, ..., "train": TrainConfig}``."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"syntax error: {exc}") from exc
    values = {name: {} for name in SECTIONS}
    for section in parser.sections():
        key = section.lower()
        if key not in SECTIONS:
            raise ConfigError(f"line {_line_of(text, key, None)}: unknown section [{section}]")
        fields = {f.name: f for f in dataclasses.fields(SECTIONS[key])}
        for name, raw in parser.items(section):
            line = _line_of(text, key, name)
            if name not in fields or name == "bifurcation":
                raise ConfigError(f"line {line}: unknown field {key}.{name}")
            f = fields[name]
            default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
            try:
                values[key][name] = _coerce(name, raw, default)
            except ValueError as exc:
                raise ConfigError(f"line {line}: bad value for {key}.{name}: {exc}") from exc
    try:
        bif = BifurcationConfig(**values["bifurcation"])
        return {
            "dataset": DatasetConfig(**values["dataset"]),
            "net": NetConfig(**values["net"]),
            "quant": QuantConfig(**values["quant"], bifurcation=bif),
            "train": TrainConfig(**values["train"]),
        }
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
