"""Flat ``key = value`` experiment configuration files.

Blank lines and ``#`` comments are ignored. Keys::

    preset, alpha, beta, u0, u1, protocol, shots, n_trials, seed,
    output_path, workers, noise.preset, noise.umi_phase_sigma,
    noise.umzi_phase_sigma, noise.waveplate_angle_sigma,
    noise.depolarizing_p, noise.seed

Complex numbers use Python's ``re+imj`` form. ``u0``/``u1`` take a gate
name or a matrix written row by row, ``a,b;c,d``.
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np

from .experiment import ConfigError, ExperimentConfig
from .noise import NoiseConfig, noise_preset

_INT_KEYS = {"shots", "n_trials", "seed", "workers"}
_NOISE_FLOAT_KEYS = {"umi_phase_sigma", "umzi_phase_sigma", "waveplate_angle_sigma", "depolarizing_p"}
KNOWN_KEYS = (
    {"preset", "alpha", "beta", "u0", "u1", "protocol", "output_path"}
    | _INT_KEYS
    | {"noise.preset", "noise.seed"}
    | {"noise." + k for k in _NOISE_FLOAT_KEYS}
)


def parse_complex(text: str) -> complex:
    try:
        return complex(text.strip().replace(" ", ""))
    except ValueError:
        raise ConfigError(f"not a complex number: {text!r}") from None


def parse_matrix(text: str) -> np.ndarray:
    rows = [r for r in text.split(";")]
    try:
        m = np.array([[parse_complex(v) for v in r.split(",")] for r in rows], dtype=complex)
    except ValueError:
        raise ConfigError(f"malformed matrix: {text!r}") from None
    if m.ndim != 2:
        raise ConfigError(f"malformed matrix: {text!r}")
    return m


def _parse_int(key: str, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {text!r}") from None


def _parse_float(key: str, text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {text!r}") from None


def parse_pairs(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def config_from_pairs(pairs: dict[str, str]) -> ExperimentConfig:
    if "preset" not in pairs:
        raise ConfigError("missing required key 'preset'")
    try:
        noise = noise_preset(pairs["noise.preset"]) if "noise.preset" in pairs else NoiseConfig()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    noise_kw = {}
    for k in _NOISE_FLOAT_KEYS:
        if "noise." + k in pairs:
            noise_kw[k] = _parse_float("noise." + k, pairs["noise." + k])
    if "noise.seed" in pairs:
        noise_kw["seed"] = _parse_int("noise.seed", pairs["noise.seed"])
    try:
        noise = replace(noise, **noise_kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    kw: dict = {"preset": pairs["preset"], "noise": noise}
    for k in ("alpha", "beta"):
        if k in pairs:
            kw[k] = parse_complex(pairs[k])
    for k in ("u0", "u1"):
        if k in pairs:
            v = pairs[k]
            kw[k] = parse_matrix(v) if ("," in v or ";" in v) else v
    for k in _INT_KEYS:
        if k in pairs:
            kw[k] = _parse_int(k, pairs[k])
    if "protocol" in pairs:
        kw["protocol"] = pairs["protocol"]
    if "output_path" in pairs:
        kw["output_path"] = pairs["output_path"]
    return ExperimentConfig(**kw)


def parse_config(text: str) -> ExperimentConfig:
    return config_from_pairs(parse_pairs(text))


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return parse_config(text)
