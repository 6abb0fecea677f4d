"""Flat ``key = value`` experiment configs.

Grammar: one ``key = value`` per line; ``#`` starts a comment; blank lines are
ignored. Values are integers, reals, bare words, or comma-separated lists of
those. Keys are case-sensitive. Every error in a file is reported at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .model import ALPHA_STAR, DysonError

KINDS = (
    "interface", "repulsion", "decoupling", "ggap", "continuity",
    "bridge-roundtrip", "bridge-entropy", "exact-check",
)

_COMMON = {
    "kind": None,
    "alpha": 1.5,
    "beta": 2.0,
    "nn_boost": 0.0,
    "field_h": 0.0,
    "seed": 0,
    "out": "runs",
}

# Per-kind keys and their documented defaults. ``None`` means "derived".
DEFAULTS: dict[str, dict] = {
    "interface": {"L": [32, 64, 128], "sweeps": 200_000, "burnin": None, "chains": 1, "R": 100_000,
                  "method": "metropolis"},
    "repulsion": {"L": 64, "N": None, "R": None, "frozen_spin": -1, "sweeps": 100_000, "burnin": None,
                  "method": "metropolis"},
    "decoupling": {"L": 64, "L0": 8, "R": None, "sweeps": 100_000, "burnin": None, "method": "metropolis"},
    "ggap": {"L0": [8, 16, 32, 64], "R_future": None, "sweeps": 100_000, "burnin": None, "m": None},
    "continuity": {"m": [1, 2, 4, 8, 16, 32, 64, 128], "L0": None, "R": 100_000},
    "bridge-roundtrip": {"chains": 100, "k": [2, 3, 4]},
    "bridge-entropy": {"p_stay": 0.9, "n": [4, 64]},
    "exact-check": {"window": [0, 7], "bc": "plus", "sweeps": 100_000, "burnin": None, "R": 1000,
                    "method": "heatbath"},
}

_INT_KEYS = {"seed", "sweeps", "burnin", "chains", "N", "R", "R_future", "frozen_spin"}
_REAL_KEYS = {"alpha", "beta", "nn_boost", "field_h", "p_stay"}
_INT_LIST_KEYS = {"L", "L0", "m", "k", "window", "n"}
_WORD_KEYS = {"kind", "out", "method", "bc"}
_SCALAR_INT_LIST = {"repulsion": {"L"}, "decoupling": {"L", "L0"}, "ggap": set(), "continuity": {"L0"}}
BC_KINDS = ("plus", "minus", "free", "dobrushin")


class ConfigError(DysonError, ValueError):
    """One or more problems in a config file; ``errors`` lists all of them."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class ExperimentConfig:
    kind: str
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        vals = dict(self.values)
        vals.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig(self.kind, vals)

    def to_json(self) -> dict:
        return {"kind": self.kind, **{k: self.values[k] for k in sorted(self.values)}}


def _parse_scalar(raw: str):
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def _convert(key: str, raw: str, lineno: int, errors: list):
    if key in _WORD_KEYS:
        return raw
    parts = [p.strip() for p in raw.split(",")]
    if any(p == "" for p in parts):
        errors.append(f"line {lineno}: empty list element in {key!r}")
        return None
    vals = [_parse_scalar(p) for p in parts]
    if key in _INT_LIST_KEYS:
        if not all(isinstance(v, int) for v in vals):
            errors.append(f"line {lineno}: {key!r} must be an integer or list of integers, got {raw!r}")
            return None
        return vals
    if len(vals) != 1:
        errors.append(f"line {lineno}: {key!r} takes a single value, got {raw!r}")
        return None
    v = vals[0]
    if key in _INT_KEYS:
        if not isinstance(v, int):
            errors.append(f"line {lineno}: {key!r} must be an integer, got {raw!r}")
            return None
        return v
    if key in _REAL_KEYS:
        if isinstance(v, str) or not math.isfinite(v):
            errors.append(f"line {lineno}: {key!r} must be a finite real, got {raw!r}")
            return None
        return float(v)
    return v


def _tokenize(text: str, errors: list) -> dict[str, tuple[str, int]]:
    seen: dict[str, list[int]] = {}
    raw: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            errors.append(f"line {lineno}: expected 'key = value', got {body!r}")
            continue
        key, value = (s.strip() for s in body.split("=", 1))
        if not key or not value:
            errors.append(f"line {lineno}: expected 'key = value', got {body!r}")
            continue
        seen.setdefault(key, []).append(lineno)
        raw.setdefault(key, (value, lineno))
    for key, lines in seen.items():
        if len(lines) > 1:
            errors.append(f"duplicate key {key!r} on lines {', '.join(map(str, lines))}")
    return raw


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a config; raises :class:`ConfigError` listing every problem."""
    errors: list[str] = []
    raw = _tokenize(text, errors)
    kind = raw.get("kind", (None, 0))[0]
    if kind is None:
        errors.append("missing required key 'kind'")
        raise ConfigError(errors)
    if kind not in KINDS:
        errors.append(f"line {raw['kind'][1]}: unknown experiment kind {kind!r}; expected one of {', '.join(KINDS)}")
        raise ConfigError(errors)

    allowed = {**_COMMON, **DEFAULTS[kind]}
    values = {k: v for k, v in allowed.items() if k != "kind"}
    for key, (value, lineno) in raw.items():
        if key == "kind":
            continue
        if key not in allowed:
            errors.append(f"line {lineno}: unknown key {key!r} for kind {kind!r}")
            continue
        v = _convert(key, value, lineno, errors)
        if v is not None:
            values[key] = v
    for key in _SCALAR_INT_LIST.get(kind, ()):
        v = values.get(key)
        if isinstance(v, list):
            if len(v) != 1:
                errors.append(f"{key!r} takes a single integer for kind {kind!r}")
            else:
                values[key] = v[0]
    errors.extend(_validate(kind, values))
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(kind, values)


def _validate(kind: str, v: dict) -> list[str]:
    e = []
    if v["alpha"] <= 1:
        e.append(f"alpha = {v['alpha']} violates the UAS rule: absolute summability of J(n) = n^-alpha needs alpha > 1")
    elif kind in ("interface", "repulsion", "decoupling", "ggap") and not ALPHA_STAR < v["alpha"] < 2:
        e.append(f"alpha = {v['alpha']} outside ({ALPHA_STAR:.5f}, 2) required by the {kind} experiment")
    if v["beta"] < 0:
        e.append("beta must be >= 0")
    if v["nn_boost"] < 0:
        e.append("nn_boost must be >= 0 (ferromagnetic couplings)")
    if "sweeps" in v:
        burnin = v["burnin"] if v.get("burnin") is not None else v["sweeps"] // 10
        if not v["sweeps"] > burnin >= 0:
            e.append(f"need sweeps > burnin >= 0, got sweeps={v['sweeps']}, burnin={burnin}")
    if v.get("method") is not None and v["method"] not in ("metropolis", "heatbath"):
        e.append(f"unknown method {v['method']!r}; expected metropolis or heatbath")
    if "chains" in v and v["chains"] < 1:
        e.append("chains must be >= 1")
    for key in ("R", "R_future", "N"):
        if v.get(key) is not None and v[key] < (1 if key != "R_future" else 0):
            e.append(f"{key} must be positive")
    if kind == "interface" and any(L < 1 for L in v["L"]):
        e.append("every L must be >= 1")
    if kind == "repulsion":
        if v["frozen_spin"] not in (-1, 1):
            e.append("frozen_spin must be -1 or 1")
        if isinstance(v["L"], int) and v["L"] < 1:
            e.append("L must be >= 1")
        if v["N"] is not None and isinstance(v["L"], int) and v["L"] * v["N"] ** (1 - v["alpha"]) > 0.1:
            e.append("N violates the smallness rule L * N^(1 - alpha) <= 0.1")
    if kind == "decoupling" and isinstance(v["L"], int) and isinstance(v["L0"], int):
        if not 0 <= v["L0"] < v["L"]:
            e.append("decoupling needs 0 <= L0 < L")
    if kind == "ggap":
        if any(x < 0 for x in v["L0"]):
            e.append("every L0 must be >= 0")
        if v["L0"] != sorted(set(v["L0"])):
            e.append("L0 list must be strictly increasing")
    if kind == "continuity" and any(m < 1 for m in v["m"]):
        e.append("every m must be >= 1")
    if kind == "bridge-roundtrip" and any(not 2 <= k <= 8 for k in v["k"]):
        e.append("state counts k must lie in [2, 8]")
    if kind == "bridge-entropy":
        if not 0 < v["p_stay"] < 1:
            e.append("p_stay must lie strictly between 0 and 1")
        if len(v["n"]) != 2 or not 1 <= v["n"][0] < v["n"][1]:
            e.append("n must be 'n_min, n_max' with 1 <= n_min < n_max")
    if kind == "exact-check":
        if len(v["window"]) != 2 or v["window"][0] > v["window"][1]:
            e.append("window must be 'lo, hi' with lo <= hi")
        elif v["window"][1] - v["window"][0] + 1 > 16:
            e.append("exact-check windows are limited to 16 sites")
        if v["bc"] not in BC_KINDS:
            e.append(f"unknown boundary rule {v['bc']!r}; expected one of {', '.join(BC_KINDS)}")
    return e


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
