"""Run configurations: a JSON document naming an experiment and its parameters.

    {"experiment": "gap-sweep", "seed": 0, "output_dir": "out/gap",
     "parameters": {"m_values": [0.4], "half_widths": [0.5, 1, 2, 4]}}

Missing parameters take the defaults below; unknown keys are rejected, and
every combination the numerical modules would refuse is caught here, before
any computation starts.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .errors import ConfigError, ConfigParseError

EXPERIMENTS = ("forms", "gap-sweep", "bn-minimize", "bubble-curve", "cylinder-check", "calibrate", "critical-scan")
VARIANT_NAMES = ("hardy_perturbation", "spectral_perturbation")
TOP_LEVEL = ("experiment", "parameters", "seed", "output_dir")

# kinds: int, float, floats (list), str; opt_* also accept null
_COMMON_BN = {
    "n": ("int", 1),
    "m": ("float", 0.4),
    "s": ("float", 0.3),
    "variant": ("str", "hardy_perturbation"),
    "lambda": ("opt_float", None),
    "lambda_frac": ("opt_float", None),
    "J": ("int", 256),
    "points": ("opt_int", None),
    "half_width": ("float", 1.0),
}

SCHEMAS = {
    "forms": {
        "n": ("int", 1),
        "half_width": ("float", 1.0),
        "points": ("int", 512),
        "J": ("int", 256),
        "m_values": ("floats", [0.25, 0.4, 0.75, 1.0, 1.5, 2.0]),
        "eps": ("float", 0.5),
        "delta": ("float", 0.25),
        "bubble_m": ("float", 0.4),
        "pad_factor": ("int", 8),
    },
    "gap-sweep": {
        "n": ("int", 1),
        "m_values": ("floats", [0.4]),
        "eps": ("float", 0.1),
        "delta": ("float", 0.125),
        "bubble_m": ("float", 0.4),
        "r": ("opt_float", None),
        "half_widths": ("floats", [0.5, 1.0, 2.0, 4.0]),
        "points": ("int", 512),
        "pad_factor": ("int", 8),
    },
    "bn-minimize": {
        **_COMMON_BN,
        "restarts": ("int", 3),
        "max_iter": ("int", 100000),
        "tol_residual": ("float", 1e-6),
    },
    "bubble-curve": {
        **_COMMON_BN,
        "s": ("float", 0.35),
        "eps_grid": ("floats", [0.1, 0.03, 0.01, 0.003, 0.001]),
        "delta": ("opt_float", None),
    },
    "cylinder-check": {
        "sigma": ("float", 0.4),
        "dual_m": ("float", 1.5),
        "points": ("int", 1024),
        "M": ("int", 96),
        "eps": ("float", 0.5),
        "delta": ("float", 0.25),
        "bubble_m": ("float", 0.4),
        "pad_factor": ("int", 8),
    },
    "calibrate": {
        "sigma": ("float", 0.4),
        "points": ("int", 1024),
        "M": ("int", 96),
        "pad_factor": ("int", 8),
        "max_cv": ("float", 0.01),
    },
    "critical-scan": {
        "n": ("int", 1),
        "m_grid": ("floats", [0.3, 0.4]),
        "s_grid": ("floats", [0.1, 0.2, 0.3]),
        "lambda_frac": ("float", 0.1),
        "variant": ("str", "hardy_perturbation"),
        "J": ("int", 128),
        "restarts": ("int", 3),
        "max_iter": ("int", 100000),
    },
}


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    parameters: dict = field(default_factory=dict)
    seed: int = 0
    output_dir: str = "out"

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "parameters": dict(self.parameters), "seed": self.seed,
                "output_dir": self.output_dir}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def replace(self, **changes) -> "RunConfig":
        d = self.to_dict()
        d.update(changes)
        return build_config(d)

    def __getitem__(self, key: str):
        return self.parameters[key]


def parse_config(text: str, experiment: Optional[str] = None) -> RunConfig:
    """Parse and validate a JSON run configuration.

    experiment, when given, fills a missing "experiment" field and must agree
    with a present one.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"malformed config at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if experiment is not None and isinstance(doc, dict):
        if doc.setdefault("experiment", experiment) != experiment:
            raise ConfigError(f"config is for {doc['experiment']!r}, not {experiment!r}")
    return build_config(doc)


def load_config(path, experiment: Optional[str] = None) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read(), experiment)


def build_config(doc: Any) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(doc) - set(TOP_LEVEL))
    if unknown:
        raise ConfigError(f"unknown top-level keys: {unknown}")
    if "experiment" not in doc:
        raise ConfigError("missing required field 'experiment'")
    exp = doc["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {exp!r}")
    seed = doc.get("seed", 0)
    if not _is_int(seed) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    out = doc.get("output_dir", "out")
    if not isinstance(out, str) or not out:
        raise ConfigError("output_dir must be a nonempty string")
    raw = doc.get("parameters", {})
    if not isinstance(raw, dict):
        raise ConfigError("parameters must be a JSON object")
    params = _apply_schema(exp, raw)
    VALIDATORS[exp](params)
    return RunConfig(exp, params, int(seed), out)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return (isinstance(v, (int, float)) and not isinstance(v, bool)) and math.isfinite(v)


def _coerce(key: str, kind: str, v):
    if kind == "int" or (kind == "opt_int" and v is not None):
        if not _is_int(v):
            raise ConfigError(f"{key} must be an integer")
        return int(v)
    if kind == "float" or (kind == "opt_float" and v is not None):
        if not _is_num(v):
            raise ConfigError(f"{key} must be a finite number")
        return float(v)
    if kind == "floats":
        if not isinstance(v, list) or not v or not all(_is_num(x) for x in v):
            raise ConfigError(f"{key} must be a nonempty list of finite numbers")
        return [float(x) for x in v]
    if kind == "str":
        if not isinstance(v, str):
            raise ConfigError(f"{key} must be a string")
        return v
    return None


def _apply_schema(exp: str, raw: dict) -> dict:
    schema = SCHEMAS[exp]
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown parameters for {exp}: {unknown}")
    out = {}
    for key, (kind, default) in schema.items():
        v = raw.get(key)
        out[key] = _coerce(key, kind, v) if key in raw else (list(default) if isinstance(default, list) else default)
    return out


# -- validation ----------------------------------------------------------------------------------


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _grid(p: dict, key: str = "points", lo: int = 16, hi: int = 1 << 22) -> None:
    N = p[key]
    _require(lo <= N <= hi and N % 2 == 0, f"{key} must be even and in [{lo}, {hi}]")


def _pad(p: dict) -> None:
    _require(1 <= p["pad_factor"] <= 64, "pad_factor must lie in [1, 64]")


def _bubble(p: dict, h: float) -> None:
    if "bubble_m" in p:
        n = p.get("n", 1)
        _require(0 < p["bubble_m"] < n / 2, "bubble profile needs 0 < bubble_m < n/2")
    _require(p["eps"] > 0, "eps > 0 violated")
    _require(p["delta"] > 0, "delta > 0 violated")
    _require(2 * p["delta"] < h, "bubble support 2*delta must lie inside the domain (2*delta < half_width)")


def _validate_forms(p: dict) -> None:
    n = p["n"]
    _require(n in (1, 2), "n must be 1 or 2")
    _require(p["half_width"] > 0, "half_width > 0 violated")
    _grid(p, hi=1 << 16 if n == 1 else 1024)
    _pad(p)
    _require(1 <= p["J"] <= p["points"] // 2, "J <= points/2 violated (Nyquist limit)")
    for m in p["m_values"]:
        _require(0 < m < 3 and (m != int(m) or m in (1, 2)), f"m must lie in (0, 3), integers only 1 or 2; got {m}")
    _bubble(p, p["half_width"])


def _validate_gap(p: dict) -> None:
    n = p["n"]
    _require(n in (1, 2), "n must be 1 or 2")
    _grid(p, hi=1 << 15 if n == 1 else 512)
    _pad(p)
    for m in p["m_values"]:
        _require(0 < m < 3, f"m must lie in (0, 3), got {m}")
        _require(m != int(m), f"gap experiments need non-integer m, got {m}")
    _bubble(p, min(p["half_widths"]))
    r = 2 * p["delta"] if p["r"] is None else p["r"]
    _require(r >= 2 * p["delta"] * (1 - 1e-12), "r must cover the bubble support (r >= 2*delta)")
    hw = p["half_widths"]
    _require(len(hw) >= 4, "the rate fit needs at least 4 half widths")
    _require(len(set(hw)) == len(hw), "half widths must be distinct")
    _require(all(h > r for h in hw), "every half width must exceed r (r < R violated)")
    base = min(hw)
    ratio = [h / base for h in hw]
    _require(all(abs(t - round(t)) < 1e-9 for t in ratio),
             "half widths must be integer multiples of the smallest (nested grids)")
    total = p["points"] * max(ratio)
    _require(total ** n <= (1 << 22), "largest domain grid exceeds 2^22 points")


def _validate_orders(p: dict) -> None:
    n, m, s = p["n"], p["m"], p["s"]
    _require(n in (1, 2), "n must be 1 or 2")
    _require(0 <= s, "s >= 0 violated")
    _require(s < m, f"s < m violated (s={s}, m={m})")
    _require(m < n / 2, f"m < n/2 violated (m={m}, n={n})")
    if p["variant"] == "hardy_perturbation":
        _require(2 * s < n, "Hardy weight needs 2s < n")


def _validate_bn_common(p: dict) -> None:
    _require(p["variant"] in VARIANT_NAMES, f"variant must be one of {VARIANT_NAMES}")
    _validate_orders(p)
    _require(p["half_width"] > 0, "half_width > 0 violated")
    if p["lambda"] is not None and p["lambda_frac"] is not None:
        raise ConfigError("give at most one of lambda and lambda_frac")
    if p["lambda"] is None and p["lambda_frac"] is None:
        p["lambda_frac"] = 0.1
    if p["lambda_frac"] is not None:
        _require(0 <= p["lambda_frac"] < 1, "lambda_frac must lie in [0, 1)")
    J = p["J"]
    hi = 4096 if p["n"] == 1 else 128
    _require(4 <= J <= hi, f"J must lie in [4, {hi}]")
    if p["points"] is not None:
        _require(p["points"] % 2 == 0 and J <= p["points"] // 2, "J <= points/2 violated (Nyquist limit)")
        _require(p["points"] ** p["n"] <= (1 << 22), "grid exceeds 2^22 points")


def _validate_bn(p: dict) -> None:
    _validate_bn_common(p)
    _require(p["restarts"] >= 3, "restarts >= 3 violated")
    _require(p["max_iter"] >= 1, "max_iter >= 1 violated")
    _require(p["tol_residual"] > 0, "tol_residual > 0 violated")
    if p["lambda"] is not None:
        _require(p["lambda"] >= 0, "lambda >= 0 violated")


def _validate_curve(p: dict) -> None:
    _validate_bn_common(p)
    _require(all(e > 0 for e in p["eps_grid"]), "eps > 0 violated")
    if p["delta"] is not None:
        _require(0 < 2 * p["delta"] < p["half_width"], "bubble support 2*delta must lie inside the domain")


def _validate_sigma(p: dict) -> None:
    _require(0 < p["sigma"] < 1, "sigma must lie in (0, 1)")
    _grid(p, lo=64, hi=8192)
    _require(8 <= p["M"] <= 1024, "M must lie in [8, 1024]")
    _pad(p)


def _validate_cylinder(p: dict) -> None:
    _validate_sigma(p)
    _require(1 < p["dual_m"] < 2, "dual identity needs 1 < m < 2")
    _bubble(p, 1.0)


def _validate_calibrate(p: dict) -> None:
    _validate_sigma(p)
    _require(p["max_cv"] > 0, "max_cv > 0 violated")


def _validate_scan(p: dict) -> None:
    n = p["n"]
    _require(n in (1, 2), "n must be 1 or 2")
    _require(p["variant"] in VARIANT_NAMES, f"variant must be one of {VARIANT_NAMES}")
    _require(0 < p["lambda_frac"] < 1, "lambda_frac must lie in (0, 1)")
    _require(all(0 < m < n / 2 for m in p["m_grid"]), "every m must satisfy 0 < m < n/2")
    _require(all(s >= 0 for s in p["s_grid"]), "every s must satisfy s >= 0")
    hi = 4096 if n == 1 else 128
    _require(4 <= p["J"] <= hi, f"J must lie in [4, {hi}]")
    _require(p["restarts"] >= 3, "restarts >= 3 violated")
    _require(p["max_iter"] >= 1, "max_iter >= 1 violated")


VALIDATORS: dict[str, Callable[[dict], None]] = {
    "forms": _validate_forms,
    "gap-sweep": _validate_gap,
    "bn-minimize": _validate_bn,
    "bubble-curve": _validate_curve,
    "cylinder-check": _validate_cylinder,
    "calibrate": _validate_calibrate,
    "critical-scan": _validate_scan,
}


def default_config(experiment: str, output_dir: Optional[str] = None) -> RunConfig:
    doc = {"experiment": experiment}
    if output_dir is not None:
        doc["output_dir"] = output_dir
    return build_config(doc)
