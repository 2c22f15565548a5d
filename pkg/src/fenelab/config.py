"""Scenario configuration: TOML loading, overrides and validation with field paths."""
from __future__ import annotations

import copy
import sys
from dataclasses import dataclass, field

import numpy as np

from fenelab.errors import ConfigError
from fenelab.weights import KappaMatrix, ModelParams

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

KINDS = ("fp_single", "mass_flux_study", "decay_study", "nonuniqueness_demo", "probability_criterion",
         "embedding_suite", "coercivity_suite", "stress_bound_suite", "sign_lemma_suite", "coupled_demo",
         "contraction_study")

Q_PRESETS = ("zero", "constant", "angular", "equilibrium_ratio", "series")
F0_KINDS = ("equilibrium", "perturbed", "custom")
KAPPA_KINDS = ("zero", "shear", "extensional", "components")

# kinds that integrate in time and therefore need a [time] block
TIMED = {"fp_single", "mass_flux_study", "decay_study", "nonuniqueness_demo", "probability_criterion",
         "coercivity_suite", "coupled_demo", "contraction_study"}

_RES_DEFAULTS = dict(n_cells=48, n_angular=16, grading=2.0, n_x=32)


@dataclass
class ScenarioConfig:
    kind: str
    params: ModelParams
    resolution: dict
    time: dict
    q: dict
    f0: dict
    kappa: dict
    options: dict = field(default_factory=dict)
    output_dir: str = "out"
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def T(self) -> float:
        return float(self.time["T"])

    @property
    def dt(self) -> float:
        return float(self.time["dt"])

    def option(self, key, default=None):
        return self.options.get(key, default)


def load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"invalid TOML ({exc})") from None


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(raw: dict, overrides) -> dict:
    """``key.sub=value`` assignments; values are parsed as TOML literals when possible."""
    out = copy.deepcopy(raw)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError("override", f"expected key=value, got {item!r}")
        key, val = item.split("=", 1)
        parts = [p for p in key.strip().split(".") if p]
        if not parts:
            raise ConfigError("override", f"empty key in {item!r}")
        node = out
        for p in parts[:-1]:
            nxt = node.setdefault(p, {})
            if not isinstance(nxt, dict):
                raise ConfigError(".".join(parts), "cannot descend into a non-table value")
            node = nxt
        node[parts[-1]] = _parse_value(val.strip())
    return out


def _num(tbl, key, path, *, positive=False, integer=False, default=None, lo=None):
    if key not in tbl:
        if default is None:
            raise ConfigError(f"{path}.{key}", "required field is missing")
        return default
    v = tbl[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}", f"must be a number, got {v!r}")
    if not np.isfinite(v):
        raise ConfigError(f"{path}.{key}", "must be finite")
    if integer and int(v) != v:
        raise ConfigError(f"{path}.{key}", f"must be an integer, got {v!r}")
    if positive and v <= 0:
        raise ConfigError(f"{path}.{key}", f"must be positive, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(f"{path}.{key}", f"must be >= {lo}, got {v!r}")
    return int(v) if integer else float(v)


def _table(raw, key, required=False):
    v = raw.get(key, None)
    if v is None:
        if required:
            raise ConfigError(key, "required table is missing")
        return {}
    if not isinstance(v, dict):
        raise ConfigError(key, "must be a table")
    return v


def _params(raw) -> ModelParams:
    tbl = _table(raw, "params", required=True)
    b = _num(tbl, "b", "params")
    n_conf = _num(tbl, "n_conf", "params", integer=True, default=2)
    theta = tbl.get("theta")
    if theta is not None:
        theta = _num(tbl, "theta", "params")
    try:
        return ModelParams(b=b, n_conf=n_conf, theta=theta)
    except ValueError as exc:
        msg = str(exc)
        name = msg.split()[0] if msg.split() else "b"
        name = name if name in ("b", "n_conf", "theta") else "b"
        raise ConfigError(f"params.{name}", msg) from None


def _resolution(raw) -> dict:
    tbl = dict(_table(raw, "resolution"))
    out = dict(_RES_DEFAULTS)
    out["n_cells"] = _num(tbl, "n_cells", "resolution", positive=True, integer=True, default=out["n_cells"], lo=2)
    out["n_angular"] = _num(tbl, "n_angular", "resolution", positive=True, integer=True, default=out["n_angular"])
    if out["n_angular"] % 2:
        raise ConfigError("resolution.n_angular", "must be even")
    out["grading"] = _num(tbl, "grading", "resolution", positive=True, default=out["grading"])
    out["n_x"] = _num(tbl, "n_x", "resolution", positive=True, integer=True, default=out["n_x"], lo=4)
    levels = tbl.get("levels")
    if levels is not None:
        if not isinstance(levels, list) or not levels or not all(isinstance(v, int) and v >= 2 for v in levels):
            raise ConfigError("resolution.levels", "must be a non-empty list of integers >= 2")
        out["levels"] = [int(v) for v in levels]
    for k, v in tbl.items():
        out.setdefault(k, v)
    return out


def _time(raw, kind) -> dict:
    tbl = _table(raw, "time", required=kind in TIMED)
    if not tbl:
        return {}
    T = _num(tbl, "T", "time", positive=True)
    dt = _num(tbl, "dt", "time", positive=True)
    n = T / dt
    if abs(n - round(n)) > 1e-9 * max(n, 1.0):
        raise ConfigError("time.dt", f"T={T} is not a multiple of dt={dt}")
    return {"T": T, "dt": dt}


def _q(raw, params) -> dict:
    tbl = dict(_table(raw, "q")) or {"preset": "zero"}
    preset = tbl.get("preset", "series" if "coeffs" in tbl else "zero")
    if preset not in Q_PRESETS:
        raise ConfigError("q.preset", f"unknown preset {preset!r}; expected one of {', '.join(Q_PRESETS)}")
    out = {"preset": preset}
    if preset in ("constant", "angular"):
        out["c"] = _num(tbl, "c", "q", default=1.0)
    if preset == "angular":
        out["j"] = _num(tbl, "j", "q", integer=True, default=1, lo=0)
    if preset == "series":
        coeffs = tbl.get("coeffs")
        if not isinstance(coeffs, dict) or not coeffs:
            raise ConfigError("q.coeffs", "series needs a table of mode -> coefficient")
        parsed = {}
        for k, v in coeffs.items():
            try:
                j = int(k)
            except ValueError:
                raise ConfigError(f"q.coeffs.{k}", "mode keys must be integers") from None
            parsed[j] = _num(coeffs, k, "q.coeffs")
        out["coeffs"] = parsed
    if preset == "equilibrium_ratio" and params.b >= 2:
        raise ConfigError("q.preset", "equilibrium_ratio is defined for b < 2")
    return out


def _f0(raw) -> dict:
    tbl = dict(_table(raw, "f0")) or {"kind": "equilibrium"}
    kind = tbl.get("kind", "equilibrium")
    if kind not in F0_KINDS:
        raise ConfigError("f0.kind", f"unknown initial datum {kind!r}; expected one of {', '.join(F0_KINDS)}")
    out = {"kind": kind}
    if kind == "perturbed":
        out["amplitude"] = _num(tbl, "amplitude", "f0", default=0.3)
        out["mode"] = _num(tbl, "mode", "f0", integer=True, default=2, lo=0)
    if kind == "custom":
        coeffs = tbl.get("coeffs")
        if not isinstance(coeffs, list) or not coeffs:
            raise ConfigError("f0.coeffs", "custom data needs a non-empty coefficient list")
        out["coeffs"] = [float(c) for c in coeffs]
    return out


def _kappa(raw) -> dict:
    tbl = dict(_table(raw, "kappa")) or {"kind": "zero"}
    kind = tbl.get("kind", "zero")
    if kind not in KAPPA_KINDS:
        raise ConfigError("kappa.kind", f"unknown velocity gradient {kind!r}")
    out = {"kind": kind}
    if kind in ("shear", "extensional"):
        out["rate"] = _num(tbl, "rate", "kappa", default=1.0)
    if kind == "components":
        comps = tbl.get("components")
        if not isinstance(comps, list) or len(comps) != 3:
            raise ConfigError("kappa.components", "expected [k11, k12, k21]")
        out["components"] = [float(c) for c in comps]
    return out


def kappa_from(spec: dict) -> KappaMatrix:
    kind = spec.get("kind", "zero")
    if kind == "zero":
        return KappaMatrix.zero()
    if kind == "shear":
        return KappaMatrix.shear(spec.get("rate", 1.0))
    if kind == "extensional":
        return KappaMatrix.extensional(spec.get("rate", 1.0))
    return KappaMatrix.from_components(*spec["components"])


def validate(raw: dict) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a table")
    kind = raw.get("kind")
    if kind is None:
        raise ConfigError("kind", "required field is missing")
    if kind not in KINDS:
        raise ConfigError("kind", f"unknown scenario kind {kind!r}")
    params = _params(raw)
    res = _resolution(raw)
    tm = _time(raw, kind)
    q = _q(raw, params)
    f0 = _f0(raw)
    kap = _kappa(raw)
    options = dict(_table(raw, "options"))
    out_dir = raw.get("output_dir", "out")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError("output_dir", "must be a non-empty string")
    if kind in ("coupled_demo", "contraction_study") and params.b < 2:
        raise ConfigError("params.b", "the coupled scenarios need b >= 2 (per-node mass functional)")
    if kind == "sign_lemma_suite" and params.theta is None:
        raise ConfigError("params.theta", "the sign functional suite needs theta (and b >= 6)")
    if kind == "mass_flux_study" and params.b < 2:
        raise ConfigError("params.b", "no flux law is checked for b < 2")
    return ScenarioConfig(kind, params, res, tm, q, f0, kap, options, out_dir, raw)


def load_config(path, overrides=None) -> ScenarioConfig:
    raw = load_toml(path)
    return validate(apply_overrides(raw, overrides))


def config_from_dict(raw: dict, overrides=None) -> ScenarioConfig:
    return validate(apply_overrides(raw, overrides))
