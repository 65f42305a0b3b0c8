"""Flat ``key = value`` configuration with typed defaults and validation."""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

DEFAULTS: dict[str, Any] = {
    "vel.radius": 6.0,
    "vel.n": 16,
    "vel.scheme": "uniform",
    "space.L": "auto",
    "space.n": 200,
    "space.grade": 1.15,
    "space.min_cell": 1e-4,
    "flow.u": 0.02,
    "weight.theta": 0.1,
    "weight.theta_tilde": 0.0125,
    "kernel.constants": "physical",
    "kernel.conservative": True,
    "gamma.method": "auto",
    "gamma.samples": 512,
    "gamma.product_max_n": 10,
    "pen.gamma": 1e-3,
    "pen.gamma0": 5e-4,
    "pen.alpha": "auto",
    "pen.beta": "auto",
    "solver.linear": "modal",
    "solver.symmetry": "axial",
    "solver.tol_lin": 1e-12,
    "solver.tol_nl": 1e-14,
    "solver.max_iter": 60,
    "solver.si_max_iter": 5000,
    "bc.eps": 1e-3,
    "bc.bump_centers": "0.5,1.5",
    "bc.bump_width": 0.5,
    "eigen.u_min": 1e-3,
    "eigen.delta_u": 1e-3,
    "eigen.r": 0.05,
    "eigen.u_list": "0.01,0.02,0.04",
    "tune.tol": 1e-12,
    "tune.max_iter": 8,
    "diag.t": "auto",
    "diag.mask": 0.05,
    "diag.p_list": "1,1.5,1.9",
    "diag.delta_list": "1e-4,1e-5,1e-6",
    "diag.probe_min_offset": 1e-6,
    "diag.probe_per_decade": 6,
    "diag.probe_rho": 12,
    "nln.samples": 200,
    "nln.C": "auto",
    "seed": 20240601,
}

_SECTION = "artifact"


class ConfigError(ValueError):
    pass


def _coerce(key: str, raw: str) -> Any:
    default = DEFAULTS.get(key)
    raw = raw.strip()
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from exc
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from exc
    if default == "auto":
        if raw.lower() == "auto":
            return "auto"
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected a number or 'auto', got {raw!r}") from exc
    return raw


def floats(text: str) -> list[float]:
    return [float(t) for t in str(text).split(",") if t.strip()]


@dataclass(frozen=True)
class Config:
    values: Mapping[str, Any]

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def get(self, key: str, default: Any = None) -> Any:
        return self.values.get(key, default)

    def with_overrides(self, **kw: Any) -> "Config":
        vals = dict(self.values)
        for k, v in kw.items():
            vals[k.replace("__", ".")] = v
        return validate(vals)

    def replace(self, mapping: Mapping[str, Any]) -> "Config":
        vals = dict(self.values)
        vals.update(mapping)
        return validate(vals)

    def digest(self, keys: list[str] | None = None) -> str:
        """SHA-256 over the canonical JSON of the selected keys (all if None)."""
        sel = {k: self.values[k] for k in sorted(keys or self.values)}
        blob = json.dumps(sel, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()

    def as_dict(self) -> dict[str, Any]:
        return dict(sorted(self.values.items()))

    @property
    def gamma(self) -> float:
        return float(self.values["pen.gamma"])

    @property
    def gamma0(self) -> float:
        return float(self.values["pen.gamma0"])

    @property
    def L(self) -> float:
        L = self.values["space.L"]
        return 30.0 / self.gamma0 if L == "auto" else float(L)

    @property
    def alpha_beta(self) -> tuple[float, float]:
        a, b = self.values["pen.alpha"], self.values["pen.beta"]
        g2 = 2.0 * self.gamma
        return (g2 if a == "auto" else float(a), g2 if b == "auto" else float(b))


def validate(values: Mapping[str, Any]) -> Config:
    unknown = sorted(set(values) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    v = dict(DEFAULTS)
    v.update(values)
    n = int(v["vel.n"])
    if n % 2:
        raise ConfigError(
            f"vel.n = {n} is odd: a node would sit on the grazing set xi1 + u = 0 as u -> 0; use an even count"
        )
    if n < 4 or float(v["vel.radius"]) <= 0:
        raise ConfigError("vel.n must be >= 4 and vel.radius positive")
    if v["vel.scheme"] not in ("uniform", "gauss"):
        raise ConfigError(f"vel.scheme must be 'uniform' or 'gauss', got {v['vel.scheme']!r}")
    th, tt = float(v["weight.theta"]), float(v["weight.theta_tilde"])
    if not 0.0 <= th < 0.25:
        raise ConfigError(f"weight.theta = {th} violates 0 <= theta < 1/4")
    if not 0.0 <= tt <= th / 8 + 1e-15:
        raise ConfigError(f"weight.theta_tilde = {tt} violates 0 <= theta_tilde <= theta/8")
    if not 0.0 < float(v["pen.gamma0"]) < float(v["pen.gamma"]):
        raise ConfigError("need 0 < pen.gamma0 < pen.gamma")
    if v["kernel.constants"] not in ("physical", "normalized"):
        raise ConfigError("kernel.constants must be 'physical' or 'normalized'")
    if v["solver.linear"] not in ("modal", "source"):
        raise ConfigError("solver.linear must be 'modal' or 'source'")
    if v["solver.symmetry"] not in ("none", "R", "axial"):
        raise ConfigError("solver.symmetry must be 'none', 'R' or 'axial'")
    if v["gamma.method"] not in ("auto", "product", "mc"):
        raise ConfigError("gamma.method must be 'auto', 'product' or 'mc'")
    if abs(float(v["flow.u"])) >= float(v["eigen.r"]) or float(v["flow.u"]) == 0.0:
        raise ConfigError("flow.u must satisfy 0 < |u| < eigen.r")
    return Config(v)


def load_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> Config:
    vals: dict[str, Any] = {}
    if path is not None:
        text = Path(path).read_text()
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
        parser.optionxform = str  # keep key case
        parser.read_string(f"[{_SECTION}]\n" + text)
        for key, raw in parser.items(_SECTION):
            if key not in DEFAULTS:
                raise ConfigError(f"unknown configuration key {key!r} in {path}")
            vals[key] = _coerce(key, raw)
    for key, raw in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown configuration key {key!r}")
        vals[key] = _coerce(key, raw) if isinstance(raw, str) else raw
    return validate(vals)


def dump_config(cfg: Config) -> str:
    lines = []
    for k, val in cfg.as_dict().items():
        if isinstance(val, bool):
            val = "true" if val else "false"
        lines.append(f"{k} = {val}")
    return "\n".join(lines) + "\n"
