"""Run configuration stored as an INI file with flat sections.

``[params]`` holds the model constants under their plain names
(mu, sigma, gamma, eta, beta, theta, m0, rho, T, x0, A; ``beta = inf``
forbids a terminal block trade). ``[run]`` holds the reference strategy and
numerical settings. Floats are written with ``repr`` so a file round-trips
exactly.
"""
from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field, fields, replace

from .errors import DomainError
from .params import PARAM_KEYS, ModelParams, preset

RUN_KEYS = {
    "mode": str,
    "ref": str,
    "policy": str,
    "n_grid": int,
    "n_points": int,
    "n_paths": int,
    "n_steps": int,
    "seed": int,
    "S0": float,
    "approx_n": int,
    "workers": int,
    "outdir": str,
}


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams = field(default_factory=ModelParams)
    mode: str = "auto"  # "auto", "risk-averse" or "risk-neutral"
    ref: str = "is"
    policy: str = "optimal"
    n_grid: int = 2001
    n_points: int = 1001
    n_paths: int = 100_000
    n_steps: int = 1000
    seed: int = 0
    S0: float = 100.0
    approx_n: int = 8
    workers: int = 0  # 0 means one per CPU
    outdir: str = "out"

    def with_(self, **kw) -> "RunConfig":
        pkw = {k: kw.pop(k) for k in list(kw) if k in PARAM_KEYS}
        cfg = replace(self, **kw) if kw else self
        if pkw:
            cfg = replace(cfg, params=cfg.params.with_(**pkw))
        return cfg

    def to_ini(self) -> str:
        cp = _parser()
        cp["params"] = {k: _fmt(getattr(self.params, k)) for k in PARAM_KEYS}
        cp["run"] = {k: _fmt(getattr(self, k)) for k in RUN_KEYS}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_ini())


def _parser():
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep T and A case-sensitive
    return cp


def _fmt(v) -> str:
    if isinstance(v, float):
        return "inf" if math.isinf(v) and v > 0 else repr(v)
    return str(v)


def _parse_float(key, text) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DomainError(f"config key {key!r}: not a number: {text!r}") from None
    return v


def from_ini(text: str, base: RunConfig | None = None) -> RunConfig:
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise DomainError(f"config parse error: {exc}") from None
    cfg = base or RunConfig()
    if cp.has_section("run") and "preset" in cp["run"]:
        cfg = replace(cfg, params=preset(cp["run"]["preset"]))
    known = {"params", "run"}
    for sec in cp.sections():
        if sec not in known:
            raise DomainError(f"unknown config section [{sec}]")
    kw = {}
    if cp.has_section("params"):
        for k, v in cp["params"].items():
            if k not in PARAM_KEYS:
                raise DomainError(f"unknown parameter {k!r}; expected one of {PARAM_KEYS}")
            kw[k] = _parse_float(k, v)
    if cp.has_section("run"):
        for k, v in cp["run"].items():
            if k == "preset":
                continue
            if k not in RUN_KEYS:
                raise DomainError(f"unknown run setting {k!r}")
            conv = RUN_KEYS[k]
            try:
                kw[k] = conv(v) if conv is not float else _parse_float(k, v)
            except ValueError:
                raise DomainError(f"run setting {k!r}: bad value {v!r}") from None
    return cfg.with_(**kw)


def load(path, base: RunConfig | None = None) -> RunConfig:
    try:
        with open(path) as fh:
            return from_ini(fh.read(), base)
    except OSError as exc:
        raise DomainError(f"cannot read config {path}: {exc}") from None


def field_names():
    return [f.name for f in fields(RunConfig)]
