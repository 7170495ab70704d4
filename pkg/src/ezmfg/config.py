"""Run configuration: a sectioned TOML file checked against a fixed schema.

Unknown sections or keys are errors, so a typo never silently falls back to
a default.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .equilibrium import EquilibriumOptions
from .hjb_solver import HjbOptions
from .mc_simulator import ConfigError, SimConfig
from .model_core import ModelParams, ProductionParams

MODES = ("solve-hjb", "solve-fpk", "equilibrium", "sweep-r", "validate-asymptotics", "simulate")


_REAL = "real"
_INT = "int"
_STR = "str"
_PAIR = "pair of reals"
_LIST = "list of reals"

# section -> key -> (kind, default, help)
SCHEMA: Dict[str, Dict[str, Tuple[str, Any, str]]] = {
    "model": {
        "rho": (_REAL, 0.05, "discount rate"),
        "gamma": (_REAL, 2.0, "risk aversion"),
        "psi": (_REAL, 0.4, "elasticity of intertemporal substitution"),
        "x_low": (_REAL, -0.15, "borrowing limit"),
        "y": (_PAIR, [0.1, 0.5], "incomes (low, high)"),
        "lam": (_PAIR, [0.4, 0.4], "switching rates out of (low, high)"),
    },
    "production": {
        "A": (_REAL, 0.95, "total factor productivity"),
        "alpha": (_REAL, 0.35, "capital share"),
        "delta": (_REAL, 0.1, "depreciation"),
        "B": (_REAL, None, "bond supply (huggett market only)"),
    },
    "grid": {
        "x_max": (_REAL, 15.0, "upper end of the wealth grid"),
        "n": (_INT, 2000, "number of cells"),
        "clustering": (_STR, "sqrt-boundary", "none | sqrt-boundary"),
    },
    "solver": {
        "tol": (_REAL, 1e-8, "HJB residual tolerance"),
        "max_iter": (_INT, 5000, "HJB iteration cap"),
        "damping": (_REAL, 0.5, "relaxation of the value update"),
        "mode": (_STR, "strict", "strict | permissive (allow gamma*psi >= 1)"),
    },
    "run": {
        "mode": (_STR, "equilibrium", " | ".join(MODES)),
        "r": (_REAL, None, "interest rate; if absent the equilibrium rate is used"),
        "market": (_STR, "aiyagari", "aiyagari | huggett"),
        "fpk_method": (_STR, "closed-form", "closed-form | adjoint"),
    },
    "equilibrium": {
        "r_lo": (_REAL, 0.001, "lower end of the rate search"),
        "r_hi": (_REAL, None, "upper end (default rho - 0.001)"),
        "tol_r": (_REAL, 1e-7, "bisection tolerance in r"),
        "n_sweep": (_INT, 10, "points of the coarse sign sweep"),
    },
    "sweep": {
        "r": (_LIST, None, "rates for sweep-r, each in (0, rho)"),
    },
    "asymptotics": {
        "x_max": (_REAL, 200.0, "grid end for the far-field solve at r = rho"),
        "n": (_INT, 128000, "cells of the far-field grid (uniform)"),
        "window": (_PAIR, [50.0, 180.0], "wealth window of the far-field fit"),
        "tol": (_REAL, 0.10, "relative tolerance of the second-order term"),
        "ratio_tol": (_REAL, 0.15, "relative tolerance of the decay ratio"),
    },
    "simulate": {
        "n_agents": (_INT, 100000, "panel size"),
        "t_end": (_REAL, 500.0, "horizon"),
        "dt": (_REAL, 0.025, "Euler step, at most 0.01 / max(lam)"),
        "burn_in": (_REAL, 250.0, "discarded initial time, below t_end"),
        "seed": (_INT, 0, "seed of the PCG64 generator"),
        "partitions": (_INT, 1, "independent agent blocks with derived seeds"),
    },
    "output": {
        "dir": (_STR, "out", "output directory"),
        "format": (_STR, "csv", "csv | json for tabular outputs"),
    },
}

_CHOICES = {
    ("grid", "clustering"): ("none", "sqrt-boundary"),
    ("solver", "mode"): ("strict", "permissive"),
    ("run", "mode"): MODES,
    ("run", "market"): ("aiyagari", "huggett"),
    ("run", "fpk_method"): ("closed-form", "adjoint"),
    ("output", "format"): ("csv", "json"),
}


def schema_help() -> str:
    lines = ["config keys (TOML; unknown sections or keys are rejected):"]
    for sec, keys in SCHEMA.items():
        lines.append(f"  [{sec}]")
        for key, (kind, default, text) in keys.items():
            d = "unset" if default is None else default
            lines.append(f"    {key:<11} {kind:<14} default {d}: {text}")
    return "\n".join(lines)


def _coerce(sec: str, key: str, kind: str, val):
    where = f"[{sec}].{key}"

    def real(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {v!r}")
        v = float(v)
        if not math.isfinite(v):
            raise ConfigError(f"{where}: must be finite")
        return v

    if kind == _REAL:
        return real(val)
    if kind == _INT:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"{where}: expected an integer, got {val!r}")
        return val
    if kind == _STR:
        if not isinstance(val, str):
            raise ConfigError(f"{where}: expected a string, got {val!r}")
        allowed = _CHOICES.get((sec, key))
        if allowed and val not in allowed:
            raise ConfigError(f"{where}: {val!r} not one of {', '.join(allowed)}")
        return val
    if not isinstance(val, list):
        raise ConfigError(f"{where}: expected a list, got {val!r}")
    out = [real(v) for v in val]
    if kind == _PAIR and len(out) != 2:
        raise ConfigError(f"{where}: expected two values")
    return out


@dataclass
class RunConfig:
    model: ModelParams
    production: ProductionParams
    grid: Dict[str, Any]
    hjb: HjbOptions
    mode: str
    r: Optional[float]
    market: str
    fpk_method: str
    equilibrium: EquilibriumOptions
    sweep_r: Optional[List[float]]
    asymptotics: Dict[str, Any]
    sim: SimConfig
    out_dir: str
    out_format: str
    raw: Dict[str, Dict[str, Any]] = field(default_factory=dict, repr=False)


def parse(data: Dict[str, Any]) -> RunConfig:
    """Check a decoded TOML document and fill defaults."""
    sec_vals: Dict[str, Dict[str, Any]] = {}
    for sec, body in data.items():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{sec}] must be a table")
        for key in body:
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key [{sec}].{key}")
    for sec, keys in SCHEMA.items():
        body = data.get(sec, {})
        vals = {}
        for key, (kind, default, _) in keys.items():
            vals[key] = _coerce(sec, key, kind, body[key]) if key in body else default
        sec_vals[sec] = vals
    m, pr, g, sv, run = (sec_vals[k] for k in ("model", "production", "grid", "solver", "run"))
    model = ModelParams(rho=m["rho"], gamma=m["gamma"], psi=m["psi"], x_low=m["x_low"],
                        y=tuple(m["y"]), lam=tuple(m["lam"]))
    prod = ProductionParams(A=pr["A"], alpha=pr["alpha"], delta=pr["delta"], B=pr["B"])
    hjb = HjbOptions(tol=sv["tol"], max_iter=sv["max_iter"], damping=sv["damping"], mode=sv["mode"])
    eq = sec_vals["equilibrium"]
    eq_opts = EquilibriumOptions(r_lo=eq["r_lo"], r_hi=eq["r_hi"], tol_r=eq["tol_r"], n_sweep=eq["n_sweep"])
    sim = sec_vals["simulate"]
    cfg = RunConfig(
        model=model, production=prod, grid=dict(g), hjb=hjb, mode=run["mode"], r=run["r"],
        market=run["market"], fpk_method=run["fpk_method"], equilibrium=eq_opts,
        sweep_r=sec_vals["sweep"]["r"], asymptotics=dict(sec_vals["asymptotics"]),
        sim=SimConfig(**sim), out_dir=sec_vals["output"]["dir"],
        out_format=sec_vals["output"]["format"], raw=sec_vals,
    )
    return cfg


def bundled_configs() -> List[str]:
    root = resources.files("ezmfg") / "configs"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".toml"))


def read_text(path: str) -> str:
    """Read a config file, falling back to a bundled config of that name."""
    p = Path(path)
    if p.is_file():
        return p.read_text()
    name = p.name if p.name.endswith(".toml") else p.name + ".toml"
    root = resources.files("ezmfg") / "configs" / name
    if root.is_file():
        return root.read_text()
    raise ConfigError(f"config {path!r} not found (bundled: {', '.join(bundled_configs())})")


def load(path: str) -> RunConfig:
    try:
        data = tomllib.loads(read_text(path))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse(data)
