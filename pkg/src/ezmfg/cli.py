"""Command-line front end.

Every run writes ``summary.json`` to the output directory, including runs
that fail; the exit code is 0 on success, 2 when a solver fails and 3 when
the configuration is rejected.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import warnings
from dataclasses import asdict, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from . import config as cfgmod
from .asymptotics import FitFailure, WindowTooSmall, boundary_layer, nonexistence_ratio, validate_far_field
from .config import MODES, ConfigError, RunConfig
from .equilibrium import CapitalSupply, NoBracket, capital_demand, solve_equilibrium
from .fpk_solver import (
    NegativeDensity,
    NoCrossing,
    SingularSolve,
    adjoint_measure,
    closed_form_measure,
    dirac_measure,
)
from .hjb_solver import BadGrid, HjbSolution, NoConvergence, assert_qualitative, build_grid, solve_hjb
from .mc_simulator import RNG_ALGORITHM, compare, simulate
from .model_core import AssumptionViolation, DomainError, PermissiveModeWarning, b_param, validate

log = logging.getLogger("ezmfg")

EXIT_OK = 0
EXIT_SOLVER = 2
EXIT_CONFIG = 3

_CONFIG_ERRORS = (ConfigError, AssumptionViolation, DomainError, BadGrid, WindowTooSmall)
_SOLVER_ERRORS = (NoConvergence, NoCrossing, NoBracket, NegativeDensity, SingularSolve, FitFailure)


class InvariantFailure(RuntimeError):
    pass


def fmt(v) -> str:
    """17 significant digits, enough to round-trip a double."""
    return format(float(v), ".17g")


def _finite(obj):
    """Replace non-finite floats by ``None`` so JSON output never holds NaN."""
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_finite(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


def write_table(path: Path, columns: Dict[str, np.ndarray], fmt_kind: str, meta: Optional[Dict] = None) -> Path:
    """Write equal-length columns as CSV (with an optional ``# key=value`` line) or JSON."""
    if fmt_kind == "json":
        path = path.with_suffix(".json")
        body = {"columns": {k: [float(v) for v in col] for k, col in columns.items()}}
        if meta:
            body["meta"] = meta
        write_json(path, body)
        return path
    for name, col in columns.items():
        if not np.all(np.isfinite(col)):
            raise NegativeDensity(f"non-finite values in column {name}")
    with open(path, "w", newline="") as fh:
        if meta:
            fh.write("# " + " ".join(f"{k}={fmt(v)}" for k, v in meta.items()) + "\n")
        out = csv.writer(fh, lineterminator="\n")
        names = list(columns)
        out.writerow(names)
        for row in zip(*(columns[n] for n in names)):
            out.writerow([fmt(v) for v in row])
    return path


class Runner:
    """Executes one configured run and collects the summary."""

    def __init__(self, cfg: RunConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.summary: Dict[str, Any] = {"invariants": {}, "artifacts": []}
        self._grid = None
        self._eq = None

    # -- shared pieces -------------------------------------------------
    @property
    def grid(self):
        if self._grid is None:
            g = self.cfg.grid
            self._grid = build_grid(self.cfg.model.x_low, g["x_max"], g["n"], g["clustering"])
        return self._grid

    def _artifact(self, path: Path) -> None:
        self.summary["artifacts"].append(path.name)

    def _check(self, sol: HjbSolution, label: str) -> None:
        rep = assert_qualitative(sol, tol=self.cfg.hjb.tol)
        self.summary["invariants"][label] = {k: bool(v) for k, v in rep.checks.items()}
        if not rep.passed:
            raise InvariantFailure(f"{label}: invariant(s) violated: {', '.join(rep.failures())}")

    def equilibrium(self):
        if self._eq is None:
            c = self.cfg
            res = solve_equilibrium(c.model, c.production, self.grid, mode=c.market,
                                    opts=c.equilibrium, hjb_opts=c.hjb)
            self._eq = res
            self.summary["equilibrium"] = res.to_dict()
            self._check(res.solution, "hjb_at_equilibrium")
        return self._eq

    def rate_and_solution(self):
        """Configured rate, or the equilibrium rate when none is given."""
        c = self.cfg
        if c.r is None:
            res = self.equilibrium()
            return res.r_star, res.solution
        sol = solve_hjb(c.model, c.r, self.grid, c.hjb)
        self._check(sol, "hjb")
        return c.r, sol

    def measure(self, sol: HjbSolution):
        if sol.s[1, 0] <= 0:
            return dirac_measure(sol.grid, sol.params)
        if self.cfg.fpk_method == "adjoint":
            return adjoint_measure(sol)
        return closed_form_measure(sol)

    def write_values(self, sol: HjbSolution) -> None:
        cols = {"x": sol.x, "v1": sol.v[0], "v2": sol.v[1], "c1": sol.c[0], "c2": sol.c[1],
                "s1": sol.s[0], "s2": sol.s[1]}
        self._artifact(write_table(self.out / "values.csv", cols, self.cfg.out_format))

    def write_measure(self, m) -> None:
        cols = {"x": m.x, "g1": m.g[0], "g2": m.g[1], "G1": m.cdf[0], "G2": m.cdf[1]}
        meta = {"mu1": m.mu[0], "mu2": m.mu[1], "xhat": m.support_end}
        self._artifact(write_table(self.out / "measure.csv", cols, self.cfg.out_format, meta))
        mass = m.state_mass
        self.summary["measure"] = {"method": m.method, "mu": list(m.mu), "xhat": m.support_end,
                                   "state_mass": mass.tolist(), "kappa2": m.kappa2}

    # -- modes -----------------------------------------------------------
    def solve_hjb(self) -> None:
        r, sol = self.rate_and_solution()
        self.summary["hjb"] = {"r": r, "residual": sol.residual, "iterations": sol.iterations}
        self.write_values(sol)

    def solve_fpk(self) -> None:
        r, sol = self.rate_and_solution()
        self.summary["hjb"] = {"r": r, "residual": sol.residual, "iterations": sol.iterations}
        self.write_values(sol)
        self.write_measure(self.measure(sol))

    def run_equilibrium(self) -> None:
        res = self.equilibrium()
        path = self.out / "equilibrium.json"
        write_json(path, {"r_star": res.r_star, "K": res.K, "N": res.N, "residual": res.residual,
                          "iterations": res.iterations})
        self._artifact(path)
        self.write_values(res.solution)
        self.write_measure(res.measure)

    def sweep(self) -> None:
        c = self.cfg
        rates = c.sweep_r
        if not rates:
            raise ConfigError("sweep-r needs a non-empty [sweep].r list")
        for r in rates:
            if not 0.0 < r < c.model.rho:
                raise ConfigError(f"[sweep].r: {r} not in (0, rho)")
        validate(c.model, c.hjb.mode)
        supply = CapitalSupply(c.model, self.grid, c.hjb)
        names = ["r", "K_supply", "K_demand", "s2_at_xlow", "xhat", "mu1"]
        rows: List[List[str]] = []
        for r in rates:
            row = {"r": r}
            err = ""
            try:
                row["K_demand"] = capital_demand(r, c.production, c.model.labor)
                pt = supply.point(r)
                sol = pt.solution if pt.solution is not None else solve_hjb(c.model, r, self.grid, c.hjb)
                row["s2_at_xlow"] = sol.s[1, 0]
                row["K_supply"] = pt.K
                row["xhat"] = pt.measure.support_end
                row["mu1"] = pt.measure.mu[0]
            except (NoCrossing, NoConvergence, NegativeDensity, SingularSolve, DomainError) as exc:
                sol = getattr(exc, "solution", None)
                if sol is not None:
                    row["s2_at_xlow"] = sol.s[1, 0]
                err = f"{type(exc).__name__}: {exc}"
            cells = [fmt(row[n]) if n in row and math.isfinite(row[n]) else "" for n in names]
            rows.append(cells + [err])
        path = self.out / "sweep.csv"
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(names + ["error"])
            out.writerows(rows)
        self._artifact(path)
        self.summary["sweep"] = {"rows": len(rows), "failed_rows": sum(1 for r in rows if r[-1])}

    def asymptotics(self) -> None:
        c = self.cfg
        a = c.asymptotics
        validate(c.model, c.hjb.mode)
        far_grid = build_grid(c.model.x_low, a["x_max"], a["n"], "none")
        far = solve_hjb(c.model, c.model.rho, far_grid, c.hjb)
        ff = validate_far_field(far, tuple(a["window"]), a["tol"])
        ratio = nonexistence_ratio(far, tuple(a["window"]), a["ratio_tol"])
        r, sol = self.rate_and_solution()
        bl = boundary_layer(sol, r=r)
        report = {
            "far_field": {"r": c.model.rho, "x_max": a["x_max"], "n": a["n"], **ff.to_dict()},
            "decay_ratio": ratio.to_dict(),
            "boundary_layer": {"r": r, **bl.to_dict()},
        }
        path = self.out / "asymptotics.json"
        write_json(path, report)
        self._artifact(path)
        self.summary["invariants"]["asymptotics"] = {
            "far_field": ff.passed, "decay_ratio": ratio.passed, "boundary_layer": bl.passed,
        }

    def simulate(self) -> None:
        r, sol = self.rate_and_solution()
        m = self.measure(sol)
        emp = simulate(sol, self.cfg.sim)
        path = self.out / "simulate.csv"
        emp.to_csv(path)
        self._artifact(path)
        rep = compare(emp, m)
        rep["r"] = r
        self.summary["simulation"] = rep
        self.summary["invariants"]["simulation"] = {
            "wealth_above_limit": bool(np.min(emp.wealth) >= sol.x[0]),
        }

    def run(self) -> None:
        c = self.cfg
        validate(c.model, c.hjb.mode)
        {
            "solve-hjb": self.solve_hjb,
            "solve-fpk": self.solve_fpk,
            "equilibrium": self.run_equilibrium,
            "sweep-r": self.sweep,
            "validate-asymptotics": self.asymptotics,
            "simulate": self.simulate,
        }[c.mode]()


def _describe(cfg: RunConfig) -> Dict[str, Any]:
    p = cfg.model
    derived = {"theta": p.theta, "zeta": p.zeta, "labor": p.labor, "gamma_psi": p.gamma * p.psi}
    if cfg.r is not None and cfg.r > 0:
        try:
            derived["b_of_r"] = b_param(cfg.r, p)
        except (ValueError, ZeroDivisionError):
            pass
    return {
        "mode": cfg.mode,
        "params": {"model": asdict(p), "production": asdict(cfg.production), "grid": cfg.grid,
                   "run": {"r": cfg.r, "market": cfg.market, "fpk_method": cfg.fpk_method}},
        "derived": derived,
        "tolerances": {"hjb_tol": cfg.hjb.tol, "hjb_max_iter": cfg.hjb.max_iter,
                       "solver_mode": cfg.hjb.mode, "tol_r": cfg.equilibrium.tol_r},
        "simulation_config": {**asdict(cfg.sim), "rng": RNG_ALGORITHM},
    }


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ezmfg",
        description="Stationary heterogeneous-agent equilibria with recursive utility.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=(
            cfgmod.schema_help()
            + "\n\nbundled configs: " + ", ".join(cfgmod.bundled_configs())
            + "\nexit codes: 0 success, 2 solver failure, 3 config error"
        ),
    )
    ap.add_argument("--config", required=True, help="TOML file or the name of a bundled config")
    ap.add_argument("--mode", choices=MODES, help="override [run].mode")
    ap.add_argument("--out", help="output directory (overrides [output].dir)")
    g = ap.add_mutually_exclusive_group()
    g.add_argument("--strict", dest="solver_mode", action="store_const", const="strict",
                   help="require gamma*psi < 1")
    g.add_argument("--permissive", dest="solver_mode", action="store_const", const="permissive",
                   help="allow gamma*psi >= 1 with a warning")
    ap.add_argument("--seed", type=int, help="override [simulate].seed")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    summary: Dict[str, Any] = {"config": args.config}
    out = Path(args.out) if args.out else Path("out")
    cfg = None
    code = EXIT_OK
    runner = None
    try:
        cfg = cfgmod.load(args.config)
        if args.mode:
            cfg.mode = args.mode
        if args.solver_mode:
            cfg.hjb = replace(cfg.hjb, mode=args.solver_mode)
        if args.seed is not None:
            cfg.sim = replace(cfg.sim, seed=args.seed)
        if not args.out:
            out = Path(cfg.out_dir)
        summary.update(_describe(cfg))
        cfg.sim.check(cfg.model.lam)
        out.mkdir(parents=True, exist_ok=True)
        runner = Runner(cfg, out)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", PermissiveModeWarning)
            runner.run()
        summary["status"] = "ok"
    except _CONFIG_ERRORS as exc:
        code = EXIT_CONFIG
        summary["status"] = "config_error"
        summary["error"] = f"{type(exc).__name__}: {exc}"
    except (*_SOLVER_ERRORS, InvariantFailure) as exc:
        code = EXIT_SOLVER
        summary["status"] = "solver_failure"
        summary["error"] = f"{type(exc).__name__}: {exc}"
    if runner is not None:
        summary.update({k: v for k, v in runner.summary.items()})
    inv = summary.get("invariants", {})
    summary["invariants_passed"] = all(all(v.values()) for v in inv.values()) if inv else None
    summary["exit_code"] = code
    if "error" in summary:
        print(f"ezmfg: {summary['error']}", file=sys.stderr)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "summary.json", summary)
    except OSError as exc:
        print(f"ezmfg: cannot write summary: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
