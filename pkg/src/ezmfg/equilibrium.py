"""Market clearing in the interest rate.

Aiyagari: household wealth ``K(r)`` equals the firm's capital demand
``K_d(r)``. Huggett: ``K(r)`` equals a fixed bond supply ``B``. Both are
solved by bisection on the excess supply after a coarse sign sweep.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .fpk_solver import NoCrossing, StationaryMeasure, aggregate_capital, closed_form_measure, dirac_measure
from .hjb_solver import (
    S2_NEGATIVE,
    Grid,
    HjbOptions,
    HjbSolution,
    boundary_saving_classifier,
    solve_hjb,
)
from .model_core import DomainError, ModelParams, ProductionParams

log = logging.getLogger(__name__)


class NoBracket(RuntimeError):
    pass


class MultipleEquilibria(UserWarning):
    pass


def capital_demand(r: float, prod: ProductionParams, N: float) -> float:
    """Profit-maximizing capital ``N (A alpha / (r + delta))^(1/(1-alpha))``."""
    if r <= -prod.delta:
        raise DomainError(f"capital demand needs r > -delta, got r={r}")
    return N * (prod.A * prod.alpha / (r + prod.delta)) ** (1.0 / (1.0 - prod.alpha))


def implied_rate(K: float, prod: ProductionParams, N: float) -> float:
    """Marginal product of capital net of depreciation; needs ``K > 0``."""
    return prod.A * prod.alpha * (K / N) ** (prod.alpha - 1.0) - prod.delta


def existence_condition(params: ModelParams) -> bool:
    """Sufficient condition ``rho/(theta lam2) > (y2/y1)^(1/psi) - 1``."""
    p = params
    return p.rho / (p.theta * p.lam[1]) > (p.y[1] / p.y[0]) ** (1.0 / p.psi) - 1.0


@dataclass
class SupplyPoint:
    r: float
    K: float
    solution: Optional[HjbSolution] = None
    measure: Optional[StationaryMeasure] = None
    note: str = ""


class CapitalSupply:
    """``r -> K(r)`` with solves cached by rate.

    A solve reuses the value function of the nearest cached rate as its
    starting point.
    """

    def __init__(self, params: ModelParams, grid: Grid, opts: Optional[HjbOptions] = None):
        self.params = params
        self.grid = grid
        self.opts = opts or HjbOptions()
        self.cache: Dict[float, SupplyPoint] = {}

    def point(self, r: float) -> SupplyPoint:
        r = float(r)
        if r in self.cache:
            return self.cache[r]
        pr = self.params
        if not (0.0 < r < pr.rho):
            raise DomainError(f"capital supply needs 0 < r < rho, got r={r}")
        if boundary_saving_classifier(pr, r) == S2_NEGATIVE:
            pt = SupplyPoint(r, pr.x_low, None, dirac_measure(self.grid, pr), note="s2 negative everywhere")
            self.cache[r] = pt
            return pt
        v0 = None
        solved = [k for k, v in self.cache.items() if v.solution is not None]
        if solved:
            near = min(solved, key=lambda k: abs(k - r))
            v0 = self.cache[near].solution.v
        sol = solve_hjb(pr, r, self.grid, self.opts, v_init=v0)
        try:
            m = closed_form_measure(sol)
        except NoCrossing as exc:
            exc.solution = sol
            raise
        pt = SupplyPoint(r, aggregate_capital(m), sol, m)
        self.cache[r] = pt
        return pt

    def __call__(self, r: float) -> float:
        return self.point(r).K


def capital_supply(r: float, params: ModelParams, grid: Grid, opts: Optional[HjbOptions] = None) -> float:
    """Aggregate household wealth at rate ``r`` (uncached)."""
    return CapitalSupply(params, grid, opts)(r)


@dataclass
class EquilibriumResult:
    r_star: float
    K: float
    N: float
    residual: float
    bracket: Tuple[float, float]
    iterations: int
    solution: HjbSolution
    measure: StationaryMeasure
    mode: str = "aiyagari"
    K_demand: float = math.nan
    brackets: List[Tuple[float, float]] = field(default_factory=list)
    history: List[Tuple[float, float]] = field(default_factory=list, repr=False)

    def to_dict(self) -> Dict:
        return {
            "mode": self.mode,
            "r_star": self.r_star,
            "K": self.K,
            "K_demand": self.K_demand,
            "N": self.N,
            "residual": self.residual,
            "iterations": self.iterations,
            "bracket": list(self.bracket),
            "all_brackets": [list(b) for b in self.brackets],
        }


@dataclass
class EquilibriumOptions:
    r_lo: float = 0.001
    r_hi: Optional[float] = None
    tol_r: float = 1e-7
    tol_phi: float = 1e-9
    max_bisect: int = 60
    n_sweep: int = 10
    max_expand: int = 6


def _excess(supply: CapitalSupply, r: float, target) -> float:
    """Excess supply; a distribution reaching past the grid counts as infinite."""
    try:
        K = supply(r)
    except NoCrossing:
        return math.inf
    return K - target(r)


def solve_equilibrium(
    params: ModelParams,
    prod: ProductionParams,
    grid: Grid,
    mode: str = "aiyagari",
    opts: Optional[EquilibriumOptions] = None,
    hjb_opts: Optional[HjbOptions] = None,
    supply: Optional[CapitalSupply] = None,
) -> EquilibriumResult:
    """Bisection on ``Phi(r) = K(r) - K_d(r)`` (aiyagari) or ``K(r) - B`` (huggett).

    A coarse sweep over ``[r_lo, r_hi]`` locates sign changes first; the
    smallest bracketed root is refined and a warning is issued if there are
    several. When ``Phi(r_hi) <= 0`` the upper end moves toward ``rho``.
    """
    opts = opts or EquilibriumOptions()
    pr = params
    N = pr.labor
    if mode == "aiyagari":
        def target(r):
            return capital_demand(r, prod, N)
    elif mode == "huggett":
        if prod.B is None:
            raise ValueError("huggett mode needs a bond supply B")
        if not pr.x_low < prod.B:
            raise DomainError("huggett mode needs x_low < B")

        def target(r):
            return prod.B
    else:
        raise ValueError(f"unknown mode {mode!r}")
    supply = supply or CapitalSupply(pr, grid, hjb_opts)

    r_lo = opts.r_lo
    r_hi = opts.r_hi if opts.r_hi is not None else pr.rho - 0.001
    if not (0.0 < r_lo < r_hi < pr.rho):
        raise DomainError("need 0 < r_lo < r_hi < rho")
    phi_hi = _excess(supply, r_hi, target)
    expand = 0
    while phi_hi <= 0 and expand < opts.max_expand:
        r_hi = 0.5 * (r_hi + pr.rho)
        phi_hi = _excess(supply, r_hi, target)
        expand += 1
    rs = np.linspace(r_lo, r_hi, opts.n_sweep)
    phis = [_excess(supply, r, target) for r in rs[:-1]] + [phi_hi]
    brackets = [
        (float(rs[k]), float(rs[k + 1]))
        for k in range(len(rs) - 1)
        if phis[k] < 0 <= phis[k + 1] or phis[k] > 0 >= phis[k + 1]
    ]
    if not brackets:
        raise NoBracket(f"excess supply has one sign on [{r_lo}, {r_hi}]")
    if len(brackets) > 1:
        warnings.warn(f"{len(brackets)} sign changes of excess supply: {brackets}", MultipleEquilibria, stacklevel=2)
    a, b = brackets[0]
    fa = phis[int(np.argmin(np.abs(rs - a)))]
    fb = phis[int(np.argmin(np.abs(rs - b)))]
    history = []
    it = 0
    while it < opts.max_bisect and b - a > opts.tol_r:
        m = 0.5 * (a + b)
        fm = _excess(supply, m, target)
        history.append((m, fm))
        it += 1
        if abs(fm) < opts.tol_phi:
            a = b = m
            fa = fb = fm
            break
        if (fm < 0) == (fa < 0):
            a, fa = m, fm
        else:
            b, fb = m, fm
    if not (math.isfinite(fa) and math.isfinite(fb)):
        raise NoBracket(
            f"sign change near r={b:.6g} is where the distribution starts to reach x_max; enlarge the grid"
        )
    r_star = 0.5 * (a + b)
    pt = supply.point(r_star)
    if pt.solution is None:
        raise NoBracket("equilibrium fell in the pure borrowing-limit region")
    resid = abs(pt.K - target(r_star))
    return EquilibriumResult(
        r_star=r_star, K=pt.K, N=N, residual=resid, bracket=(a, b), iterations=it,
        solution=pt.solution, measure=pt.measure, mode=mode, K_demand=float(target(r_star)),
        brackets=brackets, history=history,
    )


def blowup_diagnostic(
    params: ModelParams,
    r_seq: Sequence[float],
    grid: Grid,
    opts: Optional[HjbOptions] = None,
) -> List[Tuple[float, float]]:
    """``(r, K(r))`` along rates approaching ``rho``; ``inf`` if mass leaves the grid."""
    r_seq = [float(r) for r in r_seq]
    if any(b <= a for a, b in zip(r_seq[:-1], r_seq[1:])):
        raise ValueError("rates must be increasing")
    supply = CapitalSupply(params, grid, opts)
    out = []
    for r in r_seq:
        try:
            out.append((r, supply(r)))
        except NoCrossing:
            out.append((r, math.inf))
    return out
