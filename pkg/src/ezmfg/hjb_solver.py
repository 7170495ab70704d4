"""State-constrained HJB system on a wealth grid.

Implicit upwind finite differences with Howard (policy) iteration. The
``F(c, v)`` nonlinearity in ``v`` is linearized around the previous iterate
(only its stabilizing part is put in the matrix), so every inner solve is a
linear M-matrix system. Unknowns are interleaved ``(v1_i, v2_i)`` which makes
the matrix pentadiagonal; it is solved with a banded LU.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .model_core import (
    DomainError,
    ModelParams,
    b_param,
    dF_dv,
    envelope,
    modified_aggregator,
    optimal_consumption,
    validate,
    zero_saving_slope,
)

log = logging.getLogger(__name__)

FORWARD, BACKWARD, ZERO = 1, -1, 0
_SLOPE_FLOOR = 1e-6


class BadGrid(ValueError):
    pass


class NoConvergence(RuntimeError):
    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"HJB iteration did not converge: {iterations} iterations, residual {residual:.3e}")


@dataclass(frozen=True)
class Grid:
    nodes: np.ndarray
    clustering: str = "none"

    @property
    def spacing(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def x_low(self) -> float:
        return float(self.nodes[0])

    @property
    def x_max(self) -> float:
        return float(self.nodes[-1])

    def __len__(self):
        return len(self.nodes)


def build_grid(x_low: float, x_max: float, n: int, clustering: str = "none") -> Grid:
    """Grid with ``n`` cells (``n + 1`` nodes) on ``[x_low, x_max]``.

    ``sqrt-boundary`` puts the first 10% of the nodes at
    ``x_low + L (k/n)^2`` to resolve the square-root layer of ``s1``; the
    rest are uniform.
    """
    if not (np.isfinite(x_low) and np.isfinite(x_max)) or x_max <= x_low:
        raise BadGrid(f"need x_max > x_low, got [{x_low}, {x_max}]")
    if int(n) != n or n < 100:
        raise BadGrid(f"need at least 100 cells, got {n}")
    n = int(n)
    length = x_max - x_low
    if clustering == "none":
        nodes = np.linspace(x_low, x_max, n + 1)
    elif clustering == "sqrt-boundary":
        m = n // 10
        k = np.arange(m + 1)
        head = x_low + length * (k / n) ** 2
        tail = np.linspace(head[-1], x_max, n - m + 1)
        nodes = np.concatenate([head, tail[1:]])
    else:
        raise BadGrid(f"unknown clustering {clustering!r}")
    if np.any(np.diff(nodes) <= 0):
        raise BadGrid("nodes are not strictly increasing")
    return Grid(nodes=nodes, clustering=clustering)


@dataclass
class HjbOptions:
    tol: float = 1e-8
    max_iter: int = 5000
    damping: float = 0.5
    mode: str = "strict"
    # 1/Delta pseudo-time term; 0 means pure policy iteration
    inv_dt: float = 0.0


@dataclass
class HjbSolution:
    """Value functions and policies on the grid; arrays are shaped ``(2, n+1)``."""

    grid: Grid
    params: ModelParams
    r: float
    v: np.ndarray
    dv: np.ndarray
    dv_centered: np.ndarray
    c: np.ndarray
    s: np.ndarray
    branch: np.ndarray
    residual: float
    iterations: int
    history: List[float] = field(default_factory=list, repr=False)

    @property
    def x(self) -> np.ndarray:
        return self.grid.nodes


def _policies(v, x, dxf, r, params):
    """Upwind derivative, consumption, saving and branch for both states."""
    pr = params
    n = len(x)
    dv = np.empty((2, n))
    c = np.empty((2, n))
    s = np.empty((2, n))
    branch = np.empty((2, n), dtype=int)
    for j in range(2):
        vj = v[j]
        y = pr.y[j]
        income = r * x + y
        p0 = zero_saving_slope(x, y, vj, r, pr)
        pF = np.empty(n)
        pB = np.empty(n)
        d = np.diff(vj) / dxf
        pF[:-1] = d
        pF[-1] = p0[-1]
        pB[1:] = d
        pB[0] = p0[0]
        # a nonpositive slope means unbounded consumption; a tiny slope mimics it
        floor = _SLOPE_FLOOR * p0
        pF = np.maximum(pF, floor)
        pB = np.maximum(pB, floor)
        cF = optimal_consumption(vj, pF, pr)
        cB = optimal_consumption(vj, pB, pr)
        sF = income - cF
        sB = income - cB
        sF[-1] = 0.0
        sB[0] = 0.0
        iF = sF > 0
        iB = (sB < 0) & ~iF
        i0 = ~(iF | iB)
        dv[j] = np.where(iF, pF, np.where(iB, pB, p0))
        c[j] = np.where(iF, cF, np.where(iB, cB, income))
        s[j] = np.where(i0, 0.0, income - c[j])
        branch[j] = np.where(iF, FORWARD, np.where(iB, BACKWARD, ZERO))
    return dv, c, s, branch


def hjb_residual(v, c, s, dv, r, params):
    """Nodewise ``zeta v - [F(c, v) + s Dv] - lam (v_other - v)``."""
    pr = params
    res = np.empty_like(v)
    for j in range(2):
        h = modified_aggregator(c[j], v[j], pr) + s[j] * dv[j]
        res[j] = pr.zeta * v[j] - h - pr.lam[j] * (v[1 - j] - v[j])
    return res


def _assemble(v, c, s, branch, dxf, r, params, inv_dt=0.0):
    """Banded matrix (interleaved ordering) and right-hand side.

    Returns ``(ab, rhs)`` with ``ab`` in LAPACK ``(2, 2)`` band storage.
    """
    pr = params
    n = v.shape[1]
    size = 2 * n
    ab = np.zeros((5, size))
    rhs = np.empty(size)
    for j in range(2):
        rows = 2 * np.arange(n) + j
        fv = dF_dv(c[j], v[j], pr)
        # keep the stabilizing part of -F_v; floor keeps the diagonal dominant
        a = np.maximum(-fv, -0.5 * pr.zeta)
        diag = pr.zeta + pr.lam[j] + a + inv_dt
        fw = branch[j] == FORWARD
        bw = branch[j] == BACKWARD
        up = np.zeros(n)
        lo = np.zeros(n)
        # forward: -s (v_{i+1} - v_i)/dx
        idx = np.nonzero(fw)[0]
        coef = s[j, idx] / dxf[idx]
        diag[idx] += coef
        up[idx] = -coef
        idx = np.nonzero(bw)[0]
        coef = -s[j, idx] / dxf[idx - 1]
        diag[idx] += coef
        lo[idx] = -coef
        # band storage: ab[2 + row - col, col]
        ab[2, rows] = diag
        ab[0, rows[:-1] + 2] = up[:-1]
        ab[4, rows[1:] - 2] = lo[1:]
        other = 2 * np.arange(n) + (1 - j)
        ab[2 + rows - other, other] = -pr.lam[j]
        rhs[rows] = modified_aggregator(c[j], v[j], pr) + a * v[j] + inv_dt * v[j]
    return ab, rhs


def check_monotone(ab) -> bool:
    """M-matrix sign pattern and weak diagonal dominance by rows."""
    diag = ab[2]
    off = np.delete(ab, 2, axis=0)
    if np.any(off > 0) or np.any(diag <= 0):
        return False
    size = ab.shape[1]
    row_off = np.zeros(size)
    for k, shift in zip((0, 1, 3, 4), (2, 1, -1, -2)):
        # ab[k, col] belongs to row = col - shift
        cols = np.arange(size)
        rows = cols - shift
        ok = (rows >= 0) & (rows < size)
        np.add.at(row_off, rows[ok], np.abs(ab[k, cols[ok]]))
    return bool(np.all(diag >= row_off * (1 - 1e-12)))


def solve_hjb(
    params: ModelParams,
    r: float,
    grid: Grid,
    opts: Optional[HjbOptions] = None,
    v_init: Optional[np.ndarray] = None,
) -> HjbSolution:
    """Solve the coupled HJB system at interest rate ``r``.

    Iterates policy evaluation (one banded solve) and upwind policy updates
    until the sup-norm residual of the discrete equation is below
    ``opts.tol``.
    """
    opts = opts or HjbOptions()
    validate(params, opts.mode)
    pr = params
    if not (0.0 < r <= pr.rho):
        raise DomainError(f"solve_hjb needs 0 < r <= rho, got r={r}")
    x = grid.nodes
    if np.any(r * x + pr.y[0] <= 0):
        raise DomainError("r x + y1 must be positive on the grid")
    dxf = grid.spacing
    if v_init is None:
        lower, _ = envelope(x, r, pr)
        v = np.vstack([lower, lower])
    else:
        v = np.array(v_init, dtype=float, copy=True)
    omega = 1.0 - opts.damping
    history = []
    res_norm = np.inf
    for it in range(opts.max_iter + 1):
        dv, c, s, branch = _policies(v, x, dxf, r, pr)
        res = hjb_residual(v, c, s, dv, r, pr)
        res_norm = float(np.max(np.abs(res)))
        history.append(res_norm)
        if res_norm < opts.tol:
            break
        if it == opts.max_iter:
            raise NoConvergence(it, res_norm)
        ab, rhs = _assemble(v, c, s, branch, dxf, r, pr, opts.inv_dt)
        if not check_monotone(ab):
            raise NoConvergence(it, res_norm)
        v_new = solve_banded((2, 2), ab, rhs).reshape(-1, 2).T
        step = omega
        # stay inside the log domain of (1 - gamma) v
        while np.any(v + step * (v_new - v) >= 0):
            step *= 0.5
            if step < 1e-12:
                raise NoConvergence(it, res_norm)
        v = v + step * (v_new - v)
    dv_c = np.gradient(v, x, axis=1)
    return HjbSolution(
        grid=grid, params=pr, r=r, v=v, dv=dv, dv_centered=dv_c, c=c, s=s,
        branch=branch, residual=res_norm, iterations=len(history) - 1, history=history,
    )


S2_NEGATIVE = "s2_negative_everywhere"
S2_POSITIVE = "s2_positive_at_boundary"
INDETERMINATE = "indeterminate"


def boundary_saving_classifier(params: ModelParams, r: float) -> str:
    """Closed-form sufficient conditions on the sign of ``s2`` near ``x_low``.

    The two conditions do not cover the whole parameter space, hence the
    ``indeterminate`` outcome.
    """
    pr = params
    if not (0.0 <= r <= pr.rho):
        raise DomainError(f"classifier needs 0 <= r <= rho, got r={r}")
    a2 = (r * pr.x_low + pr.y[1]) ** (-1.0 / pr.psi)
    a1 = (r * pr.x_low + pr.y[0]) ** (-1.0 / pr.psi)
    gap = pr.lam[1] * (a2 - a1)
    if r > 0 and (pr.zeta - r) * a2 + gap >= 0:
        return S2_NEGATIVE
    if (pr.rho - r) * a2 + gap < 0:
        return S2_POSITIVE
    return INDETERMINATE


@dataclass
class QualitativeReport:
    """Pass/fail per structural property of a solution."""

    checks: Dict[str, bool] = field(default_factory=dict)
    details: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def failures(self) -> List[str]:
        return [k for k, ok in self.checks.items() if not ok]

    def __str__(self):
        return "\n".join(f"{k:<28s} {'pass' if ok else 'FAIL'}" for k, ok in self.checks.items())


def slope_increments(v, x):
    """Differences of consecutive cell slopes; ``<= 0`` for a concave ``v``."""
    slope = np.diff(v, axis=-1) / np.diff(x)
    return np.diff(slope, axis=-1), slope


def first_cell_curvature(v1, x):
    """Three-point second derivative at the first interior node."""
    h0, h1 = x[1] - x[0], x[2] - x[1]
    return 2.0 * ((v1[2] - v1[1]) / h1 - (v1[1] - v1[0]) / h0) / (h0 + h1)


def assert_qualitative(
    sol: HjbSolution,
    params: Optional[ModelParams] = None,
    r: Optional[float] = None,
    tol: float = 1e-8,
    refinements: Optional[Sequence[int]] = None,
    opts: Optional[HjbOptions] = None,
) -> QualitativeReport:
    """Check the structural properties every solution should have.

    Args:
        sol: converged solution.
        params, r: default to the ones stored in ``sol``.
        tol: residual bound; concavity is allowed ``tol`` times the slope scale.
        refinements: cell counts for the curvature-blow-up study at
            ``x_low``; each is re-solved on a grid of the same type.
        opts: solver options for the refinement solves.

    Returns:
        A report; nothing is raised.
    """
    pr = params or sol.params
    r = sol.r if r is None else r
    x = sol.x
    v, s, c = sol.v, sol.s, sol.c
    rep = QualitativeReport()
    ck, dt = rep.checks, rep.details

    ck["residual"] = bool(sol.residual < tol)
    dt["residual"] = float(sol.residual)
    inc, slope = slope_increments(v, x)
    scale = float(np.max(np.abs(slope)))
    dt["max_slope_increment"] = float(inc.max())
    ck["concave"] = bool(inc.max() <= tol * scale)
    ck["increasing"] = bool(np.all(slope > 0))
    lower, upper = envelope(x, r, pr)
    ck["envelope"] = bool(np.all(v >= lower) and np.all(v <= upper))
    ck["v2_above_v1"] = bool(np.all(v[1] > v[0]))
    ck["s1_zero_at_limit"] = bool(s[0, 0] == 0.0)
    ck["s1_negative_inside"] = bool(np.all(s[0, 1:] < 0))
    dt["c_min"] = float(c.min())
    ck["consumption_positive"] = bool(np.all(np.isfinite(c)) and c.min() > 0)
    if s[1, 0] > 0:
        ck["boundary_slope_order"] = bool(sol.dv[0, 0] > sol.dv[1, 0])
        if r < pr.rho:
            neg = np.nonzero(s[1] >= 0)[0]
            last_nonneg = neg.max()
            ck["s2_turns_negative"] = bool(last_nonneg < len(x) - 1 and s[1, -1] < 0)
            dt["xbar"] = float(x[min(last_nonneg + 1, len(x) - 1)])
    if r < pr.rho:
        # at r = rho mass escapes to the right by nature
        ck["right_boundary_outflow"] = bool(s[1, -1] < 0)
    if refinements:
        curv = []
        for n in refinements:
            g = build_grid(x[0], x[-1], n, sol.grid.clustering)
            sn = solve_hjb(pr, r, g, opts)
            curv.append(first_cell_curvature(sn.v[0], g.nodes))
        dt["first_cell_curvature"] = curv
        ck["curvature_diverges_at_limit"] = bool(np.all(np.diff(curv) < 0))
    return rep


def stability_in_r(
    params: ModelParams,
    r_seq: Sequence[float],
    grid: Grid,
    opts: Optional[HjbOptions] = None,
) -> List[Dict[str, float]]:
    """Sup-norm changes of ``v`` and ``s`` between consecutive rates."""
    sols = []
    v0 = None
    for r in r_seq:
        sol = solve_hjb(params, r, grid, opts, v_init=v0)
        v0 = sol.v
        sols.append(sol)
    out = []
    for a, b in zip(sols[:-1], sols[1:]):
        out.append({
            "r0": a.r,
            "r1": b.r,
            "dv": float(np.max(np.abs(a.v - b.v))),
            "ds": float(np.max(np.abs(a.s - b.s))),
        })
    return out
