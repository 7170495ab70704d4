"""Stationary wealth distribution for given saving policies.

Two independent constructions are provided:

* ``closed_form_measure`` integrates the explicit density formula. Near the
  borrowing limit ``s1 ~ -C sqrt(x - x_low)`` so the exponent integrand is
  singular; that piece is integrated analytically.
* ``adjoint_measure`` takes the transpose of the upwind transport plus
  switching generator used by the HJB scheme and finds its null vector. Node
  masses are read as finite-volume masses of the dual cell around each node.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .hjb_solver import Grid, HjbSolution
from .model_core import ModelParams


class NoCrossing(RuntimeError):
    """``s2`` stays positive on the whole grid."""


class NegativeDensity(RuntimeError):
    pass


class SingularSolve(RuntimeError):
    pass


# nodes used to fit the square-root law of s1 at the borrowing limit
_SQRT_FIT_NODES = 3


@dataclass
class StationaryMeasure:
    """Densities on the grid plus point masses at ``x_low``.

    ``cdf[j][k]`` is ``mu_j + int_{x_low}^{x_k} g_j``. ``flux`` is the net
    wealth flux ``s1 g1 + s2 g2`` (at nodes for the closed form, at cell faces
    for the adjoint), ``flux_scale`` is ``max |s1 g1|``.
    """

    x: np.ndarray
    g: np.ndarray
    mu: Tuple[float, float]
    cdf: np.ndarray
    support_end: float
    kappa2: float = np.nan
    flux: Optional[np.ndarray] = field(default=None, repr=False)
    flux_scale: float = np.nan
    method: str = ""

    @property
    def state_mass(self) -> np.ndarray:
        return self.cdf[:, -1].copy()

    @property
    def total_mass(self) -> float:
        return float(self.cdf[:, -1].sum())

    def mass_residual(self, params: ModelParams) -> np.ndarray:
        """Deviation of the per-state masses from ``(lam2, lam1)/(lam1 + lam2)``."""
        return self.state_mass - np.asarray(params.state_masses())


def find_xhat(s2, grid: Grid) -> float:
    """First zero of ``s2`` by linear interpolation between bracketing nodes."""
    s2 = np.asarray(s2, dtype=float)
    x = grid.nodes
    if s2[0] <= 0:
        raise ValueError("find_xhat needs s2(x_low) > 0")
    nonpos = np.nonzero(s2 <= 0)[0]
    # a zero only at the last node comes from the right boundary closure
    if nonpos.size == 0 or (nonpos[0] == len(s2) - 1 and s2[-1] == 0.0):
        raise NoCrossing("s2 > 0 on the whole grid; enlarge x_max or lower r")
    k = nonpos[0]
    a, b = s2[k - 1], s2[k]
    return float(x[k - 1] + (x[k] - x[k - 1]) * a / (a - b))


def dirac_measure(grid: Grid, params: ModelParams) -> StationaryMeasure:
    """All agents at the borrowing limit, split by the income-chain weights."""
    x = grid.nodes
    mu = params.state_masses()
    cdf = np.vstack([np.full(len(x), mu[0]), np.full(len(x), mu[1])])
    return StationaryMeasure(
        x=x, g=np.zeros((2, len(x))), mu=mu, cdf=cdf, support_end=float(x[0]),
        kappa2=0.0, flux=np.zeros(len(x)), flux_scale=0.0, method="dirac",
    )


def _cumtrapz(f, x):
    out = np.zeros(len(x))
    if len(x) > 1:
        out[1:] = np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(x))
    return out


def closed_form_measure(sol: HjbSolution, grid: Optional[Grid] = None) -> StationaryMeasure:
    """Stationary measure from the explicit density formula.

    With ``E(x) = exp(int_{x_low}^x (-lam1/s1 - lam2/s2))`` the densities are
    ``g2 = kappa2 E / s2`` and ``g1 = -kappa2 E / s1`` on ``(x_low, xhat)``,
    ``mu1 = kappa2 / lam1`` and ``mu2 = 0``. ``kappa2`` fixes the state-2 mass;
    the state-1 mass is then a consistency check (``mass_residual``).
    If ``s2(x_low) = 0`` everybody ends at the limit.
    """
    grid = grid or sol.grid
    pr = sol.params
    x = grid.nodes
    n = len(x)
    s1, s2 = sol.s
    l1, l2 = pr.lam
    if s2[0] <= 0:
        return dirac_measure(grid, pr)
    if np.any(s1[1:] >= 0):
        raise NegativeDensity("s1 must be negative away from the borrowing limit")
    xhat = find_xhat(s2, grid)
    kstar = int(np.argmax(s2 <= 0))
    last = kstar - 1  # last node strictly inside (x_low, xhat)
    xi = x[: last + 1]
    d = xi - x[0]

    # s1 ~ -C sqrt(d) near the limit: analytic piece on the first m cells
    m = min(_SQRT_FIT_NODES, last)
    if m >= 1:
        sq = np.sqrt(d[1 : m + 1])
        C = -np.dot(s1[1 : m + 1], sq) / np.dot(sq, sq)
        if not C > 0:
            raise NegativeDensity("square-root fit of s1 at the borrowing limit failed")
    i1 = np.zeros(last + 1)
    if m >= 1:
        i1[: m + 1] = 2.0 * l1 * np.sqrt(d[: m + 1]) / C
        rate1 = l1 / -s1[m : last + 1]
        i1[m:] = i1[m] + _cumtrapz(rate1, xi[m:])
    i2 = _cumtrapz(-l2 / s2[: last + 1], xi)
    E = np.exp(i1 + i2)
    h2 = E / s2[: last + 1]

    # cell integrals of h2 and of q1 = E / (-s1)
    cell_h2 = 0.5 * (h2[1:] + h2[:-1]) * np.diff(xi)
    q1 = np.empty(last + 1)
    q1[1:] = E[1:] / -s1[1 : last + 1]
    cell_q1 = np.empty(last)
    if m >= 1:
        # u = sqrt(d) removes the 1/sqrt singularity: int q1 dx = int 2 u q1 du
        u = np.sqrt(d[: m + 1])
        f = np.empty(m + 1)
        f[0] = 2.0 / C
        f[1:] = 2.0 * u[1:] * q1[1 : m + 1]
        cell_q1[:m] = 0.5 * (f[1:] + f[:-1]) * np.diff(u)
    cell_q1[m:] = 0.5 * (q1[m + 1 :] + q1[m:-1]) * np.diff(xi[m:])

    # last partial cell up to xhat, with s2 linear and vanishing at xhat
    L = xhat - x[last]
    beta = l2 * L / s2[last]
    tail_h2 = E[last] / l2
    tail_q1 = E[last] / -s1[last] * L / (beta + 1.0) if last > 0 else 0.0

    total_h2 = cell_h2.sum() + tail_h2
    kappa2 = (l1 / (l1 + l2)) / total_h2
    mu1 = kappa2 / l1

    g = np.zeros((2, n))
    g[1, : last + 1] = kappa2 * h2
    g[0, 1 : last + 1] = kappa2 * q1[1:]
    if last >= 1:
        # pointwise density is infinite at x_low; store the first-cell average
        g[0, 0] = kappa2 * cell_q1[0] / (x[1] - x[0])
    if np.any(g < 0) or not np.all(np.isfinite(g)):
        raise NegativeDensity("closed-form density is negative or not finite")

    cdf = np.zeros((2, n))
    c1 = np.zeros(n)
    c2 = np.zeros(n)
    c1[1 : last + 1] = np.cumsum(cell_q1)
    c2[1 : last + 1] = np.cumsum(cell_h2)
    c1[last + 1 :] = c1[last] + tail_q1
    c2[last + 1 :] = c2[last] + tail_h2
    cdf[0] = mu1 + kappa2 * c1
    cdf[1] = kappa2 * c2

    flux = s1 * g[0] + s2 * g[1]
    flux[0] = 0.0
    return StationaryMeasure(
        x=x, g=g, mu=(mu1, 0.0), cdf=cdf, support_end=xhat, kappa2=kappa2,
        flux=flux, flux_scale=float(np.max(np.abs(s1[1:] * g[0, 1:]))), method="closed-form",
    )


def transport_generator(s, lam, grid: Grid) -> sp.csc_matrix:
    """Upwind drift plus switching generator, interleaved ordering ``2 i + j``.

    Rows sum to zero; this is the same operator the HJB scheme applies to
    ``v`` once the policy is fixed.
    """
    x = grid.nodes
    n = len(x)
    dx = np.diff(x)
    rows, cols, vals = [], [], []
    for j in range(2):
        sj = np.asarray(s[j], dtype=float)
        k = 2 * np.arange(n) + j
        fw = np.nonzero(sj[:-1] > 0)[0]
        rate = sj[fw] / dx[fw]
        rows += [k[fw], k[fw]]
        cols += [k[fw + 1], k[fw]]
        vals += [rate, -rate]
        bw = np.nonzero(sj[1:] < 0)[0] + 1
        rate = -sj[bw] / dx[bw - 1]
        rows += [k[bw], k[bw]]
        cols += [k[bw - 1], k[bw]]
        vals += [rate, -rate]
        other = 2 * np.arange(n) + (1 - j)
        rows += [k, k]
        cols += [other, k]
        vals += [np.full(n, lam[j]), np.full(n, -lam[j])]
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(2 * n, 2 * n)
    )
    return A.tocsc()


def adjoint_measure(sol: HjbSolution, grid: Optional[Grid] = None) -> StationaryMeasure:
    """Null vector of the transposed generator, normalized to total mass one.

    A positive drift at the last node or a negative one at the first is
    ignored (the state constraint keeps agents inside the grid).
    """
    grid = grid or sol.grid
    pr = sol.params
    x = grid.nodes
    n = len(x)
    dx = np.diff(x)
    s = np.array(sol.s, dtype=float, copy=True)
    s[:, 0] = np.maximum(s[:, 0], 0.0)
    s[:, -1] = np.minimum(s[:, -1], 0.0)
    At = transport_generator(s, pr.lam, grid).T.tolil()
    At[0, :] = np.ones(2 * n)
    rhs = np.zeros(2 * n)
    rhs[0] = 1.0
    try:
        lu = splu(At.tocsc())
    except RuntimeError as exc:
        raise SingularSolve(str(exc)) from exc
    mass = lu.solve(rhs)
    if not np.all(np.isfinite(mass)):
        raise SingularSolve("adjoint solve produced non-finite values")
    neg = mass.min()
    if neg < -1e-10:
        raise SingularSolve(f"null vector has negative entries ({neg:.3e})")
    mass = np.maximum(mass, 0.0)
    mass /= mass.sum()
    m = mass.reshape(n, 2).T

    # vertex-centred reading: node i owns [x_{i-1/2}, x_{i+1/2}], except a
    # zero-drift node at the limit which is a point mass
    half = np.zeros(n)
    half[:-1] += 0.5 * dx
    half[1:] += 0.5 * dx
    g = np.zeros((2, n))
    cdf = np.zeros((2, n))
    mu = [0.0, 0.0]
    for j in range(2):
        dirac = s[j, 0] == 0
        mu[j] = float(m[j, 0]) if dirac else 0.0
        g[j] = m[j] / half
        # CDF at nodes: everything left of the node plus half its own cell
        cdf[j] = np.cumsum(m[j]) - 0.5 * m[j]
        if dirac:
            g[j, 0] = 0.0
            cdf[j, 0] = m[j, 0]
    # net flux through face i+1/2
    flux = np.zeros(n)
    flux[:-1] = (np.maximum(s[0, :-1], 0) * m[0, :-1] + np.minimum(s[0, 1:], 0) * m[0, 1:]
                 + np.maximum(s[1, :-1], 0) * m[1, :-1] + np.minimum(s[1, 1:], 0) * m[1, 1:]) / dx
    scale = float(np.max(np.abs(np.minimum(s[0, 1:], 0) * m[0, 1:] / dx))) if n > 1 else 0.0
    support = find_xhat(s[1], grid) if s[1, 0] > 0 else float(x[0])
    return StationaryMeasure(
        x=x, g=g, mu=(mu[0], mu[1]), cdf=cdf, support_end=float(support),
        kappa2=float(pr.lam[0] * mu[0]), flux=flux, flux_scale=scale, method="adjoint",
    )


def cdf_distance(a: StationaryMeasure, b: StationaryMeasure) -> float:
    """Sup over nodes and states of the CDF difference."""
    return float(np.max(np.abs(a.cdf - b.cdf)))


def aggregate_capital(m: StationaryMeasure, grid: Optional[Grid] = None) -> float:
    """Mean wealth ``sum_j int x g_j + (mu1 + mu2) x_low``.

    Computed as ``x_low + int (1 - G1 - G2) dx`` which handles the
    integrable singularity of ``g1`` at the limit through the CDF.
    """
    x = m.x if grid is None else grid.nodes
    tail = m.cdf[:, -1].sum() - m.cdf.sum(axis=0)
    total = m.cdf[:, -1].sum()
    return float(x[0] * total + np.trapezoid(tail, x))


def aggregate_labor(params: ModelParams) -> float:
    """Effective labor supply ``(y2 lam1 + y1 lam2)/(lam1 + lam2)``."""
    return params.labor
