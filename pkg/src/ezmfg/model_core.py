"""Model parameters, Epstein-Zin aggregator and Hamiltonian.

All powers of ``(1 - gamma) * v`` go through ``exp``/``log`` of that
positive quantity, so negative bases never reach ``**``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Tuple

import numpy as np

# (1 - gamma) v below this is treated as v == 0
_W_FLOOR = 1e-300


class AssumptionViolation(ValueError):
    """Raised when parameters leave the admissible region."""

    def __init__(self, field_name: str, reason: str):
        self.field = field_name
        self.reason = reason
        super().__init__(f"{field_name}: {reason}")


class DomainError(ValueError):
    """Raised when a function is evaluated outside its domain."""


class PermissiveModeWarning(UserWarning):
    """Parameters accepted although gamma*psi >= 1."""


@dataclass(frozen=True)
class ModelParams:
    """Preferences, income process and borrowing limit.

    ``y`` and ``lam`` are ``(low, high)`` pairs; ``lam[j]`` is the rate at
    which an agent leaves income state ``j``.
    """

    rho: float = 0.05
    gamma: float = 2.0
    psi: float = 0.4
    x_low: float = -0.15
    y: Tuple[float, float] = (0.1, 0.5)
    lam: Tuple[float, float] = (0.4, 0.4)

    def __post_init__(self):
        object.__setattr__(self, "y", tuple(float(v) for v in self.y))
        object.__setattr__(self, "lam", tuple(float(v) for v in self.lam))

    @property
    def theta(self) -> float:
        return (1.0 - 1.0 / self.psi) / (1.0 - self.gamma)

    @property
    def zeta(self) -> float:
        return self.rho / self.theta

    @property
    def labor(self) -> float:
        l1, l2 = self.lam
        return (self.y[1] * l1 + self.y[0] * l2) / (l1 + l2)

    def state_masses(self) -> Tuple[float, float]:
        """Long-run share of agents in each income state."""
        l1, l2 = self.lam
        return l2 / (l1 + l2), l1 / (l1 + l2)


@dataclass(frozen=True)
class ProductionParams:
    A: float = 0.95
    alpha: float = 0.35
    delta: float = 0.1
    B: float | None = None


@dataclass(frozen=True)
class DerivedConstants:
    theta: float
    zeta: float
    b_of_r: Callable[[float], float] = field(repr=False)
    permissive: bool = False


def validate(params: ModelParams, mode: str = "strict") -> DerivedConstants:
    """Check the standing assumptions and return the derived constants.

    In ``strict`` mode ``gamma > 1``, ``psi < 1`` and ``gamma * psi < 1`` are
    required. ``permissive`` mode accepts ``gamma * psi >= 1`` (with a
    warning), which is how the gamma=2, psi=0.8 and gamma=4, psi=0.4 runs are
    done.
    """
    if mode not in ("strict", "permissive"):
        raise ValueError(f"unknown mode {mode!r}")
    p = params
    for name in ("rho", "gamma", "psi", "x_low"):
        if not math.isfinite(getattr(p, name)):
            raise AssumptionViolation(name, "must be finite")
    if len(p.y) != 2 or len(p.lam) != 2:
        raise AssumptionViolation("y/lam", "two income states are required")
    if not all(math.isfinite(v) for v in p.y + p.lam):
        raise AssumptionViolation("y/lam", "must be finite")
    if p.rho <= 0:
        raise AssumptionViolation("rho", "discount rate must be positive")
    if p.gamma == 1.0:
        raise AssumptionViolation("gamma", "gamma = 1 is excluded")
    if p.psi == 1.0:
        raise AssumptionViolation("psi", "psi = 1 is excluded")
    if p.psi <= 0 or p.gamma <= 0:
        raise AssumptionViolation("gamma/psi", "must be positive")
    if p.gamma <= 1.0:
        raise AssumptionViolation("gamma", "gamma > 1 required (risk aversion above log)")
    if p.psi >= 1.0:
        raise AssumptionViolation("psi", "psi < 1 required")
    if p.y[1] <= p.y[0]:
        raise AssumptionViolation("y", "y1 < y2 required")
    if min(p.lam) <= 0:
        raise AssumptionViolation("lam", "switching intensities must be positive")
    if p.rho * p.x_low + p.y[0] <= 0:
        raise AssumptionViolation("x_low", "rho * x_low + y1 > 0 required")
    permissive = False
    if p.gamma * p.psi >= 1.0:
        if mode == "strict":
            raise AssumptionViolation(
                "gamma*psi", f"gamma*psi = {p.gamma * p.psi:g} >= 1 (late resolution needs gamma*psi < 1)"
            )
        permissive = True
        warnings.warn(
            f"gamma*psi = {p.gamma * p.psi:g} >= 1: outside the theory, results are numerical only",
            PermissiveModeWarning,
            stacklevel=2,
        )
    return DerivedConstants(
        theta=p.theta, zeta=p.zeta, b_of_r=lambda r: b_param(r, p), permissive=permissive
    )


def b_param(r: float, params: ModelParams) -> float:
    """Growth rate of the explicit supersolution, ``r <= b <= rho``."""
    rho, psi = params.rho, params.psi
    if not (0.0 <= r <= rho):
        raise DomainError(f"b_param needs 0 <= r <= rho, got r={r}")
    b = rho * ((r + psi * (rho - r)) / rho) ** (1.0 / (1.0 - psi))
    # rounding can put b a hair outside [r, rho]
    return min(max(b, r), rho)


def log_scaled_value(v, gamma: float):
    """``log((1 - gamma) * v)``; raises for ``v`` not safely negative."""
    w = (1.0 - gamma) * np.asarray(v, dtype=float)
    if np.any(~(w > _W_FLOOR)):
        raise DomainError("value must be strictly negative ((1-gamma) v > 0)")
    return np.log(w)


def modified_aggregator(c, v, params: ModelParams):
    """``F(c, v) = rho/(1-1/psi) * c^(1-1/psi) * ((1-gamma) v)^(1-theta)``."""
    c = np.asarray(c, dtype=float)
    if np.any(c <= 0):
        raise DomainError("consumption must be positive")
    p = params
    lw = log_scaled_value(v, p.gamma)
    a = 1.0 - 1.0 / p.psi
    return p.rho / a * np.exp(a * np.log(c) + (1.0 - p.theta) * lw)


def aggregator(c, v, params: ModelParams):
    """Epstein-Zin flow ``f(c, v) = F(c, v) - zeta * v``."""
    return modified_aggregator(c, v, params) - params.zeta * np.asarray(v, dtype=float)


def dF_dv(c, v, params: ModelParams):
    """Partial derivative of ``F`` in ``v``: ``(1 - theta) F / v``."""
    return (1.0 - params.theta) * modified_aggregator(c, v, params) / np.asarray(v, dtype=float)


def optimal_consumption(v, p, params: ModelParams):
    """Maximizer of ``c -> F(c, v) - c p`` for ``p > 0``."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(~(p_arr > 0)):
        raise DomainError("slope must be positive")
    pr = params
    lw = log_scaled_value(v, pr.gamma)
    e = (1.0 - pr.gamma * pr.psi) / (1.0 - pr.gamma)
    return np.exp(pr.psi * math.log(pr.rho) - pr.psi * np.log(p_arr) + e * lw)


def zero_saving_slope(x, y, v, r: float, params: ModelParams):
    """Slope ``p`` at which optimal consumption equals ``r x + y``."""
    pr = params
    income = r * np.asarray(x, dtype=float) + y
    lw = log_scaled_value(v, pr.gamma)
    e = (1.0 - pr.gamma * pr.psi) / (pr.psi * (1.0 - pr.gamma))
    return np.exp(math.log(pr.rho) - np.log(income) / pr.psi + e * lw)


def hamiltonian(x, y, v, p, r: float, params: ModelParams):
    """``H(x, y, v, p)``; ``+inf`` where ``p < 0``."""
    pr = params
    x, v, p = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x, v, p)))
    lw = log_scaled_value(v, pr.gamma)
    e = (1.0 - pr.gamma * pr.psi) / (1.0 - pr.gamma)
    out = np.full(p.shape, np.inf)
    pos = p > 0
    pp = p[pos]
    out[pos] = (r * x[pos] + y) * pp + pr.rho ** pr.psi / (pr.psi - 1.0) * np.exp(
        (1.0 - pr.psi) * np.log(pp) + e * lw[pos]
    )
    # p == 0: the power term vanishes
    zero = p == 0
    out[zero] = 0.0
    return out[()] if out.ndim == 0 else out


def hamiltonian_min(x, y, v, r: float, params: ModelParams):
    """``min_{p > 0} H``, attained at the zero-saving slope."""
    pr = params
    lw = log_scaled_value(v, pr.gamma)
    a = 1.0 - 1.0 / pr.psi
    income = r * np.asarray(x, dtype=float) + y
    return pr.rho * np.exp(a * np.log(income) + (1.0 / pr.psi - pr.gamma) / (1.0 - pr.gamma) * lw) / a


def hamiltonian_dv(v, p, params: ModelParams):
    """Analytic ``H_v``; negative when ``gamma * psi < 1``."""
    pr = params
    lw = log_scaled_value(v, pr.gamma)
    p = np.asarray(p, dtype=float)
    e = pr.gamma * (1.0 - pr.psi) / (1.0 - pr.gamma)
    return (
        pr.rho ** pr.psi * (1.0 - pr.gamma * pr.psi) / (pr.psi - 1.0)
        * np.exp((1.0 - pr.psi) * np.log(p) + e * lw)
    )


def hamiltonian_dvp(v, p, params: ModelParams):
    pr = params
    lw = log_scaled_value(v, pr.gamma)
    e = pr.gamma * (1.0 - pr.psi) / (1.0 - pr.gamma)
    return -(pr.rho ** pr.psi) * (1.0 - pr.gamma * pr.psi) * np.exp(-pr.psi * np.log(p) + e * lw)


def hamiltonian_dvv(v, p, params: ModelParams):
    pr = params
    lw = log_scaled_value(v, pr.gamma)
    e = pr.gamma * (1.0 - pr.psi) / (1.0 - pr.gamma) - 1.0
    return (
        -pr.gamma * pr.rho ** pr.psi * (1.0 - pr.gamma * pr.psi)
        * np.exp((1.0 - pr.psi) * np.log(p) + e * lw)
    )


def envelope(x, r: float, params: ModelParams):
    """Explicit sub- and supersolution ``(u1_check, v2_check)`` at wealth ``x``.

    Both states share the same bounds: the state-1 income subsolution from
    below and the state-2 income supersolution from above.
    """
    pr = params
    if not (0.0 < r <= pr.rho):
        raise DomainError(f"envelope needs 0 < r <= rho, got {r}")
    x = np.asarray(x, dtype=float)
    base_lo = r * x + pr.y[0]
    if np.any(base_lo <= 0):
        raise DomainError("r x + y1 must be positive")
    b = b_param(r, pr)
    lower = np.exp((1.0 - pr.gamma) * np.log(base_lo)) / (1.0 - pr.gamma)
    upper = np.exp((1.0 - pr.gamma) * np.log(b * (x + pr.y[1] / r))) / (1.0 - pr.gamma)
    if np.any(~(lower < upper)):
        raise DomainError("envelope ordering failed")
    return lower, upper
