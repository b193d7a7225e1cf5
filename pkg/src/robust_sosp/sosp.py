"""Randomized minimization with inexact gradient and Hessian oracles.

Gradient steps while the inexact gradient is large; otherwise a randomized
step along the most negative curvature direction of the inexact Hessian;
stop when neither signal exceeds its threshold.  When the oracles are within
eps_g/3 and (2/9)*eps_H of the truth, the returned point is a
((4/3)*eps_g, (4/3)*eps_H)-approximate second-order stationary point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NonFinite, OracleFailure, RegionViolation

# Robust Hessian estimates of a symmetric population can carry float-level
# asymmetry; silently symmetrize below this, error above.
_ASYMMETRY_TOL = 1e-8

_DEFAULT_MAX_ITERS = 100_000


@dataclass(frozen=True)
class OracleSuite:
    """Caller-supplied (possibly stochastic) derivative oracles."""

    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SolverParams:
    eps_g: float
    eps_H: float
    L_g: float
    L_H: float
    max_iters: Optional[int] = None
    f_range: Optional[float] = None
    seed: int = 0
    region_check: Optional[Callable[[np.ndarray], bool]] = None

    def __post_init__(self):
        for name in ("eps_g", "eps_H", "L_g", "L_H"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")

    @property
    def c_eps(self) -> float:
        """Per-iteration guaranteed expected decrease."""
        return min(
            self.eps_g**2 / (6.0 * self.L_g),
            2.0 * self.eps_H**3 / (9.0 * self.L_H**2),
        )

    def resolved_max_iters(self) -> int:
        if self.max_iters is not None:
            return self.max_iters
        if self.f_range is not None:
            return int(math.ceil(50.0 * self.f_range / self.c_eps))
        return _DEFAULT_MAX_ITERS


@dataclass(frozen=True)
class StepRecord:
    index: int
    kind: str  # "gradient" | "curvature" | "terminal"
    grad_norm: float
    lambda_min: Optional[float]
    x: np.ndarray


@dataclass(frozen=True)
class SolveTrace:
    records: list[StepRecord]
    x_final: np.ndarray
    reason: str  # "sosp" | "iter_cap"


def min_eig_pair(H: np.ndarray) -> tuple[float, np.ndarray]:
    """Smallest eigenvalue and a unit eigenvector of a symmetric matrix."""
    H = np.asarray(H, dtype=float)
    if not np.all(np.isfinite(H)):
        raise NonFinite("Hessian contains NaN or Inf")
    vals, vecs = np.linalg.eigh(H)
    return float(vals[0]), vecs[:, 0]


def _symmetrized(H: np.ndarray) -> np.ndarray:
    scale = max(1.0, float(np.abs(H).max()))
    asym = float(np.abs(H - H.T).max())
    if asym > _ASYMMETRY_TOL * scale:
        raise OracleFailure(f"Hessian oracle asymmetry {asym:.3e} exceeds tolerance")
    return 0.5 * (H + H.T)


def find_sosp(x0: np.ndarray, oracles: OracleSuite, params: SolverParams) -> SolveTrace:
    """Run the step rules from x0 until an approximate SOSP or the cap."""
    x = np.array(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NonFinite("x0 contains NaN or Inf")

    rng = np.random.Generator(np.random.Philox(params.seed))
    curvature_step = 2.0 * params.eps_H / params.L_H
    records: list[StepRecord] = []

    def check_region(point):
        if params.region_check is not None and not params.region_check(point):
            raise RegionViolation("iterate left the caller-defined region")

    check_region(x)
    for t in range(params.resolved_max_iters()):
        g = np.asarray(oracles.grad(x), dtype=float)
        if not np.all(np.isfinite(g)):
            raise OracleFailure("gradient oracle returned non-finite values")
        g_norm = float(np.linalg.norm(g))

        if g_norm > params.eps_g:
            x = x - g / params.L_g
            check_region(x)
            records.append(StepRecord(t, "gradient", g_norm, None, x.copy()))
            continue

        H = np.asarray(oracles.hess(x), dtype=float)
        if not np.all(np.isfinite(H)):
            raise OracleFailure("Hessian oracle returned non-finite values")
        lam, p = min_eig_pair(_symmetrized(H))

        if lam < -params.eps_H:
            sigma = 1.0 if rng.integers(0, 2) == 1 else -1.0  # one draw per step
            x = x + curvature_step * sigma * p
            check_region(x)
            records.append(StepRecord(t, "curvature", g_norm, lam, x.copy()))
            continue

        records.append(StepRecord(t, "terminal", g_norm, lam, x.copy()))
        return SolveTrace(records=records, x_final=x, reason="sosp")

    return SolveTrace(records=records, x_final=x, reason="iter_cap")
