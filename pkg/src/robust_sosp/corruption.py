"""Ground-truth generation, clean Gaussian sampling, and adversarial corruption.

Corruption replaces exactly floor(eps * n) samples in place at uniformly
drawn indices and leaves every other sample bit-identical.  The
"counterexample" strategy plants coordinated outliers that cancel the clean
measurements' first moment, defeating naive spectral initialization while
keeping U = 0 an exact first-order stationary point of every sample.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import BadSpectrum, EpsOutOfRange, EpsTooSmall, RequiresNoiseless
from .sensing import SensingSample

STRATEGIES = ("none", "random_replacement", "large_outliers", "counterexample")


@dataclass(frozen=True)
class GroundTruth:
    U_star: np.ndarray
    M_star: np.ndarray
    spectrum: tuple[float, ...]


@dataclass(frozen=True)
class CorruptionPlan:
    strategy: str
    eps: float

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if not (0.0 <= self.eps < 0.5):
            raise EpsOutOfRange("eps must lie in [0, 1/2)")


@dataclass(frozen=True)
class CounterexampleDetails:
    """Internals of the planted construction, kept for verification."""

    planted_indices: np.ndarray
    P: np.ndarray
    z: np.ndarray
    A_fresh: np.ndarray
    eps_eff: float


def generate_ground_truth(d: int, spectrum: Sequence[float], rng: np.random.Generator) -> GroundTruth:
    """U_star = Q diag(sqrt(spectrum)) with Q a Haar-random d x r frame."""
    spectrum = tuple(float(s) for s in spectrum)
    if len(spectrum) == 0 or any(s <= 0 for s in spectrum) or len(spectrum) > d:
        raise BadSpectrum("spectrum must be 1..d positive values")
    r = len(spectrum)
    G = rng.standard_normal((d, r))
    Q, R = np.linalg.qr(G)
    Q = Q * np.sign(np.diag(R))  # fix the sign ambiguity for determinism
    U_star = Q * np.sqrt(np.array(spectrum))
    return GroundTruth(U_star=U_star, M_star=U_star @ U_star.T, spectrum=spectrum)


def sample_clean(
    truth: GroundTruth, n: int, sigma: float, rng: np.random.Generator
) -> list[SensingSample]:
    """n measurements y_i = <A_i, M_star> + sigma * xi_i with iid standard
    Gaussian design entries and standard Gaussian xi."""
    d = truth.M_star.shape[0]
    A = rng.standard_normal((n, d, d))
    # same reduction as sample_objective, so noiseless residuals are exact
    y = np.array([np.sum(A[i] * truth.M_star) for i in range(n)])
    if sigma > 0.0:
        y = y + sigma * rng.standard_normal(n)
    return [SensingSample(A=A[i], y=float(y[i])) for i in range(n)]


def _replacement_indices(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    return np.sort(rng.choice(n, size=m, replace=False))


def corrupt(
    samples: Sequence[SensingSample],
    plan: CorruptionPlan,
    truth: GroundTruth,
    rng: np.random.Generator,
    sigma: float = 0.0,
) -> tuple[list[SensingSample], np.ndarray, Optional[CounterexampleDetails]]:
    """Apply the plan; returns (corrupted samples, replaced indices, details).

    details is None except for the counterexample strategy.
    """
    n = len(samples)
    m = int(np.floor(plan.eps * n))
    out = list(samples)
    if plan.strategy == "none":
        return out, np.array([], dtype=int), None
    if m == 0:
        raise EpsTooSmall("eps * n < 1 leaves nothing to replace")

    d = truth.M_star.shape[0]
    M_norm = float(np.linalg.norm(truth.M_star, "fro"))

    if plan.strategy == "counterexample":
        if sigma != 0.0:
            raise RequiresNoiseless("counterexample construction assumes sigma = 0")
        idx = _replacement_indices(n, m, rng)
        keep = np.setdiff1d(np.arange(n), idx)
        # first moment of the retained clean measurements, to be cancelled
        P = -sum(samples[i].y * samples[i].A for i in keep) / n
        eps_eff = m / n
        z = rng.uniform(M_norm / 2.0, 2.0 * M_norm, size=m)
        A_fresh = rng.standard_normal((m, d, d))
        for j, i in enumerate(idx):
            E = P / (eps_eff * z[j]) + A_fresh[j]
            out[i] = SensingSample(A=E, y=float(z[j]))
        details = CounterexampleDetails(
            planted_indices=idx, P=P, z=z, A_fresh=A_fresh, eps_eff=eps_eff
        )
        return out, idx, details

    idx = _replacement_indices(n, m, rng)
    if plan.strategy == "random_replacement":
        A = rng.standard_normal((m, d, d))
        y = rng.uniform(-10.0 * M_norm, 10.0 * M_norm, size=m)
        for j, i in enumerate(idx):
            out[i] = SensingSample(A=A[j], y=float(y[j]))
    elif plan.strategy == "large_outliers":
        A = 100.0 * rng.standard_normal((m, d, d))
        for j, i in enumerate(idx):
            out[i] = SensingSample(A=A[j], y=100.0 * M_norm)
    return out, idx, None
