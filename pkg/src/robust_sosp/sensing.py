"""Outlier-robust low-rank matrix sensing.

Recovers a symmetric PSD rank-r matrix from corrupted linear measurements
y_i = <A_i, M> + noise by minimizing the factored least-squares objective
with robustly estimated gradients and Hessians: a global phase that runs the
inexact-oracle SOSP solver from U = 0, a local inexact-gradient-descent
refinement, and a one-shot spectral route for the high-noise regime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyInput, IterCapError, RegionViolation
from .robust_mean import robust_mean_estimate
from .sosp import OracleSuite, SolverParams, SolveTrace, find_sosp


@dataclass(frozen=True)
class SensingSample:
    """One measurement: a d x d design matrix and the scalar response."""

    A: np.ndarray
    y: float


@dataclass(frozen=True)
class ProblemSpec:
    """Constants the recovery pipeline consumes.

    Gamma is an upper bound on the squared operator norm of any feasible
    factor (Gamma >= 36 * sigma_1 when the ground truth is known);
    sigma_r_star is the smallest nonzero singular value of the target.
    """

    d: int
    r: int
    Gamma: float
    sigma_r_star: float
    eps: float
    sigma: float = 0.0

    def __post_init__(self):
        if self.r < 1 or self.d < self.r:
            raise ValueError("need 1 <= r <= d")
        if self.Gamma <= 0 or self.sigma_r_star <= 0:
            raise ValueError("Gamma and sigma_r_star must be positive")
        if not (0.0 < self.eps < 0.25):
            raise ValueError("eps must lie in (0, 1/4): the oracles call the "
                             "robust mean with contamination 2*eps")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    @property
    def kappa(self) -> float:
        return self.Gamma / self.sigma_r_star


@dataclass(frozen=True)
class RefineTrace:
    grad_norms: list[float]
    iterates: list[np.ndarray]
    reason: str  # "converged" | "iter_cap"


@dataclass(frozen=True)
class RecoveryResult:
    M_hat: np.ndarray
    U_final: Optional[np.ndarray]
    branch: str  # "optimize" | "spectral"
    frob_error: Optional[float]
    global_trace: Optional[SolveTrace]
    refine_trace: Optional[RefineTrace]
    robust_rounds: int


def _check_sample(U: np.ndarray, s: SensingSample) -> None:
    d = s.A.shape[0]
    if s.A.shape != (d, d) or U.shape[0] != d:
        raise DimensionMismatch(
            f"factor {U.shape} incompatible with design matrix {s.A.shape}"
        )


def _vec(M: np.ndarray) -> np.ndarray:
    return np.reshape(M, -1, order="F")


def _unvec(x: np.ndarray, d: int, r: int) -> np.ndarray:
    return np.reshape(x, (d, r), order="F")


def sample_objective(U: np.ndarray, s: SensingSample) -> float:
    """Half squared residual of one measurement at the factor U."""
    _check_sample(U, s)
    resid = float(np.sum((U @ U.T) * s.A)) - s.y
    return 0.5 * resid**2


def population_objective(U: np.ndarray, M_star: np.ndarray, sigma: float = 0.0) -> float:
    """Expected objective under the Gaussian design: the Frobenius gap plus noise floor."""
    if U.shape[0] != M_star.shape[0]:
        raise DimensionMismatch("factor and target dimensions differ")
    gap = U @ U.T - M_star
    return 0.5 * float(np.sum(gap * gap)) + 0.5 * sigma**2


def sample_gradient(U: np.ndarray, s: SensingSample) -> np.ndarray:
    """Closed-form gradient of the sample objective, a d x r matrix."""
    _check_sample(U, s)
    resid = float(np.sum((U @ U.T) * s.A)) - s.y
    return resid * (s.A + s.A.T) @ U


def sample_hessian(U: np.ndarray, s: SensingSample) -> np.ndarray:
    """Closed-form Hessian in the column-vectorized coordinates, (dr) x (dr)."""
    _check_sample(U, s)
    d, r = U.shape
    B = s.A + s.A.T
    resid = float(np.sum((U @ U.T) * s.A)) - s.y
    v = _vec(B @ U)
    return resid * np.kron(np.eye(r), B) + np.outer(v, v)


def covariance_bound_gradient(U: np.ndarray, M_star: np.ndarray, sigma: float = 0.0) -> float:
    """Analytic upper bound on the operator norm of the sample-gradient covariance.

    For a unit direction W the quadratic form is Var(X) Var(Y) + Cov(X, Y)^2
    + sigma^2 Var(Y) with X = <A, UU^T - M*> and Y = <A, UW^T + WU^T>, which
    gives (2 ||UU^T - M*||_F^2 + sigma^2) * ||UW^T + WU^T||_F^2 and hence the
    constants below.  The noiseless bound is attained in the rank-1 large-||U||
    limit, so Monte-Carlo estimates can sit right at it.
    """
    gap = U @ U.T - M_star
    gap2 = float(np.sum(gap * gap))
    op2 = float(np.linalg.norm(U, 2) ** 2)
    return (8.0 * gap2 + 4.0 * sigma**2) * op2


def covariance_bound_hessian(U: np.ndarray, M_star: np.ndarray, sigma: float = 0.0) -> float:
    """Analytic upper bound on the operator norm of the sample-Hessian covariance."""
    r = U.shape[1]
    gap = U @ U.T - M_star
    gap2 = float(np.sum(gap * gap))
    op4 = float(np.linalg.norm(U, 2) ** 4)
    bound = 16.0 * r * gap2 + 128.0 * op4
    if sigma > 0.0:
        bound += 16.0 * r * sigma**2
    return bound


def stack_samples(samples: Sequence[SensingSample]) -> tuple[np.ndarray, np.ndarray]:
    if len(samples) == 0:
        raise EmptyInput("no samples")
    A = np.stack([s.A for s in samples]).astype(float)
    y = np.array([s.y for s in samples], dtype=float)
    return A, y


class _OracleStats:
    """Mutable tally of robust-mean work done by an oracle suite."""

    def __init__(self):
        self.calls = 0
        self.rounds = 0

    def add(self, rounds: int):
        self.calls += 1
        self.rounds += rounds


def robust_oracles(
    samples: Sequence[SensingSample],
    eps: float,
    spec: ProblemSpec,
    stats: Optional[_OracleStats] = None,
) -> OracleSuite:
    """Gradient/Hessian oracles: robust means of the per-sample derivatives.

    Both estimators are invoked with contamination parameter 2 * eps: the
    filter then removes at least 4 * eps of weight mass, which budgets for
    inliers that fail the stability condition on top of the adversarial
    fraction, while keeping the trimming bias on heavy-tailed derivative
    clouds small enough for the curvature signal to survive.  Memory: the
    Hessian point cloud materializes n x (d*r)^2 doubles.
    """
    A, y = stack_samples(samples)
    n = A.shape[0]
    d, r = spec.d, spec.r
    B = A + A.transpose(0, 2, 1)
    eye_blocks = np.eye(r)

    def residuals(U: np.ndarray) -> np.ndarray:
        return np.einsum("nij,ij->n", A, U @ U.T) - y

    def grad(x: np.ndarray) -> np.ndarray:
        U = _unvec(x, d, r)
        G = residuals(U)[:, None, None] * (B @ U)  # (n, d, r)
        cloud = G.transpose(0, 2, 1).reshape(n, d * r)  # row i = vec(G_i)
        est = robust_mean_estimate(cloud, 2.0 * eps)
        if stats is not None:
            stats.add(est.rounds)
        return est.mean

    def hess(x: np.ndarray) -> np.ndarray:
        U = _unvec(x, d, r)
        resid = residuals(U)
        BU = B @ U
        vbu = BU.transpose(0, 2, 1).reshape(n, d * r)
        H = np.zeros((n, d * r, d * r))
        for j in range(r):
            H[:, j * d : (j + 1) * d, j * d : (j + 1) * d] = resid[:, None, None] * B
        H += vbu[:, :, None] * vbu[:, None, :]
        est = robust_mean_estimate(H.reshape(n, (d * r) ** 2), 2.0 * eps)
        if stats is not None:
            stats.add(est.rounds)
        M = est.mean.reshape(d * r, d * r)
        return 0.5 * (M + M.T)

    return OracleSuite(grad=grad, hess=hess)


def dist_to_solution_set(U: np.ndarray, U_star: np.ndarray) -> float:
    """Frobenius distance from U to the rotation orbit of U_star (Procrustes)."""
    if U.shape != U_star.shape:
        raise DimensionMismatch("U and U_star must have the same shape")
    V, _, Wt = np.linalg.svd(U_star.T @ U)
    R = V @ Wt
    return float(np.linalg.norm(U - U_star @ R, "fro"))


def solve_global(
    samples: Sequence[SensingSample],
    spec: ProblemSpec,
    seed: int,
    U0: Optional[np.ndarray] = None,
    max_iters: int = 100_000,
    stats: Optional[_OracleStats] = None,
) -> tuple[np.ndarray, SolveTrace]:
    """Global phase: run the SOSP solver on the robust oracles from U0 (default 0).

    Every iterate is asserted to satisfy opnorm(U)^2 <= Gamma; a violation
    raises RegionViolation.
    """
    if len(samples) == 0:
        raise EmptyInput("no samples")
    d, r = spec.d, spec.r
    sr = spec.sigma_r_star

    oracles = robust_oracles(samples, spec.eps, spec, stats=stats)
    params = SolverParams(
        eps_g=sr**1.5 / 32.0,
        eps_H=sr / 4.0,
        L_g=16.0 * spec.Gamma,
        L_H=24.0 * math.sqrt(spec.Gamma),
        max_iters=max_iters,
        seed=seed,
        region_check=lambda x: np.linalg.norm(_unvec(x, d, r), 2) ** 2 <= spec.Gamma,
    )
    x0 = _vec(U0) if U0 is not None else np.zeros(d * r)
    trace = find_sosp(x0, oracles, params)
    if trace.reason != "sosp":
        raise IterCapError(f"global phase hit the {max_iters}-iteration cap")
    return _unvec(trace.x_final, d, r), trace


def local_refine(
    U0: np.ndarray,
    samples: Sequence[SensingSample],
    spec: ProblemSpec,
    iota: float,
    max_iters: Optional[int] = None,
    stats: Optional[_OracleStats] = None,
) -> tuple[np.ndarray, RefineTrace]:
    """Inexact gradient descent from a point near the solution set.

    Steps with 1/Gamma (noiseless) or 1/(20*Gamma) (noisy) until the robust
    gradient norm falls below a stopping threshold derived from the target
    distance iota, or the iteration cap.  With noise the threshold is
    generally unreachable and the cap governs.
    """
    if len(samples) == 0:
        raise EmptyInput("no samples")
    d, r = spec.d, spec.r
    sr = spec.sigma_r_star
    eta = 1.0 / spec.Gamma if spec.sigma == 0.0 else 1.0 / (20.0 * spec.Gamma)
    # Local (2/3)*sigma_r regularity lower-bounds the gradient norm by the
    # distance, so this threshold certifies distance <= iota at termination.
    tau_stop = (sr / (2.0 * spec.kappa)) * iota / math.sqrt(sr)
    if max_iters is None:
        max_iters = int(math.ceil(10.0 * spec.kappa * max(math.log(sr / iota), 1.0)))

    oracles = robust_oracles(samples, spec.eps, spec, stats=stats)
    U = np.array(U0, dtype=float)
    grad_norms: list[float] = []
    iterates: list[np.ndarray] = [U.copy()]
    reason = "iter_cap"
    for _ in range(max_iters):
        g = _unvec(oracles.grad(_vec(U)), d, r)
        g_norm = float(np.linalg.norm(g, "fro"))
        grad_norms.append(g_norm)
        if g_norm <= tau_stop:
            reason = "converged"
            break
        U = U - eta * g
        iterates.append(U.copy())
    return U, RefineTrace(grad_norms=grad_norms, iterates=iterates, reason=reason)


def spectral_recover(
    samples: Sequence[SensingSample],
    eps: float,
    r: int,
    stats: Optional[_OracleStats] = None,
) -> np.ndarray:
    """Rank-r truncation of the robust mean of {y_i * A_i}."""
    A, y = stack_samples(samples)
    n, d = A.shape[0], A.shape[1]
    cloud = (y[:, None, None] * A).reshape(n, d * d)
    est = robust_mean_estimate(cloud, eps)
    if stats is not None:
        stats.add(est.rounds)
    M_tilde = est.mean.reshape(d, d)
    U, s, Vt = np.linalg.svd(M_tilde)
    return (U[:, :r] * s[:r]) @ Vt[:r]


def recover(
    samples: Sequence[SensingSample],
    spec: ProblemSpec,
    seed: int,
    iota: float = 1e-6,
    M_star: Optional[np.ndarray] = None,
    global_max_iters: int = 100_000,
) -> RecoveryResult:
    """Full pipeline: spectral route when sigma exceeds r * Gamma, otherwise
    the global SOSP phase followed by local refinement."""
    stats = _OracleStats()
    if spec.sigma > spec.r * spec.Gamma:
        M_hat = spectral_recover(samples, spec.eps, spec.r, stats=stats)
        U_final, global_trace, refine_trace, branch = None, None, None, "spectral"
    else:
        U_sosp, global_trace = solve_global(
            samples, spec, seed, max_iters=global_max_iters, stats=stats
        )
        U_final, refine_trace = local_refine(U_sosp, samples, spec, iota, stats=stats)
        M_hat = U_final @ U_final.T
        branch = "optimize"

    frob_error = None
    if M_star is not None:
        frob_error = float(np.linalg.norm(M_hat - M_star, "fro"))
    return RecoveryResult(
        M_hat=M_hat,
        U_final=U_final,
        branch=branch,
        frob_error=frob_error,
        global_trace=global_trace,
        refine_trace=refine_trace,
        robust_rounds=stats.rounds,
    )
