"""Filter-based robust mean estimation under strong contamination.

The estimator repeatedly scores points by their squared projection onto the
top eigenvector of the weighted covariance and down-weights the high scorers,
until the surviving weight mass drops below 1 - 2*eps.  It needs no bound on
the inlier covariance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyInput, EpsOutOfRange, NonFinite

# Exact-degeneracy guard: scores at or below this are treated as zero,
# otherwise a cloud of identical points would spin forever.
_SCORE_FLOOR = 1e-18

# Above this dimension the weighted covariance is never materialized; the top
# eigenvector comes from matrix-free power iteration instead.
_DENSE_EIG_MAX_DIM = 256
_POWER_TOL = 1e-8
_POWER_MAX_ITERS = 1000


@dataclass(frozen=True)
class EstimateResult:
    """Output of the filter: the robust mean plus diagnostics."""

    mean: np.ndarray
    rounds: int
    final_weight_mass: float
    weights: np.ndarray


def _as_point_cloud(points) -> np.ndarray:
    try:
        cloud = np.asarray(points, dtype=float)
    except (ValueError, TypeError) as exc:
        raise DimensionMismatch("points have inconsistent dimensions") from exc
    if cloud.dtype == object or cloud.ndim != 2:
        raise DimensionMismatch("expected an (n, k) array of points")
    if cloud.shape[0] == 0:
        raise EmptyInput("point cloud is empty")
    if not np.all(np.isfinite(cloud)):
        raise NonFinite("point cloud contains NaN or Inf")
    return cloud


def _check_eps(eps: float, lower_open: bool = True) -> None:
    low_ok = eps > 0.0 if lower_open else eps >= 0.0
    if not (low_ok and eps < 0.5):
        raise EpsOutOfRange(f"eps={eps} outside the valid range")


def _top_eigvector_dense(cov: np.ndarray) -> np.ndarray:
    _, vecs = np.linalg.eigh(cov)
    return vecs[:, -1]


def _top_eigvector_power(
    centered: np.ndarray, weights: np.ndarray, mass: float
) -> np.ndarray:
    """Top eigenvector of (1/mass) * centered^T diag(w) centered, matrix-free."""
    k = centered.shape[1]
    rng = np.random.default_rng(0)  # fixed start vector, deterministic
    v = rng.standard_normal(k)
    v /= np.linalg.norm(v)
    weighted = centered * weights[:, None]
    for _ in range(_POWER_MAX_ITERS):
        w = weighted.T @ (centered @ v) / mass
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return v
        w /= norm
        if np.linalg.norm(w - v) <= _POWER_TOL or np.linalg.norm(w + v) <= _POWER_TOL:
            return w
        v = w
    return v


def find_filter_threshold(scores, weights, eps: float) -> float:
    """Largest realized score t with total weight at least eps on {g >= t}.

    Falls back to the minimum score when the total weight is below eps,
    signalling that the filter loop is about to exit.
    """
    scores = np.asarray(scores, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if scores.size == 0:
        raise EmptyInput("no scores")
    if scores.shape != weights.shape:
        raise DimensionMismatch("scores and weights are misaligned")
    _check_eps(eps)

    order = np.argsort(scores)[::-1]
    cum = np.cumsum(weights[order])
    hit = np.nonzero(cum >= eps)[0]
    if hit.size == 0:
        return float(scores.min())
    return float(scores[order[hit[0]]])


def robust_mean_estimate(points, eps: float) -> EstimateResult:
    """Robust mean of an eps-corrupted point cloud, covariance bound unknown.

    Deterministic given the input order.  If at least a (1-eps) fraction of
    the points are i.i.d. with covariance operator norm at most sigma^2, the
    output is within O(sigma * sqrt(eps)) of their mean.
    """
    cloud = _as_point_cloud(points)
    _check_eps(eps)
    n = cloud.shape[0]

    if n * eps < 1.0:
        # Too few points for the filter to remove anything meaningful.
        return EstimateResult(
            mean=cloud.mean(axis=0),
            rounds=0,
            final_weight_mass=1.0,
            weights=np.full(n, 1.0 / n),
        )

    # Zero-weight points never regain weight; the loop works on a compacted
    # copy and scatters the surviving weights back at the end.
    pts = cloud
    idx = np.arange(n)
    w = np.full(n, 1.0 / n)
    mass = 1.0
    dense = cloud.shape[1] <= _DENSE_EIG_MAX_DIM
    rounds = 0
    while mass >= 1.0 - 2.0 * eps and rounds < n:
        mu = (w @ pts) / mass
        if dense:
            cov = pts.T @ (pts * w[:, None]) / mass - np.outer(mu, mu)
            v = _top_eigvector_dense(cov)
        else:
            v = _top_eigvector_power(pts - mu, w, mass)

        proj = pts @ v
        proj -= mu @ v
        scores = proj * proj
        # max over surviving points only; zeroed stragglers may still be here
        f_max = np.where(w > 0.0, scores, 0.0).max()
        if f_max <= _SCORE_FLOOR:
            break  # exactly degenerate cloud, no progress possible

        # largest realized score t with weight >= eps on {score >= t}
        order = np.argsort(scores)[::-1]
        cum = np.cumsum(w[order])
        hit = np.searchsorted(cum, eps)
        t = scores[order[hit]] if hit < cum.size else scores.min()

        flagged = scores >= t
        w[flagged] *= 1.0 - scores[flagged] / f_max
        rounds += 1

        # compact only once enough points have been zeroed to pay for the copy
        zeros = np.count_nonzero(w == 0.0)
        if 4 * zeros >= w.size:
            keep = w > 0.0
            pts, w, idx = pts[keep], w[keep], idx[keep]
        mass = w.sum()

    weights = np.zeros(n)
    weights[idx] = w
    if rounds == 0 or mass <= 0:
        mu = cloud.mean(axis=0)  # weights still uniform: plain mean, exactly
    else:
        mu = (w @ pts) / mass
    return EstimateResult(mean=mu, rounds=rounds, final_weight_mass=float(mass), weights=weights)


def stability_audit(points, mu, sigma2: float, eps: float) -> tuple[float, float]:
    """Greedy worst-case deviations after deleting up to floor(eps*n) points.

    Returns (mean_deviation, cov_deviation): the largest values of
    ||mean(S') - mu|| / sigma and ||M2(S') - sigma^2 I||_op / sigma^2 found
    over a greedy family of high-leverage deletions, where M2 is the second
    moment about mu.  A lower bound on the true combinatorial worst case.
    """
    cloud = _as_point_cloud(points)
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (cloud.shape[1],):
        raise DimensionMismatch("mu has the wrong dimension")
    if not (eps >= 0.0 and eps < 0.5):
        raise EpsOutOfRange(f"eps={eps} outside [0, 1/2)")
    if sigma2 <= 0.0:
        raise EpsOutOfRange("sigma2 must be positive")

    n, k = cloud.shape
    m = int(np.floor(eps * n))
    sigma = np.sqrt(sigma2)
    centered = cloud - mu

    second = centered.T @ centered / n
    top = _top_eigvector_dense(second)
    proj = centered @ top
    dist = np.linalg.norm(centered, axis=1)

    orders = [
        np.argsort(proj)[::-1],  # extreme in +top direction
        np.argsort(proj),        # extreme in -top direction
        np.argsort(dist)[::-1],  # farthest from mu
    ]

    mean_dev = 0.0
    cov_dev = 0.0
    total_sum = centered.sum(axis=0)
    outer = centered[:, :, None] * centered[:, None, :]
    total_outer = outer.sum(axis=0)
    for order in orders:
        removed_sum = np.zeros(k)
        removed_outer = np.zeros((k, k))
        for j in range(m + 1):
            if j > 0:
                idx = order[j - 1]
                removed_sum += centered[idx]
                removed_outer += outer[idx]
            kept = n - j
            if kept == 0:
                break
            mean_rem = (total_sum - removed_sum) / kept
            m2_rem = (total_outer - removed_outer) / kept
            mean_dev = max(mean_dev, np.linalg.norm(mean_rem) / sigma)
            gap = m2_rem - sigma2 * np.eye(k)
            cov_dev = max(cov_dev, np.linalg.norm(gap, 2) / sigma2)
    return mean_dev, cov_dev
