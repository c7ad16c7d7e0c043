"""Weighted particle bookkeeping: log-weights, ESS, resampling and moments.

All weights are carried in log space. Resamplers return indices sorted in
ascending order so that the relabelling that follows a resampling step is a
deterministic map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Generator
from scipy.linalg import solve_triangular

from .errors import AllWeightsDegenerate, CovarianceNotFactorizable, DimensionMismatch

# Relative eigenvalue floor below which a covariance estimate is jittered.
EIG_FLOOR = 1e-12
JITTER_SCALE = 1e-8
MAX_JITTER_DOUBLINGS = 20


@dataclass
class ParticleSystem:
    """M particles in R^d with unnormalized log-weights."""

    particles: np.ndarray
    log_weights: np.ndarray

    def __post_init__(self):
        self.particles = np.atleast_2d(np.asarray(self.particles, dtype=float))
        self.log_weights = np.asarray(self.log_weights, dtype=float).reshape(-1)
        if self.particles.shape[0] != self.log_weights.shape[0]:
            raise DimensionMismatch(
                f"{self.particles.shape[0]} particles but "
                f"{self.log_weights.shape[0]} log-weights"
            )
        if self.particles.shape[1] < 1:
            raise DimensionMismatch("particle dimension must be at least 1")

    @classmethod
    def equally_weighted(cls, particles) -> ParticleSystem:
        particles = np.atleast_2d(np.asarray(particles, dtype=float))
        return cls(particles, np.zeros(particles.shape[0]))

    @property
    def M(self) -> int:
        return self.particles.shape[0]

    @property
    def d(self) -> int:
        return self.particles.shape[1]

    def weights(self) -> np.ndarray:
        return normalize_log_weights(self.log_weights)[0]


@dataclass(frozen=True)
class WeightedMoments:
    """Weighted mean and (possibly jittered) covariance of a particle set.

    ``chol`` is the lower Cholesky factor of ``covariance``.
    """

    mean: np.ndarray
    covariance: np.ndarray
    chol: np.ndarray
    regularized: bool = False

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def from_covariance(cls, mean, covariance) -> WeightedMoments:
        mean = np.asarray(mean, dtype=float).reshape(-1)
        cov = np.asarray(covariance, dtype=float)
        if cov.shape != (mean.shape[0], mean.shape[0]):
            raise DimensionMismatch(
                f"covariance shape {cov.shape} does not match mean of length {mean.shape[0]}"
            )
        cov, chol, regularized = regularize_covariance(cov)
        return cls(mean, cov, chol, regularized)

    def mahalanobis_sq(self, delta: np.ndarray) -> np.ndarray:
        """Squared Mahalanobis norm of each row of ``delta`` (Cholesky solve)."""
        delta = np.asarray(delta, dtype=float)
        if delta.shape[-1] != self.d:
            raise DimensionMismatch(f"expected vectors of length {self.d}, got {delta.shape[-1]}")
        flat = delta.reshape(-1, self.d)
        # L^{-1} delta^T, one triangular solve for all rows
        z = _solve_lower(self.chol, flat.T)
        return np.sum(z * z, axis=0).reshape(delta.shape[:-1])


def _solve_lower(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    return solve_triangular(L, b, lower=True, check_finite=False)


def normalize_log_weights(log_weights) -> tuple[np.ndarray, float]:
    """Return normalized weights and the log normalizing constant.

    Uses the max-subtraction log-sum-exp. Raises ``AllWeightsDegenerate``
    when no entry is finite.
    """
    lw = np.asarray(log_weights, dtype=float).reshape(-1)
    finite = np.isfinite(lw)
    if not finite.any() or np.isnan(lw).any() or np.any(lw == np.inf):
        raise AllWeightsDegenerate("no finite log-weight to normalize")
    m = lw[finite].max()
    w = np.exp(lw - m)
    s = w.sum()
    return w / s, float(m + np.log(s))


def ess(weights) -> float:
    """Effective sample size 1 / sum(w^2) of normalized weights."""
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.dot(w, w))


def _clean_probs(weights) -> np.ndarray:
    w = np.clip(np.asarray(weights, dtype=float).reshape(-1), 0.0, None)
    s = w.sum()
    if not np.isfinite(s) or s <= 0:
        raise AllWeightsDegenerate("resampling weights sum to zero")
    return w / s


def multinomial_resample(weights, count: int, rng: Generator) -> np.ndarray:
    """Draw ``count`` iid categorical(weights) indices, returned sorted."""
    p = _clean_probs(weights)
    counts = rng.multinomial(count, p)
    return np.repeat(np.arange(p.shape[0]), counts)


def residual_resample(weights, count: int, rng: Generator) -> np.ndarray:
    """Residual resampling: floor(count * w_j) deterministic copies of each
    index, the remainder drawn multinomially from the residual weights."""
    p = _clean_probs(weights)
    expected = count * p
    counts = np.floor(expected).astype(np.int64)
    remainder = count - int(counts.sum())
    if remainder > 0:
        residual = expected - counts
        counts += rng.multinomial(remainder, residual / residual.sum())
    return np.repeat(np.arange(p.shape[0]), counts)


RESAMPLERS = {
    "residual": residual_resample,
    "multinomial": multinomial_resample,
}


def regularize_covariance(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    """Symmetrize ``cov`` and add jitter until it is Cholesky-factorizable.

    Jitter starts at 1e-8 * max(trace/d, 1) and doubles, at most 20 times.
    Returns ``(covariance, cholesky_factor, regularized)``.
    """
    cov = 0.5 * (cov + cov.T)
    d = cov.shape[0]
    scale = max(np.trace(cov) / d, 1.0)
    if not np.all(np.isfinite(cov)):
        raise CovarianceNotFactorizable("covariance estimate contains non-finite entries")
    eig_min = np.linalg.eigvalsh(cov)[0]
    regularized = eig_min < EIG_FLOOR * max(np.trace(cov) / d, np.finfo(float).tiny)
    if not regularized:
        try:
            return cov, np.linalg.cholesky(cov), False
        except np.linalg.LinAlgError:
            pass
    lam = JITTER_SCALE * scale
    eye = np.eye(d)
    for _ in range(MAX_JITTER_DOUBLINGS + 1):
        jittered = cov + lam * eye
        try:
            return jittered, np.linalg.cholesky(jittered), True
        except np.linalg.LinAlgError:
            lam *= 2.0
    raise CovarianceNotFactorizable(f"Cholesky failed after jitter up to {lam / 2:g}")


def weighted_moments(system: ParticleSystem) -> WeightedMoments:
    """Weighted mean and covariance of a particle system, jittered if singular."""
    if system.M < 2:
        raise DimensionMismatch("weighted moments need at least two particles")
    w = system.weights()
    x = system.particles
    mean = w @ x
    centred = x - mean
    cov = (centred * w[:, None]).T @ centred
    return WeightedMoments.from_covariance(mean, cov)


def equal_weight_moments(particles: np.ndarray) -> WeightedMoments:
    return weighted_moments(ParticleSystem.equally_weighted(particles))
