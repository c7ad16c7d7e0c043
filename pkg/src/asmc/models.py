"""Data-tempered posterior targets.

A target exposes the prior, the per-observation log-likelihood increments and
the cumulative log posterior of the sequence pi_t(theta) = pi(theta | y_1:t).
All density methods are vectorized: ``theta`` may be a single vector of
length ``dim`` or an ``(M, dim)`` array, and the result has the matching
leading shape.

Two concrete targets are provided: the Gaussian mean model (5-d by default)
and the r-component univariate Gaussian mixture.

Mixture parameter layout
------------------------
theta = [logit weights (r-1) | log variances (r) | means (r)], with
logit_j = log(p_j / p_r). The reference component is the last one of
whatever labelling theta currently carries.
"""

from __future__ import annotations

import enum
import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator

from .errors import DimensionMismatch, UnknownDataset

LOG_2PI = math.log(2.0 * math.pi)


class Ordering(enum.Enum):
    BY_MEANS = "means"
    BY_VARIANCES = "variances"
    NONE = "none"


def logsumexp(a, axis=-1, keepdims=False):
    """Max-shifted log-sum-exp; rows that are all -inf give -inf."""
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return out if keepdims else np.squeeze(out, axis=axis)


def _norm_logpdf(x, mean, var):
    return -0.5 * (LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


class SequentialTarget:
    """Base class for the data-tempered sequence of posteriors.

    Subclasses implement ``log_prior``, ``log_lik_increment`` (``t`` is
    1-based) and ``sample_prior``; ``log_posterior_upto`` has a default that
    sums the increments.
    """

    dim: int
    n_obs: int

    def log_prior(self, theta) -> np.ndarray:
        raise NotImplementedError

    def log_lik_increment(self, theta, t: int) -> np.ndarray:
        raise NotImplementedError

    def sample_prior(self, rng: Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def log_posterior_upto(self, theta, t: int) -> np.ndarray:
        out = self.log_prior(theta)
        for s in range(1, t + 1):
            out = out + self.log_lik_increment(theta, s)
        return out

    def prior_covariance(self) -> np.ndarray:
        raise NotImplementedError

    def relabel(self, theta, ordering: Ordering) -> np.ndarray:
        if ordering is not Ordering.NONE:
            raise ValueError(f"{type(self).__name__} has no component labels to order")
        return np.asarray(theta, dtype=float)

    def supports_ordering(self) -> bool:
        return False

    def predictive_pdf(self, y_grid, theta) -> np.ndarray:
        """Density of a new scalar observation at each grid point, for each
        theta row; shape ``(M, len(y_grid))``."""
        raise NotImplementedError

    def _check(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape[-1] != self.dim:
            raise DimensionMismatch(f"expected parameter dimension {self.dim}, got {theta.shape[-1]}")
        return theta


# --------------------------------------------------------------------------
# Gaussian mean model


class GaussianMeanTarget(SequentialTarget):
    """y_t ~ N(theta, I_d) with prior theta ~ N(0, prior_var I_d)."""

    def __init__(self, y, prior_var: float = 5.0):
        y = np.asarray(y, dtype=float)
        if y.ndim == 1 and y.size == 0:
            y = y.reshape(0, 5)
        if y.ndim != 2:
            raise DimensionMismatch("observations must be an (n, d) array")
        if prior_var <= 0:
            raise ValueError("prior_var must be positive")
        self.y = y
        self.prior_var = float(prior_var)
        self.n_obs, self.dim = y.shape
        self._cumsum = np.vstack([np.zeros(self.dim), np.cumsum(y, axis=0)])
        self._cumsq = np.concatenate([[0.0], np.cumsum(np.sum(y**2, axis=1))])

    def log_prior(self, theta):
        theta = self._check(theta)
        return -0.5 * (self.dim * (LOG_2PI + math.log(self.prior_var)) + np.sum(theta**2, axis=-1) / self.prior_var)

    def log_lik_increment(self, theta, t):
        theta = self._check(theta)
        r = theta - self.y[t - 1]
        return -0.5 * (self.dim * LOG_2PI + np.sum(r * r, axis=-1))

    def log_posterior_upto(self, theta, t):
        # sum_s |y_s - theta|^2 from running sums
        theta = self._check(theta)
        sq = self._cumsq[t] - 2.0 * (theta @ self._cumsum[t]) + t * np.sum(theta**2, axis=-1)
        return self.log_prior(theta) - 0.5 * (t * self.dim * LOG_2PI + sq)

    def sample_prior(self, rng, size):
        return math.sqrt(self.prior_var) * rng.standard_normal((size, self.dim))

    def prior_covariance(self):
        return self.prior_var * np.eye(self.dim)

    def predictive_pdf(self, y_grid, theta):
        # first coordinate of a new observation
        theta = np.atleast_2d(self._check(theta))
        grid = np.asarray(y_grid, dtype=float)
        return np.exp(_norm_logpdf(grid[None, :], theta[:, :1], 1.0))


def gaussian_mean_target(y, prior_var: float = 5.0) -> GaussianMeanTarget:
    return GaussianMeanTarget(y, prior_var)


def simulate_gaussian(n: int = 100, rng: Generator | None = None, theta=None, d: int = 5) -> np.ndarray:
    """n iid N(theta, I_d) observations (theta defaults to zero)."""
    rng = np.random.default_rng() if rng is None else rng
    theta = np.zeros(d) if theta is None else np.asarray(theta, dtype=float)
    return theta + rng.standard_normal((n, theta.shape[0]))


def kalman_posterior(y, prior_var: float = 5.0) -> tuple[np.ndarray, np.ndarray]:
    """Exact posterior mean and covariance of the Gaussian mean model."""
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y.reshape(-1, 5) if y.size else np.zeros((0, 5))
    n, d = y.shape
    var = 1.0 / (1.0 / prior_var + n)
    return var * y.sum(axis=0), var * np.eye(d)


# --------------------------------------------------------------------------
# Gaussian mixture model

PRIOR_LOGIT = (0.0, 1.0)
PRIOR_LOGVAR = (-1.5, 1.3)
PRIOR_MEAN = (0.0, 0.75)


@dataclass(frozen=True)
class MixtureSpec:
    weights: tuple[float, ...]
    means: tuple[float, ...]
    variances: tuple[float, ...]

    def __post_init__(self):
        p = np.asarray(self.weights, dtype=float)
        if not (len(self.weights) == len(self.means) == len(self.variances)):
            raise DimensionMismatch("weights, means and variances must have equal length")
        if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be positive and sum to 1")
        if np.any(np.asarray(self.variances) <= 0):
            raise ValueError("mixture variances must be positive")

    @property
    def r(self) -> int:
        return len(self.weights)

    @classmethod
    def from_arrays(cls, weights, means, variances) -> MixtureSpec:
        p = np.asarray(weights, dtype=float)
        p = p / p.sum()
        return cls(tuple(map(float, p)), tuple(map(float, means)), tuple(map(float, variances)))


def mixture_log_lik(spec: MixtureSpec, y) -> np.ndarray:
    """log sum_j p_j N(y; mu_j, v_j) for scalar or array ``y``."""
    y = np.asarray(y, dtype=float)
    p = np.asarray(spec.weights)
    mu = np.asarray(spec.means)
    v = np.asarray(spec.variances)
    terms = np.log(p) + _norm_logpdf(y[..., None], mu, v)
    return logsumexp(terms, axis=-1)


def mixture_dim(r: int) -> int:
    return 3 * r - 1


def _r_from_dim(d: int) -> int:
    if (d + 1) % 3:
        raise DimensionMismatch(f"dimension {d} is not of the form 3r-1")
    return (d + 1) // 3


def split_theta(theta) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Natural parameters (log p, v, mu) from transformed theta, vectorized."""
    theta = np.asarray(theta, dtype=float)
    r = _r_from_dim(theta.shape[-1])
    logits = theta[..., : r - 1]
    ext = np.concatenate([logits, np.zeros(theta.shape[:-1] + (1,))], axis=-1)
    logp = ext - logsumexp(ext, axis=-1, keepdims=True)
    return logp, np.exp(theta[..., r - 1 : 2 * r - 1]), theta[..., 2 * r - 1 :]


def join_theta(logp, logv, mu) -> np.ndarray:
    logp = np.asarray(logp, dtype=float)
    logits = logp[..., :-1] - logp[..., -1:]
    return np.concatenate([logits, np.asarray(logv, dtype=float), np.asarray(mu, dtype=float)], axis=-1)


def transform(spec: MixtureSpec) -> np.ndarray:
    return join_theta(np.log(spec.weights), np.log(spec.variances), spec.means)


def inverse_transform(theta) -> MixtureSpec:
    theta = np.asarray(theta, dtype=float).reshape(-1)
    logp, v, mu = split_theta(theta)
    return MixtureSpec.from_arrays(np.exp(logp), mu, v)


def mixture_prior_logdensity(theta) -> np.ndarray:
    """Independent Gaussian prior on the transformed coordinates."""
    theta = np.asarray(theta, dtype=float)
    r = _r_from_dim(theta.shape[-1])
    loc, scale = _prior_loc_scale(r)
    return np.sum(_norm_logpdf(theta, loc, scale**2), axis=-1)


@functools.lru_cache(maxsize=None)
def _prior_loc_scale(r: int) -> tuple[np.ndarray, np.ndarray]:
    loc = np.concatenate([np.full(r - 1, PRIOR_LOGIT[0]), np.full(r, PRIOR_LOGVAR[0]), np.full(r, PRIOR_MEAN[0])])
    scale = np.concatenate([np.full(r - 1, PRIOR_LOGIT[1]), np.full(r, PRIOR_LOGVAR[1]), np.full(r, PRIOR_MEAN[1])])
    loc.flags.writeable = False
    scale.flags.writeable = False
    return loc, scale


def sample_mixture_prior(rng: Generator, r: int, size: int | None = None) -> np.ndarray:
    loc, scale = _prior_loc_scale(r)
    shape = (mixture_dim(r),) if size is None else (size, mixture_dim(r))
    return loc + scale * rng.standard_normal(shape)


def permute_components(theta, perm) -> np.ndarray:
    """Apply one component permutation (same for every row) to theta."""
    logp, v, mu = split_theta(theta)
    perm = list(perm)
    return join_theta(logp[..., perm], np.log(v[..., perm]), mu[..., perm])


def relabel(theta, ordering: Ordering) -> np.ndarray:
    """Sort components jointly by mean or variance (stable), re-transforming
    so the reference component is the last after sorting."""
    theta = np.asarray(theta, dtype=float)
    if ordering is Ordering.NONE:
        return theta.copy()
    logp, v, mu = split_theta(theta)
    key = mu if ordering is Ordering.BY_MEANS else v
    order = np.argsort(key, axis=-1, kind="stable")
    take = lambda a: np.take_along_axis(a, order, axis=-1)  # noqa: E731
    out = join_theta(take(logp), np.log(take(v)), take(mu))
    # already-sorted rows are returned bit-identical
    unchanged = np.all(order == np.arange(key.shape[-1]), axis=-1)
    return np.where(unchanged[..., None], theta, out)


class MixtureTarget(SequentialTarget):
    """Univariate r-component Gaussian mixture posterior on transformed theta.

    With ``symmetric_prior`` (the default) the prior is averaged over the r!
    component permutations, which leaves the r = 2 prior unchanged and makes
    the posterior exactly label-invariant for every r, so relabelling moves
    preserve the target.
    """

    def __init__(self, y, r: int, symmetric_prior: bool = True):
        self.y = np.asarray(y, dtype=float).reshape(-1)
        self.r = int(r)
        self.dim = mixture_dim(self.r)
        self.n_obs = self.y.shape[0]
        self.symmetric_prior = symmetric_prior
        self._perms = list(itertools.permutations(range(self.r)))

    def log_prior(self, theta):
        theta = self._check(theta)
        if not self.symmetric_prior or self.r == 1:
            return mixture_prior_logdensity(theta)
        r = self.r
        loc, scale = _prior_loc_scale(r)
        rest = np.sum(_norm_logpdf(theta[..., r - 1 :], loc[r - 1 :], scale[r - 1 :] ** 2), axis=-1)
        # Under a permutation only the reference component of the logits
        # matters, so average over the r choices of reference k:
        # logits_j = log p_j - log p_k, j != k.
        logp = split_theta(theta)[0]
        diffs = logp[..., :, None] - logp[..., None, :]
        m, s = PRIOR_LOGIT
        per_ref = np.sum(_norm_logpdf(diffs, m, s * s), axis=-2) - _norm_logpdf(0.0, m, s * s)
        return rest + logsumexp(per_ref, axis=-1) - math.log(r)

    def _component_terms(self, theta, y):
        logp, v, mu = split_theta(theta)
        # (..., len(y), r)
        return logp[..., None, :] + _norm_logpdf(y[:, None], mu[..., None, :], v[..., None, :])

    def log_lik_increment(self, theta, t):
        theta = self._check(theta)
        return logsumexp(self._component_terms(theta, self.y[t - 1 : t]), axis=-1)[..., 0]

    def log_lik_upto(self, theta, t):
        theta = self._check(theta)
        if t == 0:
            return np.zeros(theta.shape[:-1])
        return np.sum(logsumexp(self._component_terms(theta, self.y[:t]), axis=-1), axis=-1)

    def log_posterior_upto(self, theta, t):
        return self.log_prior(theta) + self.log_lik_upto(theta, t)

    def sample_prior(self, rng, size):
        draws = sample_mixture_prior(rng, self.r, size)
        if not self.symmetric_prior or self.r == 1:
            return draws
        # the symmetrized prior is the uniform mixture over permuted draws
        which = rng.integers(len(self._perms), size=size)
        out = draws.copy()
        for k, p in enumerate(self._perms):
            rows = which == k
            if rows.any():
                out[rows] = permute_components(draws[rows], p)
        return out

    def prior_covariance(self):
        return np.diag(_prior_loc_scale(self.r)[1] ** 2)

    def relabel(self, theta, ordering):
        return relabel(self._check(theta), ordering)

    def supports_ordering(self):
        return True

    def predictive_pdf(self, y_grid, theta):
        theta = np.atleast_2d(self._check(theta))
        grid = np.asarray(y_grid, dtype=float)
        return np.exp(logsumexp(self._component_terms(theta, grid), axis=-1))


# --------------------------------------------------------------------------
# Simulated datasets

DATASETS: dict[int, MixtureSpec] = {
    1: MixtureSpec((0.5, 0.5), (-0.25, 0.25), (0.5**2, 0.5**2)),
    2: MixtureSpec((0.5, 0.5), (0.0, 0.0), (1.0**2, 0.1**2)),
    3: MixtureSpec((0.3, 0.7), (-1.0, 1.0), (0.5**2, 0.5**2)),
    4: MixtureSpec((0.5, 0.5), (-0.75, 0.75), (0.1**2, 0.1**2)),
    5: MixtureSpec((0.35, 0.3, 0.35), (-0.1, 0.0, 0.1), (0.1**2, 0.5**2, 1.0**2)),
    6: MixtureSpec((0.25, 0.5, 0.25), (-0.5, 0.0, 0.5), (0.1**2, 0.2**2, 0.1**2)),
}


def dataset_spec(k: int) -> MixtureSpec:
    try:
        return DATASETS[int(k)]
    except (KeyError, ValueError):
        raise UnknownDataset(f"unknown dataset {k!r}; choose one of {sorted(DATASETS)}") from None


def sample_mixture(spec: MixtureSpec, n: int, rng: Generator) -> np.ndarray:
    comp = rng.choice(spec.r, size=n, p=np.asarray(spec.weights))
    return np.asarray(spec.means)[comp] + np.sqrt(np.asarray(spec.variances))[comp] * rng.standard_normal(n)


def simulate_dataset(k: int, n: int = 100, rng: Generator | None = None) -> np.ndarray:
    """n iid draws from the likelihood of dataset k (1..6)."""
    spec = dataset_spec(k)
    rng = np.random.default_rng() if rng is None else rng
    return sample_mixture(spec, n, rng)
