"""Metropolis-Hastings moves with random-walk and Liu/West proposals.

Every function is vectorized over particles: ``theta`` is ``(M, d)`` (a single
``(d,)`` vector is also accepted) and the scaling ``h`` may be a scalar or a
length-M array, one value per particle.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.random import Generator

from .errors import InvalidScaling
from .models import LOG_2PI, Ordering
from .particles import WeightedMoments


class KernelKind(enum.Enum):
    RANDOM_WALK = "rw"
    LIU_WEST = "lw"


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind
    ordering: Ordering = Ordering.NONE
    h: float = 1.0

    def __post_init__(self):
        _check_scaling(self.kind, self.h)

    @property
    def name(self) -> str:
        return kernel_name(self.kind, self.ordering)


def kernel_name(kind: KernelKind, ordering: Ordering) -> str:
    prefix = "RW" if kind is KernelKind.RANDOM_WALK else "LW"
    suffix = {Ordering.BY_MEANS: "-means", Ordering.BY_VARIANCES: "-variances", Ordering.NONE: ""}[ordering]
    return prefix + suffix


def _check_scaling(kind: KernelKind, h) -> None:
    h = np.asarray(h, dtype=float)
    if np.any(~np.isfinite(h)) or np.any(h <= 0):
        raise InvalidScaling("scaling h must be positive and finite")
    if kind is KernelKind.LIU_WEST and np.any(h > 1):
        raise InvalidScaling("Liu/West scaling must lie in (0, 1]")


@dataclass
class MoveRecord:
    """Outcome of one MH transition for each particle.

    ``lam`` is the Mahalanobis squared jump to the *proposed* point;
    ``lam_tilde = acc_prob * lam`` is the unbiased estimate of the expected
    squared jumping distance at this scaling.
    """

    theta_prev: np.ndarray
    theta_proposed: np.ndarray
    theta_next: np.ndarray
    acc_prob: np.ndarray
    lam: np.ndarray
    lam_tilde: np.ndarray
    accepted: np.ndarray
    log_target_next: np.ndarray

    @property
    def jump(self) -> np.ndarray:
        """Realized squared jumping distance (zero for rejected moves)."""
        return np.where(self.accepted, self.lam, 0.0)


def _gaussian_logpdf(x, mean, h, moments: WeightedMoments) -> np.ndarray:
    d = moments.d
    h = np.asarray(h, dtype=float)
    logdet = 2.0 * np.sum(np.log(np.diag(moments.chol)))
    maha = moments.mahalanobis_sq(x - mean)
    return -0.5 * (d * LOG_2PI + logdet + 2.0 * d * np.log(h) + maha / h**2)


def _scaled_noise(shape, h, moments: WeightedMoments, rng: Generator) -> np.ndarray:
    z = rng.standard_normal(shape)
    h = np.asarray(h, dtype=float)
    if h.ndim:
        h = h[:, None]
    return h * (z @ moments.chol.T)


def rw_propose(theta, h, moments: WeightedMoments, rng: Generator) -> np.ndarray:
    """theta + h L z with L the Cholesky factor of the covariance estimate."""
    theta = np.asarray(theta, dtype=float)
    _check_scaling(KernelKind.RANDOM_WALK, h)
    return theta + _scaled_noise(theta.shape, h, moments, rng)


def rw_log_density(theta_from, theta_to, h, moments: WeightedMoments) -> np.ndarray:
    return _gaussian_logpdf(np.asarray(theta_to, dtype=float), np.asarray(theta_from, dtype=float), h, moments)


def lw_mean(theta, h, moments: WeightedMoments) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    alpha = np.sqrt(1.0 - h**2)
    if alpha.ndim:
        alpha = alpha[:, None]
    return alpha * np.asarray(theta, dtype=float) + (1.0 - alpha) * moments.mean


def lw_log_density(theta_from, theta_to, h, moments: WeightedMoments) -> np.ndarray:
    return _gaussian_logpdf(np.asarray(theta_to, dtype=float), lw_mean(theta_from, h, moments), h, moments)


def lw_propose(theta, h, moments: WeightedMoments, rng: Generator):
    """Liu/West proposal N(a theta + (1-a) mean, h^2 Sigma), a = sqrt(1-h^2).

    Returns ``(draw, log_fwd, log_rev)``: the proposal log-density of the draw
    given theta, and of theta given the draw.
    """
    theta = np.asarray(theta, dtype=float)
    _check_scaling(KernelKind.LIU_WEST, h)
    draw = lw_mean(theta, h, moments) + _scaled_noise(theta.shape, h, moments, rng)
    return draw, lw_log_density(theta, draw, h, moments), lw_log_density(draw, theta, h, moments)


def esjd(theta_prev, theta_next, moments: WeightedMoments) -> np.ndarray:
    """Mahalanobis squared jump (prev - next)^T Sigma^-1 (prev - next)."""
    delta = np.asarray(theta_prev, dtype=float) - np.asarray(theta_next, dtype=float)
    return moments.mahalanobis_sq(delta)


def mh_step(
    theta,
    log_target: Callable[[np.ndarray], np.ndarray],
    kernel: KernelSpec,
    moments: WeightedMoments,
    rng: Generator,
    h=None,
    current_log_target=None,
) -> MoveRecord:
    """One Metropolis-Hastings transition for every row of ``theta``.

    ``h`` overrides ``kernel.h`` (e.g. with per-particle scalings).
    ``current_log_target`` saves re-evaluating the target at ``theta``.
    A non-finite target value at the proposal is a rejection.
    """
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    theta = np.atleast_2d(theta)
    h = kernel.h if h is None else h
    if kernel.kind is KernelKind.RANDOM_WALK:
        proposed = rw_propose(theta, h, moments, rng)
        log_q_ratio = 0.0
    else:
        proposed, log_fwd, log_rev = lw_propose(theta, h, moments, rng)
        log_q_ratio = log_rev - log_fwd

    lp_cur = log_target(theta) if current_log_target is None else np.asarray(current_log_target, dtype=float)
    lp_cur = np.broadcast_to(lp_cur, theta.shape[:1])
    with np.errstate(invalid="ignore", over="ignore"):
        lp_prop = np.asarray(log_target(proposed), dtype=float)
        lp_prop = np.where(np.isfinite(lp_prop), lp_prop, -np.inf)
        log_ratio = lp_prop - lp_cur + log_q_ratio
        acc_prob = np.where(np.isnan(log_ratio), 0.0, np.exp(np.minimum(log_ratio, 0.0)))
    accepted = rng.random(theta.shape[0]) < acc_prob
    theta_next = np.where(accepted[:, None], proposed, theta)
    lam = esjd(theta, proposed, moments)
    record = MoveRecord(
        theta_prev=theta,
        theta_proposed=proposed,
        theta_next=theta_next,
        acc_prob=acc_prob,
        lam=lam,
        lam_tilde=acc_prob * lam,
        accepted=accepted,
        log_target_next=np.where(accepted, lp_prop, lp_cur),
    )
    if single:
        return MoveRecord(**{k: v[0] for k, v in record.__dict__.items()})
    return record


def reference_rw_scaling(d: int, constant: float = 2.38) -> float:
    """Asymptotically optimal random-walk scaling constant / sqrt(d)."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    return constant / math.sqrt(d)


def amcmc_scaling(d: int) -> float:
    return reference_rw_scaling(d, 2.4)
