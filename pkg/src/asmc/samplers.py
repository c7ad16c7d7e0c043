"""IBIS, adaptive SMC and adaptive-Metropolis runs.

Every run is deterministic given ``RunConfig.seed``. The seed is split into
independent streams (particles, tuning population, observation order) so that
an adaptive run whose tuning population cannot change follows exactly the
same particle trajectory as the equivalent IBIS run.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator

from .adaptation import (
    DEFAULT_JITTER_SD,
    KernelMenu,
    MenuEntry,
    TuningPopulation,
    freeze_on_no_move,
    init_population,
    score,
    update,
)
from .kernels import KernelKind, KernelSpec, MoveRecord, amcmc_scaling, esjd, mh_step, reference_rw_scaling
from .models import Ordering, SequentialTarget
from .particles import RESAMPLERS, ParticleSystem, WeightedMoments, equal_weight_moments, ess, normalize_log_weights


class Method(str, enum.Enum):
    RW_FIXED = "RWfixed"
    RW_ADAPTIVE = "RWadaptive"
    LW_MEAN = "LWmean"
    LW_VARIANCE = "LWvariance"
    KMIX = "Kmix"
    AMCMC = "AMCMC"

    @classmethod
    def parse(cls, value) -> Method:
        if isinstance(value, cls):
            return value
        for m in cls:
            if m.value.lower() == str(value).lower():
                return m
        raise ValueError(f"unknown method {value!r}; choose from {[m.value for m in cls]}")


SMC_METHODS = (Method.RW_FIXED, Method.RW_ADAPTIVE, Method.LW_MEAN, Method.LW_VARIANCE, Method.KMIX)


@dataclass
class RunConfig:
    method: Method = Method.KMIX
    M: int = 2000
    ess_threshold_fraction: float = 0.5
    seed: int = 0
    a: float = 0.0
    jitter_sd: float = DEFAULT_JITTER_SD
    resampler: str = "residual"
    force_final_move: bool = True
    shuffle_observations: bool = True
    moves_per_step: int = 1
    score_statistic: str = "lambda_tilde"
    keep_population_snapshots: bool = False
    amcmc_iterations: int | None = None

    # ``shuffle_observations`` is honoured by the drivers that build targets
    # (CLI, study harness) using the "shuffle" stream; samplers take the
    # target's observation order as given.

    def __post_init__(self):
        self.method = Method.parse(self.method)
        if not 0.0 < self.ess_threshold_fraction <= 1.0:
            raise ValueError("ess_threshold_fraction must lie in (0, 1]")
        if self.M < 2:
            raise ValueError("need at least two particles")
        if self.resampler not in RESAMPLERS:
            raise ValueError(f"unknown resampler {self.resampler!r}")
        if self.moves_per_step < 1:
            raise ValueError("moves_per_step must be at least 1")

    def streams(self) -> dict[str, Generator]:
        children = np.random.SeedSequence(self.seed).spawn(3)
        return {name: np.random.default_rng(s) for name, s in zip(("particles", "tuning", "shuffle"), children)}


@dataclass
class MoveStepStats:
    iteration: int
    acc_prob_mean: float
    acc_rate: float
    jd_mean: float
    lam_mean: float
    lam_tilde_mean: float


@dataclass
class RunTrace:
    kernel_names: list[str]
    ess: list[float] = field(default_factory=list)
    resampled: list[bool] = field(default_factory=list)
    h_means: list[np.ndarray] = field(default_factory=list)
    proportions: list[np.ndarray] = field(default_factory=list)
    moves: dict[int, MoveStepStats] = field(default_factory=dict)
    final: ParticleSystem | None = None
    final_population: TuningPopulation | None = None
    final_record: MoveRecord | None = None
    population_snapshots: list[tuple[int, np.ndarray, np.ndarray, np.ndarray]] = field(default_factory=list)

    @property
    def n_moves(self) -> int:
        return len(self.moves)

    def last_move(self) -> MoveStepStats | None:
        return self.moves[max(self.moves)] if self.moves else None

    def columns(self) -> list[str]:
        cols = ["iter", "ess", "resampled", "acc_prob_mean", "acc_rate", "jd_mean"]
        for name in self.kernel_names:
            cols += [f"h_mean[{name}]", f"proportion[{name}]"]
        return cols

    def rows(self) -> list[list]:
        out = []
        for i, (e, res) in enumerate(zip(self.ess, self.resampled)):
            t = i + 1
            mv = self.moves.get(t)
            row = [t, e, int(res)]
            row += [mv.acc_prob_mean, mv.acc_rate, mv.jd_mean] if mv else [None, None, None]
            for hm, pr in zip(self.h_means[i], self.proportions[i]):
                row += [None if np.isnan(hm) else float(hm), float(pr)]
            out.append(row)
        return out


# --------------------------------------------------------------------------
# menus for the named methods


def method_menu(method: Method, target: SequentialTarget, h_bounds: dict | None = None) -> KernelMenu:
    """Kernel menu of an adaptive method; orderings collapse to NONE for
    targets without component labels."""
    method = Method.parse(method)
    by_means = Ordering.BY_MEANS if target.supports_ordering() else Ordering.NONE
    by_vars = Ordering.BY_VARIANCES if target.supports_ordering() else Ordering.NONE
    rw = KernelKind.RANDOM_WALK
    lw = KernelKind.LIU_WEST
    h_bounds = h_bounds or {}
    make = lambda kind, order: MenuEntry(kind, order, h_bounds.get(kind))  # noqa: E731
    menus = {
        Method.RW_ADAPTIVE: [make(rw, by_means)],
        Method.LW_MEAN: [make(lw, by_means)],
        Method.LW_VARIANCE: [make(lw, by_vars)],
        Method.KMIX: [make(rw, by_means), make(lw, by_means), make(lw, by_vars)],
    }
    if method not in menus:
        raise ValueError(f"{method.value} is not an adaptive SMC method")
    return KernelMenu(tuple(menus[method]))


def fixed_kernel(target: SequentialTarget) -> KernelSpec:
    """The RWfixed kernel: random walk with scaling 2.38 / sqrt(d)."""
    order = Ordering.BY_MEANS if target.supports_ordering() else Ordering.NONE
    return KernelSpec(KernelKind.RANDOM_WALK, order, reference_rw_scaling(target.dim))


# --------------------------------------------------------------------------
# SMC engine


def _move_step(target, t, theta, logpost, population: TuningPopulation, rng) -> MoveRecord:
    menu = population.menu
    moments: dict[Ordering, tuple[np.ndarray, WeightedMoments]] = {}
    for o in menu.orderings():
        relabelled = target.relabel(theta, o)
        moments[o] = (relabelled, equal_weight_moments(relabelled))

    def log_target(x):
        return target.log_posterior_upto(x, t)

    M, d = theta.shape
    rec = MoveRecord(
        theta_prev=np.empty((M, d)),
        theta_proposed=np.empty((M, d)),
        theta_next=np.empty((M, d)),
        acc_prob=np.empty(M),
        lam=np.empty(M),
        lam_tilde=np.empty(M),
        accepted=np.empty(M, dtype=bool),
        log_target_next=np.empty(M),
    )
    for i, entry in enumerate(menu.entries):
        rows = population.kernel_ids == i
        if not rows.any():
            continue
        relabelled, mom = moments[entry.ordering]
        part = mh_step(
            relabelled[rows],
            log_target,
            entry.spec(),
            mom,
            rng,
            h=population.h[rows],
            current_log_target=logpost[rows],
        )
        for name, value in part.__dict__.items():
            getattr(rec, name)[rows] = value
    return rec


def _merge_records(records: list[MoveRecord]) -> tuple[MoveRecord, np.ndarray, np.ndarray]:
    """Last record, plus mean lam and lam_tilde over repeated moves."""
    lam = np.mean([r.lam for r in records], axis=0)
    lam_tilde = np.mean([r.lam_tilde for r in records], axis=0)
    return records[-1], lam, lam_tilde


def _smc(target: SequentialTarget, population: TuningPopulation, config: RunConfig, adapt: bool) -> RunTrace:
    streams = config.streams()
    rng, tuning_rng = streams["particles"], streams["tuning"]
    if adapt:
        population = init_population(
            population.menu, config.M, tuning_rng, config.jitter_sd, config.a, config.score_statistic
        )
    resample = RESAMPLERS[config.resampler]
    M, n = config.M, target.n_obs
    trace = RunTrace(kernel_names=population.menu.names)

    theta = target.sample_prior(rng, M)
    logpost = target.log_prior(theta)
    logw = np.zeros(M)
    threshold = config.ess_threshold_fraction * M

    for t in range(1, n + 1):
        inc = target.log_lik_increment(theta, t)
        logw = logw + inc
        logpost = logpost + inc
        weights, _ = normalize_log_weights(logw)
        e = ess(weights)
        do_move = e < threshold or (t == n and config.force_final_move)
        trace.ess.append(e)
        trace.resampled.append(bool(do_move))
        if do_move:
            idx = resample(weights, M, rng)
            theta, logpost = theta[idx], logpost[idx]
            logw = np.zeros(M)
            records = []
            for _ in range(config.moves_per_step):
                rec = _move_step(target, t, theta, logpost, population, rng)
                theta, logpost = rec.theta_next, rec.log_target_next
                records.append(rec)
            last, lam, lam_tilde = _merge_records(records)
            trace.moves[t] = MoveStepStats(
                iteration=t,
                acc_prob_mean=float(np.mean([r.acc_prob.mean() for r in records])),
                acc_rate=float(np.mean([r.accepted.mean() for r in records])),
                jd_mean=float(np.mean([r.jump.mean() for r in records])),
                lam_mean=float(lam.mean()),
                lam_tilde_mean=float(lam_tilde.mean()),
            )
            trace.final_record = last
            if adapt:
                stats = MoveRecord(**{**last.__dict__, "lam": lam, "lam_tilde": lam_tilde})
                population = update(population, score(population, stats), tuning_rng)
            if config.keep_population_snapshots:
                scores = population.scores if population.scores is not None else np.full(M, np.nan)
                trace.population_snapshots.append((t, population.kernel_ids.copy(), population.h.copy(), scores))
        else:
            population = freeze_on_no_move(population)
        trace.h_means.append(population.h_means())
        trace.proportions.append(population.proportions())

    trace.final = ParticleSystem(theta, logw)
    trace.final_population = population
    return trace


def ibis_run(target: SequentialTarget, kernel: KernelSpec, config: RunConfig) -> RunTrace:
    """Non-adaptive SMC: every particle moves with the same fixed kernel."""
    menu = KernelMenu((MenuEntry(kernel.kind, kernel.ordering, (kernel.h, kernel.h)),))
    population = TuningPopulation(
        menu, np.zeros(config.M, dtype=np.int64), np.full(config.M, float(kernel.h)), jitter_sd=0.0, a=config.a
    )
    return _smc(target, population, config, adapt=False)


def asmc_run(target: SequentialTarget, menu: KernelMenu, config: RunConfig) -> RunTrace:
    """Adaptive SMC: each particle carries a (kernel, h) pair learnt online."""
    placeholder = TuningPopulation(menu, np.zeros(config.M, dtype=np.int64), np.ones(config.M))
    return _smc(target, placeholder, config, adapt=True)


def smc_run(target: SequentialTarget, config: RunConfig, h_bounds: dict | None = None) -> RunTrace:
    """Dispatch a named SMC/ASMC method."""
    if config.method is Method.RW_FIXED:
        return ibis_run(target, fixed_kernel(target), config)
    return asmc_run(target, method_menu(config.method, target, h_bounds), config)


# --------------------------------------------------------------------------
# adaptive Metropolis baseline

AMCMC_NONADAPTIVE = 1000
AMCMC_REFRESH = 100


def default_amcmc_iterations(d: int) -> int:
    return {5: 12000, 8: 30000}.get(d, 12000)


@dataclass
class AMCMCResult:
    samples: np.ndarray
    h: float
    acc_prob_mean: float
    acc_rate: float
    jd_mean: float
    burn_in: int
    final_covariance: np.ndarray


def amcmc_run(target: SequentialTarget, config: RunConfig) -> AMCMCResult:
    """Random-walk Metropolis with covariance learnt from the chain history.

    The proposal covariance is h^2 times the prior covariance for the first
    1000 iterations, then h^2 times the covariance of the whole chain so far,
    refreshed every 100 iterations. The chain is kept ordered by means when
    the target has component labels. The first half is burn-in.
    """
    rng = config.streams()["particles"]
    d, n = target.dim, target.n_obs
    N = config.amcmc_iterations or default_amcmc_iterations(d)
    burn = N // 2
    h = amcmc_scaling(d)
    order = Ordering.BY_MEANS if target.supports_ordering() else Ordering.NONE

    moments = WeightedMoments.from_covariance(np.zeros(d), target.prior_covariance())
    theta = target.relabel(target.sample_prior(rng, 1)[0], order)
    lp = float(target.log_posterior_upto(theta, n))
    z = rng.standard_normal((N, d))
    u = rng.random(N)
    chain = np.empty((N, d))
    acc = np.empty(N)
    accepted = np.empty(N, dtype=bool)
    jumps = np.empty(N)
    for i in range(N):
        if i >= AMCMC_NONADAPTIVE and i % AMCMC_REFRESH == 0:
            moments = WeightedMoments.from_covariance(chain[:i].mean(axis=0), np.cov(chain[:i], rowvar=False))
        proposal = theta + h * (moments.chol @ z[i])
        lp_prop = float(target.log_posterior_upto(proposal, n))
        if not math.isfinite(lp_prop):
            a = 0.0
        else:
            a = math.exp(min(0.0, lp_prop - lp))
        acc[i] = a
        accepted[i] = u[i] < a
        if accepted[i]:
            jumps[i] = float(esjd(theta, proposal, moments))
            theta = target.relabel(proposal, order)
            lp = lp_prop
        else:
            jumps[i] = 0.0
        chain[i] = theta
    return AMCMCResult(
        samples=chain[burn:],
        h=h,
        acc_prob_mean=float(acc[burn:].mean()),
        acc_rate=float(accepted[burn:].mean()),
        jd_mean=float(jumps[burn:].mean()),
        burn_in=burn,
        final_covariance=moments.covariance,
    )
