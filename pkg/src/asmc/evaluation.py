"""Predictive densities, VPD, replication studies and g(h) curve estimation."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.random import Generator

from .errors import ASMCError, TooFewRuns
from .kernels import KernelKind, KernelSpec, mh_step
from .models import MixtureTarget, SequentialTarget, dataset_spec, simulate_dataset
from .particles import WeightedMoments, equal_weight_moments
from .samplers import SMC_METHODS, Method, RunConfig, RunTrace, amcmc_run, smc_run

log = logging.getLogger(__name__)

GRID = np.linspace(-2.5, 2.5, 100)
DEFAULT_PARTICLES = {2: 2000, 3: 5000}


@dataclass(frozen=True)
class PredictiveGrid:
    points: np.ndarray
    values: np.ndarray


def predictive_density(
    target: SequentialTarget,
    trace: RunTrace | None = None,
    samples: np.ndarray | None = None,
    pool: str = "union",
    points: np.ndarray = GRID,
) -> PredictiveGrid:
    """Estimate the posterior predictive density on ``points``.

    From an SMC trace: ``pool="union"`` averages over the final particles and
    the final proposals with equal weights (2M points);
    ``pool="acceptance_weighted"`` uses a * f(proposed) + (1 - a) * f(current)
    per particle. From MCMC ``samples``: plain average over the samples.
    """
    if samples is not None:
        thetas = np.asarray(samples, dtype=float)
        return PredictiveGrid(points, target.predictive_pdf(points, thetas).mean(axis=0))
    if trace is None or trace.final_record is None:
        raise ValueError("predictive density needs a trace with a final move step")
    rec = trace.final_record
    if pool == "union":
        thetas = np.vstack([rec.theta_next, rec.theta_proposed])
        values = target.predictive_pdf(points, thetas).mean(axis=0)
    elif pool == "acceptance_weighted":
        a = rec.acc_prob[:, None]
        values = (a * target.predictive_pdf(points, rec.theta_proposed)
                  + (1.0 - a) * target.predictive_pdf(points, rec.theta_prev)).mean(axis=0)
    else:
        raise ValueError(f"unknown predictive pool {pool!r}")
    return PredictiveGrid(points, values)


def vpd(grids: Sequence[PredictiveGrid] | np.ndarray) -> float:
    """Mean over grid points of the across-run sample variance."""
    values = np.asarray([g.values if isinstance(g, PredictiveGrid) else g for g in grids], dtype=float)
    if values.shape[0] < 2:
        raise TooFewRuns("VPD needs at least two runs")
    return float(np.mean(np.var(values, axis=0, ddof=1)))


def vpd_jackknife_se(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    J = values.shape[0]
    if J < 3:
        return float("nan")
    loo = np.array([vpd(np.delete(values, j, axis=0)) for j in range(J)])
    return float(math.sqrt((J - 1) / J * np.sum((loo - loo.mean()) ** 2)))


# --------------------------------------------------------------------------
# replication studies


@dataclass
class RunSummary:
    method: Method
    run: int
    predictive: np.ndarray
    jd_mean: float
    acc_prob_mean: float
    acc_rate: float
    h_means: dict[str, float]
    proportions: dict[str, float]
    h_overall: float


@dataclass
class MethodResult:
    method: Method
    vpd: float
    vpd_se: float
    rel_vpd: float
    jd: float
    jd_se: float
    acc_prob: float
    acc_rate: float
    h: float
    h_by_kernel: dict[str, float]
    proportions: dict[str, float]
    n_runs: int
    n_failed: int


@dataclass
class StudyResult:
    dataset: int
    runs: int
    M: int
    methods: list[MethodResult] = field(default_factory=list)
    summaries: dict[Method, list[RunSummary]] = field(default_factory=dict)

    def __getitem__(self, method) -> MethodResult:
        method = Method.parse(method)
        for m in self.methods:
            if m.method is method:
                return m
        raise KeyError(method)

    def kernel_names(self) -> list[str]:
        names: list[str] = []
        for m in self.methods:
            for k in m.h_by_kernel:
                if k not in names:
                    names.append(k)
        return names

    def columns(self) -> list[str]:
        cols = ["method", "rel_vpd", "vpd", "vpd_se", "jd", "jd_se", "acc_prob", "acc_rate", "h"]
        for k in self.kernel_names():
            cols += [f"h[{k}]", f"proportion[{k}]"]
        return cols + ["n_runs", "n_failed"]

    def rows(self) -> list[list]:
        names = self.kernel_names()
        out = []
        for m in sorted(self.methods, key=lambda m: m.rel_vpd):
            row = [m.method.value, m.rel_vpd, m.vpd, m.vpd_se, m.jd, m.jd_se, m.acc_prob, m.acc_rate, m.h]
            for k in names:
                row += [m.h_by_kernel.get(k), m.proportions.get(k)]
            out.append(row + [m.n_runs, m.n_failed])
        return out


def shuffled_target(y: np.ndarray, r: int, rng: Generator | None) -> MixtureTarget:
    y = np.asarray(y, dtype=float)
    if rng is not None:
        y = y[rng.permutation(y.shape[0])]
    return MixtureTarget(y, r)


def _derived_seed(*words: int) -> int:
    return int(np.random.SeedSequence(list(words)).generate_state(1)[0])


def summarize_run(method: Method, run: int, target: SequentialTarget, config: RunConfig, pool: str) -> RunSummary:
    """Run one method once and reduce it to the study statistics."""
    if method is Method.AMCMC:
        res = amcmc_run(target, config)
        grid = predictive_density(target, samples=res.samples)
        return RunSummary(method, run, grid.values, res.jd_mean, res.acc_prob_mean, res.acc_rate,
                          {}, {}, res.h)
    trace = smc_run(target, config)
    grid = predictive_density(target, trace, pool=pool)
    last = trace.last_move()
    pop = trace.final_population
    names = pop.menu.names
    h_means = {k: float(v) for k, v in zip(names, pop.h_means())}
    props = {k: float(v) for k, v in zip(names, pop.proportions())}
    return RunSummary(method, run, grid.values, last.jd_mean, last.acc_prob_mean, last.acc_rate,
                      h_means, props, float(pop.h.mean()))


def _study_job(args):
    method, run, y, r, shuffle_seed, config, pool, shuffle = args
    rng = np.random.default_rng(shuffle_seed) if shuffle else None
    target = shuffled_target(y, r, rng)
    try:
        return summarize_run(method, run, target, config, pool)
    except (ASMCError, np.linalg.LinAlgError, FloatingPointError) as exc:
        log.warning("run %d of %s failed: %s", run, method.value, exc)
        return None


def study(
    dataset: int,
    methods: Sequence[Method | str],
    runs: int = 20,
    seed: int = 0,
    M: int | None = None,
    n: int = 100,
    data_seed: int | None = None,
    y: np.ndarray | None = None,
    pool: str = "union",
    workers: int = 1,
    shuffle: bool = True,
    **config_kwargs,
) -> StudyResult:
    """Replicate each method ``runs`` times on one simulated dataset.

    The dataset is drawn once from ``data_seed`` (default: the dataset id).
    Run j of every method sees the same observation order; sampler seeds are
    derived from (seed, run, method). Failed runs are logged, counted and
    left out of the aggregates.
    """
    spec = dataset_spec(dataset)
    if y is None:
        y = simulate_dataset(dataset, n, np.random.default_rng(dataset if data_seed is None else data_seed))
    M = M or DEFAULT_PARTICLES.get(spec.r, 2000)
    methods = [Method.parse(m) for m in methods]
    jobs = []
    for method in methods:
        for j in range(runs):
            cfg = RunConfig(method=method, M=M, seed=_derived_seed(seed, j, list(Method).index(method) + 1),
                            **config_kwargs)
            jobs.append((method, j, y, spec.r, _derived_seed(seed, j), cfg, pool, shuffle))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_study_job, jobs))
    else:
        results = [_study_job(job) for job in jobs]

    out = StudyResult(dataset=dataset, runs=runs, M=M)
    for method in methods:
        mine = [r for job, r in zip(jobs, results) if job[0] is method]
        ok = [r for r in mine if r is not None]
        out.summaries[method] = ok
        failed = len(mine) - len(ok)
        if failed:
            log.warning("%s: %d of %d runs failed and were excluded", method.value, failed, len(mine))
        if len(ok) < 2:
            raise TooFewRuns(f"{method.value}: only {len(ok)} successful runs")
        values = np.array([r.predictive for r in ok])
        jd = np.array([r.jd_mean for r in ok])
        kernels = list(ok[0].h_means)
        out.methods.append(MethodResult(
            method=method,
            vpd=vpd(values),
            vpd_se=vpd_jackknife_se(values),
            rel_vpd=float("nan"),
            jd=float(jd.mean()),
            jd_se=float(jd.std(ddof=1) / math.sqrt(len(jd))),
            acc_prob=float(np.mean([r.acc_prob_mean for r in ok])),
            acc_rate=float(np.mean([r.acc_rate for r in ok])),
            h=float(np.mean([r.h_overall for r in ok])),
            h_by_kernel={k: float(np.nanmean([r.h_means[k] for r in ok])) if any(
                not np.isnan(r.h_means[k]) for r in ok) else float("nan") for k in kernels},
            proportions={k: float(np.mean([r.proportions[k] for r in ok])) for k in kernels},
            n_runs=len(ok),
            n_failed=failed,
        ))
    smc = [m.vpd for m in out.methods if m.method in SMC_METHODS] or [m.vpd for m in out.methods]
    ref = min(smc)
    for m in out.methods:
        m.rel_vpd = m.vpd / ref
    return out


# --------------------------------------------------------------------------
# g(h) curves


@dataclass
class GCurve:
    h: np.ndarray
    g: np.ndarray
    se: np.ndarray
    acc: np.ndarray

    @property
    def argmax(self) -> float:
        return float(self.h[np.argmax(self.g)])


def g_curve(
    sample: Callable[[Generator, int], np.ndarray],
    log_target: Callable[[np.ndarray], np.ndarray],
    kind: KernelKind,
    h_grid,
    N: int,
    rng: Generator,
    moments: WeightedMoments | None = None,
) -> GCurve:
    """Monte Carlo estimate of g(h) = E[acc * Lambda] on a grid of scalings.

    Each grid point uses N fresh draws theta ~ pi_t and one proposal each.
    ``moments`` defaults to the empirical moments of a first batch of draws.
    """
    h_grid = np.asarray(h_grid, dtype=float)
    if moments is None:
        moments = equal_weight_moments(sample(rng, N))
    g = np.empty(h_grid.shape[0])
    se = np.empty_like(g)
    acc = np.empty_like(g)
    for i, h in enumerate(h_grid):
        theta = sample(rng, N)
        rec = mh_step(theta, log_target, KernelSpec(kind, h=float(h)), moments, rng)
        g[i] = rec.lam_tilde.mean()
        se[i] = rec.lam_tilde.std(ddof=1) / math.sqrt(N)
        acc[i] = rec.acc_prob.mean()
    return GCurve(h_grid, g, se, acc)


def standard_gaussian_curve(d: int, kind: KernelKind, h_grid, N: int, rng: Generator) -> GCurve:
    """g(h) for the N(0, I_d) target with the exact covariance."""
    moments = WeightedMoments.from_covariance(np.zeros(d), np.eye(d))
    return g_curve(
        lambda r, k: r.standard_normal((k, d)),
        lambda x: -0.5 * np.sum(x * x, axis=-1),
        kind, h_grid, N, rng, moments,
    )


def is_unimodal(values, se, n_se: float = 2.0) -> bool:
    """True if the curve rises to its maximum and then falls, allowing
    reversals no larger than ``n_se`` standard errors of the difference."""
    values = np.asarray(values, dtype=float)
    se = np.asarray(se, dtype=float)
    k = int(np.argmax(values))
    diff = np.diff(values)
    tol = n_se * np.sqrt(se[1:] ** 2 + se[:-1] ** 2)
    return bool(np.all(diff[:k] >= -tol[:k]) and np.all(diff[k:] <= tol[k:]))


# --------------------------------------------------------------------------
# MCMC effective sample size


def chain_ess(x: np.ndarray) -> np.ndarray:
    """Per-coordinate effective sample size (Geyer initial monotone sequence)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    centred = x - x.mean(axis=0)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(centred, n=nfft, axis=0)
    acov = np.fft.irfft(f * np.conj(f), n=nfft, axis=0)[:n] / n
    rho = acov / acov[0]
    out = np.empty(x.shape[1])
    for c in range(x.shape[1]):
        pairs = rho[: 2 * ((n - 1) // 2), c].reshape(-1, 2).sum(axis=1)
        positive = np.flatnonzero(pairs <= 0)
        m = positive[0] if positive.size else pairs.shape[0]
        gamma = np.minimum.accumulate(pairs[:m])
        tau = -1.0 + 2.0 * gamma.sum()
        out[c] = n / max(tau, 1.0 / n)
    return out
