"""Population of (kernel, scaling) pairs and its reweight-resample-jitter update."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numpy.random import Generator

from .errors import EmptyMenu, LengthMismatch
from .kernels import KernelKind, KernelSpec, MoveRecord, kernel_name
from .models import Ordering
from .particles import multinomial_resample

H_FLOOR = 1e-6
DEFAULT_JITTER_SD = 0.015
DEFAULT_BOUNDS = {KernelKind.RANDOM_WALK: (0.0, 2.0), KernelKind.LIU_WEST: (0.0, 1.0)}


@dataclass(frozen=True)
class MenuEntry:
    kind: KernelKind
    ordering: Ordering = Ordering.NONE
    bounds: tuple[float, float] | None = None

    def __post_init__(self):
        if self.bounds is None:
            object.__setattr__(self, "bounds", DEFAULT_BOUNDS[self.kind])
        lo, hi = self.bounds
        if not (0.0 <= lo <= hi) or (self.kind is KernelKind.LIU_WEST and hi > 1.0):
            raise ValueError(f"invalid initial-h bounds {self.bounds} for {self.kind.name}")

    @property
    def name(self) -> str:
        return kernel_name(self.kind, self.ordering)

    def spec(self, h: float = 1.0) -> KernelSpec:
        return KernelSpec(self.kind, self.ordering, h)


@dataclass(frozen=True)
class KernelMenu:
    entries: tuple[MenuEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if not self.entries:
            raise EmptyMenu("kernel menu must contain at least one kernel")

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i) -> MenuEntry:
        return self.entries[i]

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def orderings(self) -> list[Ordering]:
        """Distinct orderings in menu order."""
        seen: list[Ordering] = []
        for e in self.entries:
            if e.ordering not in seen:
                seen.append(e.ordering)
        return seen


@dataclass(frozen=True)
class TuningPopulation:
    """One (kernel id, h) pair per particle index.

    ``scores`` holds a + statistic from the most recent move, if any.
    """

    menu: KernelMenu
    kernel_ids: np.ndarray
    h: np.ndarray
    scores: np.ndarray | None = None
    jitter_sd: float = DEFAULT_JITTER_SD
    a: float = 0.0
    score_statistic: str = "lambda_tilde"
    n_zero_score_updates: int = field(default=0, compare=False)

    @property
    def M(self) -> int:
        return self.h.shape[0]

    def proportions(self) -> np.ndarray:
        return np.bincount(self.kernel_ids, minlength=len(self.menu)) / self.M

    def h_means(self) -> np.ndarray:
        """Mean h per menu kernel (NaN for kernels with no members)."""
        out = np.full(len(self.menu), np.nan)
        for i in range(len(self.menu)):
            members = self.kernel_ids == i
            if members.any():
                out[i] = self.h[members].mean()
        return out


def init_population(
    menu: KernelMenu,
    M: int,
    rng: Generator,
    jitter_sd: float = DEFAULT_JITTER_SD,
    a: float = 0.0,
    score_statistic: str = "lambda_tilde",
) -> TuningPopulation:
    """Kernel ids uniform over the menu, h uniform on each kernel's bounds."""
    if M < 1:
        raise ValueError("population size must be at least 1")
    if score_statistic not in ("lambda_tilde", "lambda"):
        raise ValueError(f"unknown score statistic {score_statistic!r}")
    ids = rng.integers(len(menu), size=M) if len(menu) > 1 else np.zeros(M, dtype=np.int64)
    lo = np.array([e.bounds[0] for e in menu.entries])[ids]
    hi = np.array([e.bounds[1] for e in menu.entries])[ids]
    h = rng.uniform(lo, hi)
    h = _clamp(menu, ids, h)
    return TuningPopulation(menu, ids, h, None, jitter_sd, a, score_statistic)


def score(population: TuningPopulation, records: MoveRecord) -> np.ndarray:
    """a + lambda_tilde (or a + lambda) per particle."""
    stat = records.lam_tilde if population.score_statistic == "lambda_tilde" else records.lam
    stat = np.asarray(stat, dtype=float).reshape(-1)
    if stat.shape[0] != population.M:
        raise LengthMismatch(f"{stat.shape[0]} move records for a population of {population.M}")
    return population.a + stat


def _clamp(menu: KernelMenu, ids: np.ndarray, h: np.ndarray) -> np.ndarray:
    h = np.maximum(h, H_FLOOR)
    is_lw = np.array([e.kind is KernelKind.LIU_WEST for e in menu.entries])[ids]
    return np.where(is_lw, np.minimum(h, 1.0), h)


def update(population: TuningPopulation, scores, rng: Generator) -> TuningPopulation:
    """Resample pairs proportional to ``scores``, jitter h, clamp, shuffle.

    All-zero (or non-finite) scores fall back to uniform resampling weights.
    """
    scores = np.asarray(scores, dtype=float).reshape(-1)
    M = population.M
    if scores.shape[0] != M:
        raise LengthMismatch(f"{scores.shape[0]} scores for a population of {M}")
    total = scores.sum()
    zero = not np.isfinite(total) or total <= 0 or np.any(scores < 0)
    weights = np.full(M, 1.0 / M) if zero else scores / total
    idx = multinomial_resample(weights, M, rng)
    ids = population.kernel_ids[idx]
    h = population.h[idx]
    if population.jitter_sd > 0:
        h = h + population.jitter_sd * rng.standard_normal(M)
    h = _clamp(population.menu, ids, h)
    perm = rng.permutation(M)
    return replace(
        population,
        kernel_ids=ids[perm],
        h=h[perm],
        scores=scores,
        n_zero_score_updates=population.n_zero_score_updates + int(zero),
    )


def freeze_on_no_move(population: TuningPopulation) -> TuningPopulation:
    """Pairs stay attached to their particles when no move step happens."""
    return population
