"""Executable checks of the large-M behaviour of the scaling population.

Each check builds a synthetic problem with a known answer, runs the library
code path (``adaptation.update``) or the closed-form recursion, and returns an
``OracleResult`` with the statistic and its threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator
from scipy import integrate, stats

from .adaptation import KernelMenu, MenuEntry, TuningPopulation, init_population, update
from .kernels import KernelKind

# Score noise: Gamma(4, 1/4) has mean 1, so E[score | h] = w(h).
NOISE_SHAPE = 4.0


@dataclass
class OracleResult:
    name: str
    passed: bool
    statistic: float
    threshold: float
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = " ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in self.details.items())
        return f"{status} {self.name}: statistic={self.statistic:.6g} threshold={self.threshold:.6g} {extra}".rstrip()


def _uniform_population(M: int, rng: Generator) -> TuningPopulation:
    menu = KernelMenu((MenuEntry(KernelKind.RANDOM_WALK, bounds=(0.0, 1.0)),))
    return init_population(menu, M, rng, jitter_sd=0.0)


def _noisy(mean: np.ndarray, rng: Generator) -> np.ndarray:
    return mean * rng.gamma(NOISE_SHAPE, 1.0 / NOISE_SHAPE, size=mean.shape)


def reweighted_population(w, M: int, rng: Generator) -> tuple[np.ndarray, np.ndarray]:
    """h ~ U(0,1), noisy scores with E[score | h] = w(h), one population update.

    Returns the h values before and after the update.
    """
    pop = _uniform_population(M, rng)
    new = update(pop, _noisy(w(pop.h), rng), rng)
    return pop.h, new.h


def prop1_oracle(M: int = 100_000, seed: int = 0, threshold: float = 0.01) -> OracleResult:
    """With w(h) = h on U(0,1) the updated h should have density 2h, CDF h^2."""
    rng = np.random.default_rng(seed)
    _, h_new = reweighted_population(lambda h: h, M, rng)
    ks = stats.kstest(h_new, lambda x: np.clip(x, 0.0, 1.0) ** 2).statistic
    return OracleResult("prop1", bool(ks < threshold), float(ks), threshold, {"M": M})


def _bump(h):
    return 4.0 * h * (1.0 - h)


def lemma1_oracle(M: int = 100_000, seed: int = 0, n_se: float = 3.0) -> list[OracleResult]:
    """Mean of g after an update rises when cov(g, w) >= 0 and falls when it is
    negative, up to ``n_se`` Monte Carlo standard errors.

    Uses g(h) = 4h(1-h) on U(0,1) with w = 0.5 + g (linear weighting) and
    w = 1.5 - g respectively.
    """
    rng = np.random.default_rng(seed)
    out = []
    for name, w, sign in (
        ("lemma1_positive", lambda h: 0.5 + _bump(h), 1.0),
        ("lemma1_negative", lambda h: 1.5 - _bump(h), -1.0),
    ):
        h_old, h_new = reweighted_population(w, M, rng)
        g_old, g_new = _bump(h_old), _bump(h_new)
        se = math.sqrt(g_old.var(ddof=1) / M + g_new.var(ddof=1) / M)
        diff = float(g_new.mean() - g_old.mean())
        cov = integrate.quad(lambda h: _bump(h) * w(h), 0, 1)[0] - integrate.quad(_bump, 0, 1)[0] * integrate.quad(w, 0, 1)[0]
        exact = integrate.quad(lambda h: _bump(h) * w(h), 0, 1)[0] / integrate.quad(w, 0, 1)[0] - 2.0 / 3.0
        passed = sign * diff >= -n_se * se
        out.append(OracleResult(name, bool(passed), sign * diff, -n_se * se,
                                {"mean_change": diff, "exact_change": exact, "cov_gw": cov, "se": se}))
    return out


def default_g(h):
    return 0.2 + 5.0 * np.exp(-((h - 1.06) ** 2) / (2 * 0.2**2))


def thm1_oracle(
    t: int = 500,
    a: float = 1.0,
    n_grid: int = 1000,
    support: tuple[float, float] = (0.0, 4.0),
    half_width: float = 0.05,
    threshold: float = 0.99,
    perturbation: float = 0.0,
    rate: float = 0.5,
    g=default_g,
) -> OracleResult:
    """Closed-form recursion pi_t(h) ∝ pi(h) prod_s (a + g_s(h)) on a grid.

    g_s = g + perturbation * s^-rate * cos(5h). Passes when the mass within
    ``half_width`` of argmax g is at least ``threshold``.
    """
    lo, hi = support
    h = lo + (np.arange(n_grid) + 0.5) * (hi - lo) / n_grid
    base = g(h)
    s = np.arange(1, t + 1)[:, None]
    g_s = np.maximum(base[None, :] + perturbation * s ** (-rate) * np.cos(5.0 * h)[None, :], 0.0)
    log_pi = np.sum(np.log(a + g_s), axis=0)  # uniform pi(h)
    p = np.exp(log_pi - log_pi.max())
    p /= p.sum()
    h_opt = h[np.argmax(base)]
    mass = float(p[np.abs(h - h_opt) <= half_width].sum())
    return OracleResult("thm1", mass >= threshold, mass, threshold, {"t": t, "h_opt": float(h_opt)})


def run_all(seed: int = 0) -> list[OracleResult]:
    return [prop1_oracle(seed=seed), *lemma1_oracle(seed=seed), thm1_oracle()]
