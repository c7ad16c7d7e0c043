import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from asmc.errors import DimensionMismatch, UnknownDataset
from asmc.models import (
    DATASETS,
    GaussianMeanTarget,
    MixtureSpec,
    MixtureTarget,
    Ordering,
    dataset_spec,
    inverse_transform,
    kalman_posterior,
    mixture_log_lik,
    mixture_prior_logdensity,
    permute_components,
    relabel,
    sample_mixture_prior,
    simulate_dataset,
    simulate_gaussian,
    split_theta,
    transform,
)

seeds = st.integers(0, 2**32 - 1)


@st.composite
def mixture_specs(draw, r=None):
    r = draw(st.integers(1, 4)) if r is None else r
    raw = draw(st.lists(st.floats(0.05, 1.0), min_size=r, max_size=r))
    means = draw(st.lists(st.floats(-3, 3), min_size=r, max_size=r))
    sds = draw(st.lists(st.floats(0.05, 3), min_size=r, max_size=r))
    return MixtureSpec.from_arrays(raw, means, [s * s for s in sds])


# --------------------------------------------------------------------------
# Gaussian mean model


def test_gaussian_increment_at_mode():
    target = GaussianMeanTarget(np.zeros((1, 5)))
    assert target.log_lik_increment(np.zeros(5), 1) == pytest.approx(-2.5 * math.log(2 * math.pi))


def test_gaussian_upto_zero_is_prior():
    y = np.random.default_rng(0).standard_normal((10, 5))
    target = GaussianMeanTarget(y)
    theta = np.random.default_rng(1).standard_normal((20, 5))
    ref = stats.multivariate_normal(np.zeros(5), 5 * np.eye(5)).logpdf(theta)
    np.testing.assert_allclose(target.log_posterior_upto(theta, 0), ref, rtol=1e-12)


def test_kalman_examples():
    mean, cov = kalman_posterior(np.zeros((0, 5)), 5.0)
    np.testing.assert_array_equal(mean, np.zeros(5))
    np.testing.assert_allclose(cov, 5 * np.eye(5))
    mean, cov = kalman_posterior(np.array([[6.0, 0, 0, 0, 0]]), 5.0)
    np.testing.assert_allclose(mean, [5, 0, 0, 0, 0])
    np.testing.assert_allclose(cov, np.eye(5) * 5 / 6)


def test_kalman_large_sample_near_truth():
    y = simulate_gaussian(100, np.random.default_rng(2))
    mean, _ = kalman_posterior(y)
    assert np.all(np.abs(mean) < 0.4)


@settings(max_examples=20)
@given(seeds, st.integers(0, 30))
def test_gaussian_posterior_matches_kalman(seed, t):
    rng = np.random.default_rng(seed)
    y = rng.standard_normal((30, 5)) + rng.standard_normal(5)
    target = GaussianMeanTarget(y)
    mean, cov = kalman_posterior(y[:t])
    theta = mean + rng.standard_normal((100, 5))
    ratio = target.log_posterior_upto(theta, t) - stats.multivariate_normal(mean, cov).logpdf(theta)
    assert np.ptp(ratio) < 1e-6


@settings(max_examples=20)
@given(seeds)
def test_incremental_telescoping(seed):
    rng = np.random.default_rng(seed)
    target = GaussianMeanTarget(rng.standard_normal((15, 5)))
    theta = rng.standard_normal((8, 5))
    running = target.log_prior(theta)
    for t in range(1, 16):
        running = running + target.log_lik_increment(theta, t)
        np.testing.assert_allclose(running, target.log_posterior_upto(theta, t), rtol=1e-10, atol=1e-8)


def test_gaussian_dimension_check():
    with pytest.raises(DimensionMismatch):
        GaussianMeanTarget(np.zeros((3, 5))).log_prior(np.zeros(4))


# --------------------------------------------------------------------------
# mixture likelihood and transforms


def test_mixture_single_gaussian():
    spec = MixtureSpec((1.0,), (0.0,), (1.0,))
    assert mixture_log_lik(spec, 0.0) == pytest.approx(-0.5 * math.log(2 * math.pi))


def test_mixture_dataset3_at_one():
    spec = DATASETS[3]
    ref = math.log(0.3 * stats.norm(-1, 0.5).pdf(1) + 0.7 * stats.norm(1, 0.5).pdf(1))
    assert mixture_log_lik(spec, 1.0) == pytest.approx(ref, rel=1e-12)


@given(st.floats(-5, 5))
def test_symmetric_spec_even(y):
    spec = DATASETS[4]
    assert mixture_log_lik(spec, y) == pytest.approx(mixture_log_lik(spec, -y), abs=1e-12)


@given(mixture_specs(), st.floats(-5, 5), st.randoms(use_true_random=False))
def test_mixture_permutation_symmetry(spec, y, rnd):
    perm = list(range(spec.r))
    rnd.shuffle(perm)
    permuted = MixtureSpec(*(tuple(np.asarray(f)[perm]) for f in (spec.weights, spec.means, spec.variances)))
    assert mixture_log_lik(permuted, y) == pytest.approx(mixture_log_lik(spec, y), abs=1e-10)


def test_transform_examples():
    theta = transform(MixtureSpec((0.5, 0.5), (0.0, 1.0), (math.exp(-1.5), 1.0)))
    assert theta[0] == 0.0
    assert theta[1] == pytest.approx(-1.5)
    np.testing.assert_allclose(theta[3:], [0.0, 1.0])


@given(mixture_specs())
def test_transform_round_trip(spec):
    back = inverse_transform(transform(spec))
    for a, b in zip((spec.weights, spec.means, spec.variances), (back.weights, back.means, back.variances)):
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)


def test_prior_density_at_zero():
    ref = (
        stats.norm(0, 1).logpdf(0)
        + 2 * stats.norm(-1.5, 1.3).logpdf(0)
        + 2 * stats.norm(0, 0.75).logpdf(0)
    )
    assert mixture_prior_logdensity(np.zeros(5)) == pytest.approx(ref, rel=1e-12)


def test_prior_sample_moments():
    x = sample_mixture_prior(np.random.default_rng(0), 2, 100_000)
    np.testing.assert_allclose(x.mean(axis=0), [0, -1.5, -1.5, 0, 0], atol=0.02)


def test_prior_marginals_integrate():
    # vary one coordinate, divide out the (scipy-evaluated) others
    base = np.array([0.0, -1.5, -1.5, 0.0, 0.0])
    marginals = [stats.norm(0, 1), stats.norm(-1.5, 1.3), stats.norm(-1.5, 1.3), stats.norm(0, 0.75), stats.norm(0, 0.75)]
    grid = np.linspace(-10, 10, 201)
    for k in range(5):
        others = sum(m.logpdf(base[j]) for j, m in enumerate(marginals) if j != k)
        th = np.tile(base, (grid.size, 1))
        th[:, k] = grid
        mass = np.trapezoid(np.exp(mixture_prior_logdensity(th) - others), grid)
        assert mass == pytest.approx(1.0, abs=0.02)


def test_symmetric_prior_r2_equals_plain():
    x = np.random.default_rng(0).standard_normal((50, 5))
    target = MixtureTarget(np.zeros(3), 2)
    np.testing.assert_allclose(target.log_prior(x), mixture_prior_logdensity(x), rtol=1e-12)


@pytest.mark.parametrize("r", [3, 4])
def test_symmetric_prior_is_permutation_average(r):
    rng = np.random.default_rng(r)
    x = rng.standard_normal((20, 3 * r - 1))
    target = MixtureTarget(np.zeros(3), r)
    dens = [np.exp(mixture_prior_logdensity(permute_components(x, p))) for p in itertools.permutations(range(r))]
    np.testing.assert_allclose(target.log_prior(x), np.log(np.mean(dens, axis=0)), rtol=1e-10)


@pytest.mark.parametrize("r", [2, 3])
def test_symmetric_prior_label_invariant(r):
    rng = np.random.default_rng(10 + r)
    x = rng.standard_normal((20, 3 * r - 1))
    target = MixtureTarget(rng.standard_normal(10), r)
    for p in itertools.permutations(range(r)):
        np.testing.assert_allclose(target.log_posterior_upto(permute_components(x, p), 10),
                                   target.log_posterior_upto(x, 10), rtol=1e-10)


# --------------------------------------------------------------------------
# relabelling


def test_relabel_sorted_unchanged():
    theta = transform(MixtureSpec((0.3, 0.7), (-1.0, 1.0), (0.25, 0.25)))
    np.testing.assert_array_equal(relabel(theta, Ordering.BY_MEANS), theta)


def test_relabel_swaps_jointly():
    spec = MixtureSpec((0.3, 0.7), (1.0, -1.0), (0.5, 2.0))
    out = inverse_transform(relabel(transform(spec), Ordering.BY_MEANS))
    np.testing.assert_allclose(out.means, [-1.0, 1.0])
    np.testing.assert_allclose(out.weights, [0.7, 0.3])
    np.testing.assert_allclose(out.variances, [2.0, 0.5])


@given(mixture_specs(), st.sampled_from(list(Ordering)))
def test_relabel_idempotent_and_sorted(spec, ordering):
    theta = transform(spec)
    once = relabel(theta, ordering)
    np.testing.assert_array_equal(relabel(once, ordering), once)
    _, v, mu = split_theta(once)
    if ordering is Ordering.BY_MEANS:
        assert np.all(np.diff(mu) >= 0)
    elif ordering is Ordering.BY_VARIANCES:
        assert np.all(np.diff(v) >= -1e-15 * v.max())


@given(mixture_specs(), st.sampled_from(list(Ordering)), st.floats(-4, 4))
def test_relabel_preserves_likelihood(spec, ordering, y):
    out = inverse_transform(relabel(transform(spec), ordering))
    assert mixture_log_lik(out, y) == pytest.approx(mixture_log_lik(spec, y), abs=1e-10)


def test_gaussian_target_rejects_ordering():
    target = GaussianMeanTarget(np.zeros((2, 5)))
    with pytest.raises(ValueError):
        target.relabel(np.zeros(5), Ordering.BY_MEANS)
    assert not target.supports_ordering()


# --------------------------------------------------------------------------
# datasets


def test_dataset4_mean():
    y = simulate_dataset(4, 100_000, np.random.default_rng(0))
    assert abs(y.mean()) < 0.01


def test_dataset2_variance():
    y = simulate_dataset(2, 100_000, np.random.default_rng(1))
    assert y.var() == pytest.approx(0.505, abs=0.01)


def test_dataset6_trimodal():
    y = simulate_dataset(6, 100_000, np.random.default_rng(2))
    assert np.all(np.isfinite(y))
    counts, edges = np.histogram(y, bins=np.linspace(-1, 1, 41))
    centres = 0.5 * (edges[1:] + edges[:-1])
    peaks = [i for i in range(1, 39) if counts[i] > counts[i - 1] and counts[i] >= counts[i + 1]]
    peak_locs = sorted(centres[peaks])
    assert len(peaks) == 3
    np.testing.assert_allclose(peak_locs, [-0.5, 0.0, 0.5], atol=0.06)


def test_datasets_complete():
    assert sorted(DATASETS) == [1, 2, 3, 4, 5, 6]
    assert [DATASETS[k].r for k in range(1, 7)] == [2, 2, 2, 2, 3, 3]
    with pytest.raises(UnknownDataset):
        dataset_spec(7)


def test_mixture_spec_validation():
    with pytest.raises(ValueError):
        MixtureSpec((0.5, 0.6), (0, 0), (1, 1))
    with pytest.raises(ValueError):
        MixtureSpec((0.5, 0.5), (0, 0), (1, -1))


def test_mixture_predictive_pdf_integrates():
    target = MixtureTarget(np.zeros(3), 2)
    theta = transform(DATASETS[3])
    grid = np.linspace(-8, 8, 4001)
    assert np.trapezoid(target.predictive_pdf(grid, theta)[0], grid) == pytest.approx(1.0, abs=1e-6)
