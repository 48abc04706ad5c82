"""Model-layer tests: residual tallies, collapsed posterior, simulation."""

import math

import numpy as np
import pytest
from scipy.special import gammaln

from rankmcmc.model import (
    CategoryPriors,
    HyperParams,
    RankCounts,
    draw_from_pmf,
    log_likelihood,
    log_rank_posterior,
    residual_counts,
    simulate_data,
)
from rankmcmc.permutation import build_tables, compose, inverse, rank


@pytest.fixture(scope="module")
def t2():
    return build_tables(2)


@pytest.fixture(scope="module")
def t3():
    return build_tables(3)


def brute_residual_counts(central, data, tables):
    """Independent oracle: loop over raw observations and align each one."""
    m = np.zeros(tables.order, dtype=int)
    for j in range(data.g):
        for i in range(tables.order):
            c = data.counts[j, i]
            if c == 0:
                continue
            word = compose(tables.words[i], inverse(tables.words[central[j] - 1]))
            m[rank(word) - 1] += c
    return m


def test_residual_counts_worked_example(t2):
    data = RankCounts(p=2, g=2, counts=[[3, 1], [1, 2]])
    m = residual_counts([1, 2], data, t2)
    assert list(m) == [5, 2]


def test_residual_counts_identity_centers(t3):
    counts = np.zeros((1, 6), dtype=int)
    counts[0, 3] = 7
    data = RankCounts(p=3, g=1, counts=counts)
    assert list(residual_counts([1], data, t3)) == [0, 0, 0, 7, 0, 0]


def test_residual_counts_mass_conservation_random(t3):
    rng = np.random.default_rng(3)
    for _ in range(25):
        counts = rng.integers(0, 8, size=(2, 6))
        data = RankCounts(p=3, g=2, counts=counts)
        central = rng.integers(1, 7, size=2)
        m = residual_counts(central, data, t3)
        assert m.sum() == counts.sum()
        assert np.array_equal(m, brute_residual_counts(central, data, t3))


def test_log_likelihood_explicit_product(t2):
    data = RankCounts(p=2, g=2, counts=[[3, 1], [1, 2]])
    theta = np.array([0.8, 0.2])
    # centers (1, 2): residual tally (5, 2)
    expected = 5 * math.log(0.8) + 2 * math.log(0.2)
    assert log_likelihood(theta, [1, 2], data, t2) == pytest.approx(expected)


def test_log_likelihood_zero_mass_sentinel(t2):
    data = RankCounts(p=2, g=1, counts=[[1, 1]])
    assert log_likelihood([1.0, 0.0], [1], data, t2) == float("-inf")
    assert log_likelihood([1.0, 0.0], [1],
                          RankCounts(p=2, g=1, counts=[[4, 0]]),
                          t2) == pytest.approx(0.0)


def test_log_rank_posterior_ratio_example(t2):
    # single category, one observation of the identity, alpha = (2, 1)
    data = RankCounts(p=2, g=1, counts=[[1, 0]])
    hyp = HyperParams.from_precision(math.log(2.0), t2, scale=0.5)
    assert np.allclose(hyp.alpha, [2.0, 1.0])
    priors = CategoryPriors.uniform(1, 2)
    delta = (log_rank_posterior([1], data, hyp, priors, t2)
             - log_rank_posterior([2], data, hyp, priors, t2))
    assert math.exp(delta) == pytest.approx(2.0, abs=1e-12)


def test_log_rank_posterior_zero_data_reduces_to_prior(t3):
    data = RankCounts(p=3, g=2, counts=np.zeros((2, 6), dtype=int))
    hyp = HyperParams.from_precision(0.7, t3)
    rng = np.random.default_rng(5)
    rows = rng.random((2, 6))
    rows /= rows.sum(axis=1, keepdims=True)
    priors = CategoryPriors(rows)
    base = np.log(rows)
    for central in ([1, 1], [2, 5], [6, 3]):
        delta = (log_rank_posterior(central, data, hyp, priors, t3)
                 - log_rank_posterior([1, 1], data, hyp, priors, t3))
        expected = (base[0, central[0] - 1] + base[1, central[1] - 1]
                    - base[0, 0] - base[1, 0])
        assert delta == pytest.approx(expected, abs=1e-12)


def test_log_rank_posterior_matches_collapsed_integral(t2):
    # the unnormalized value differs from log[prior * Beta(m+alpha)/Beta(alpha)]
    # by a constant across center configurations
    data = RankCounts(p=2, g=2, counts=[[40, 10], [14, 36]])
    hyp = HyperParams.from_precision(math.log(2.0), t2, scale=0.5)
    priors = CategoryPriors.uniform(2, 2)
    consts = []
    for c1 in (1, 2):
        for c2 in (1, 2):
            m = residual_counts([c1, c2], data, t2)
            log_int = (gammaln(m + hyp.alpha).sum() - gammaln(data.total + hyp.alpha0)
                       - gammaln(hyp.alpha).sum() + gammaln(hyp.alpha0))
            lp = log_rank_posterior([c1, c2], data, hyp, priors, t2)
            consts.append(lp - (priors.log_prob(np.array([c1, c2])) + log_int))
    assert np.ptp(consts) < 1e-10


def test_hyperparams_ratio_invariant_under_scale(t3):
    lam = 0.9
    a1 = HyperParams.from_precision(lam, t3, scale=1.0).alpha
    a2 = HyperParams.from_precision(lam, t3, scale=3.7).alpha
    cyc = t3.cycles.astype(float)
    expected = np.exp(lam * (cyc - t3.p))
    assert np.allclose(a1 / a1[0], expected, rtol=1e-14)
    assert np.allclose(a2 / a2[0], expected, rtol=1e-14)


def test_hyperparams_validation(t2):
    with pytest.raises(ValueError):
        HyperParams.from_precision(-0.1, t2)
    with pytest.raises(ValueError):
        HyperParams.from_precision(1.0, t2, scale=0.0)


def test_priors_validation():
    with pytest.raises(ValueError):
        CategoryPriors(np.array([[0.5, 0.4]]))
    with pytest.raises(ValueError):
        CategoryPriors(np.array([[1.2, -0.2]]))
    pm = CategoryPriors.point_mass([2], 6)
    assert pm.rows[0, 1] == 1.0
    assert pm.log_rows[0, 0] == float("-inf")


def test_draw_from_pmf_frequencies():
    rng = np.random.default_rng(11)
    pmf = np.array([0.9412, 0.0588])
    draws = draw_from_pmf(pmf, rng, size=100_000)
    freq = np.mean(draws == 1)
    assert abs(freq - 0.9412) < 0.003


def test_simulate_concentration(t2):
    theta = np.array([0.9, 0.1])
    for seed in range(5):
        data = simulate_data(theta, [1], [10_000], t2, seed=seed)
        assert abs(data.counts[0, 0] / 10_000 - 0.9) < 0.01


def test_simulate_composition_convention(t3):
    # point-mass noise on ranking 2 with center 4 must produce only the
    # composed ranking 2 o 4
    theta = np.zeros(6)
    theta[1] = 1.0
    data = simulate_data(theta, [4], [50], t3, seed=0)
    expected = t3.compose_index(2, 4)
    assert data.counts[0, expected - 1] == 50
    assert data.total == 50


def test_simulate_reproducible(t3):
    theta = np.full(6, 1 / 6)
    d1 = simulate_data(theta, [1, 2], [40, 60], t3, seed=123)
    d2 = simulate_data(theta, [1, 2], [40, 60], t3, seed=123)
    assert np.array_equal(d1.counts, d2.counts)
    assert list(d1.category_sizes) == [40, 60]


def test_rank_counts_validation():
    with pytest.raises(ValueError):
        RankCounts(p=2, g=2, counts=np.zeros((1, 2), dtype=int))
    with pytest.raises(ValueError):
        RankCounts(p=2, g=1, counts=[[-1, 2]])
