"""Rao-Blackwellized summaries: accuracy, variance reduction, errors."""

import numpy as np
import pytest
from scipy.signal import lfilter

import rankmcmc.estimators as es
from rankmcmc.errors import NumericalError
from rankmcmc.estimators import (RankEvent, batch_means_se, rb_conditional,
                                 rb_joint, rb_marginal, rb_marginal_table)
from rankmcmc.model import CategoryPriors, HyperParams, RankCounts
from rankmcmc import oracle as oc
from rankmcmc.permutation import build_tables
from rankmcmc.samplers import AlignmentCache, ChainConfig, run_chain


@pytest.fixture(scope="module")
def setup():
    tables = build_tables(2)
    data = RankCounts(p=2, g=2, counts=[[3, 1], [2, 2]])
    hyp = HyperParams.from_precision(0.3, tables)
    priors = CategoryPriors.uniform(2, 2)
    post = oc.enumerate_posterior(data, hyp, priors, tables)
    cache = AlignmentCache(data, hyp, priors, tables)
    trace = run_chain(data, hyp, priors, tables,
                      ChainConfig(iterations=20_000, burnin=500, seed=5))
    return tables, data, hyp, priors, post, cache, trace


def test_batch_means_recovers_iid_se():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(60_000)
    mean, se = batch_means_se(x, 30)
    iid = x.std(ddof=1) / np.sqrt(x.size)
    assert abs(mean - x.mean()) < 1e-15
    assert 0.7 < se / iid < 1.3


def test_batch_means_inflates_for_correlated_series():
    rho = 0.9
    rng = np.random.default_rng(12)
    x = lfilter([1.0], [1.0, -rho], rng.standard_normal(200_000))
    _, se = batch_means_se(x, 30)
    iid = x.std(ddof=1) / np.sqrt(x.size)
    target = np.sqrt((1 + rho) / (1 - rho))
    assert 0.5 * target < se / iid < 1.5 * target


def test_batch_means_length_guard():
    with pytest.raises(ValueError):
        batch_means_se(np.arange(59), 30)
    with pytest.raises(ValueError):
        batch_means_se(np.arange(100), 1)


def test_event_construction_and_validation():
    ev = RankEvent.from_sets([[1], None], 2)
    assert ev.masks.tolist() == [[True, False], [True, True]]
    both = ev.intersect(RankEvent.from_sets([None, [2]], 2))
    assert both.masks.tolist() == [[True, False], [False, True]]
    with pytest.raises(ValueError):
        RankEvent(np.array([[True, False], [False, False]]))
    with pytest.raises(ValueError):
        RankEvent.from_sets([[3], None], 2)


def test_rb_marginal_matches_enumeration(setup):
    _, _, _, _, post, cache, trace = setup
    est, se = rb_marginal_table(trace, cache)
    assert np.abs(est.sum(axis=1) - 1.0).max() < 1e-12
    for j in (1, 2):
        assert np.abs(est[j - 1] - post.category_marginal(j)).max() < 0.01
    assert np.all(se >= 0)
    assert se.max() < 0.02


def test_rb_marginal_entry_consistent_with_table(setup):
    _, _, _, _, _, cache, trace = setup
    est, _ = rb_marginal_table(trace, cache)
    got = rb_marginal(trace, cache, 1, 1)
    assert abs(got.value - est[0, 0]) < 1e-12
    assert got.se > 0 and got.batches >= 10
    # symmetric counts pin the other category's conditional at one half, so
    # its draws carry no spread at all
    flat = rb_marginal(trace, cache, 2, 1)
    assert flat.value == 0.5 and flat.se == 0.0
    with pytest.raises(ValueError):
        rb_marginal(trace, cache, 3, 1)
    with pytest.raises(ValueError):
        rb_marginal(trace, cache, 1, 0)
    with pytest.raises(ValueError):
        rb_marginal(trace, cache, 1, 1, batch_count=5)


def test_rb_marginal_point_prior_is_certain(setup):
    tables, data, hyp, _, _, _, _ = setup
    priors = CategoryPriors(np.array([[1.0, 0.0], [0.5, 0.5]]))
    cache = AlignmentCache(data, hyp, priors, tables)
    trace = run_chain(data, hyp, priors, tables,
                      ChainConfig(iterations=2000, seed=2))
    est, se = rb_marginal_table(trace, cache)
    assert est[0].tolist() == [1.0, 0.0]
    assert se[0].tolist() == [0.0, 0.0]


def test_rb_joint_matches_enumeration(setup):
    _, _, _, _, post, cache, trace = setup
    ev = RankEvent.from_sets([[1], [2]], 2)
    got = rb_joint(trace, cache, ev)
    assert abs(got.value - post.probs[1]) < 0.01
    assert 0.0 < got.se < 0.02


def test_rb_joint_unrestricted_equals_marginal(setup):
    _, _, _, _, _, cache, trace = setup
    est, _ = rb_marginal_table(trace, cache)
    got = rb_joint(trace, cache, RankEvent.from_sets([[1], None], 2))
    assert abs(got.value - est[0, 0]) < 1e-12


def test_rb_conditional_degenerate_forms(setup):
    _, _, _, _, _, cache, trace = setup
    target = RankEvent.from_sets([[1], [2]], 2)
    everything = RankEvent.all_true(2, 2)
    reduced = rb_conditional(trace, cache, target, everything)
    plain = rb_joint(trace, cache, target)
    assert abs(reduced.value - plain.value) < 1e-12
    # target contains the conditioning event, so the ratio is exactly one
    sure = rb_conditional(trace, cache, everything, target)
    assert sure.value == 1.0 and sure.se == 0.0


def test_rb_conditional_matches_enumeration(setup):
    _, _, _, _, post, cache, trace = setup
    got = rb_conditional(trace, cache,
                         RankEvent.from_sets([[1], None], 2),
                         RankEvent.from_sets([None, [2]], 2))
    exact = post.probs[1] / (post.probs[1] + post.probs[3])
    assert abs(got.value - exact) < 0.015
    assert got.se > 0


def test_rb_marginal_bimodal_long_run_within_three_se():
    # the two-category instance whose posterior splits across opposed modes;
    # the group-move chain visits both, and the smoothed marginal must land
    # within normal-theory distance of the enumerated answer
    tables = build_tables(2)
    data = RankCounts(p=2, g=2, counts=[[40, 10], [14, 36]])
    hyp = HyperParams.from_precision(np.log(2.0), tables, scale=0.5)
    priors = CategoryPriors.uniform(2, 2)
    post = oc.enumerate_posterior(data, hyp, priors, tables)
    cache = AlignmentCache(data, hyp, priors, tables)
    trace = run_chain(data, hyp, priors, tables,
                      ChainConfig(iterations=50_000, burnin=0, seed=7,
                                  variant="sandwich_uniform"))
    got = rb_marginal(trace, cache, 1, 1)
    exact = post.category_marginal(1)[0]
    assert abs(got.value - exact) <= 3.0 * got.se
    assert got.se < 0.02


def test_rb_beats_raw_frequencies(setup):
    # conditioning on the pmf draw removes the center-draw noise; across
    # replications the spread of the smoothed estimate must come out smaller
    tables, data, hyp, priors, post, cache, _ = setup
    ev = RankEvent.from_sets([[1], [2]], 2)
    rb_vals, raw_vals = [], []
    for k in range(50):
        tr = run_chain(data, hyp, priors, tables,
                       ChainConfig(iterations=1500, burnin=100, seed=1000 + k))
        rb_vals.append(rb_joint(tr, cache, ev, batch_count=10).value)
        raw_vals.append(np.mean((tr.ranks[:, 0] == 1) & (tr.ranks[:, 1] == 2)))
    rb_vals, raw_vals = np.asarray(rb_vals), np.asarray(raw_vals)
    assert rb_vals.var() < 0.8 * raw_vals.var()
    assert abs(rb_vals.mean() - post.probs[1]) < 0.005


def test_zero_mass_conditioning_raises(setup):
    tables, data, hyp, _, _, _, _ = setup
    priors = CategoryPriors(np.array([[1.0, 0.0], [0.5, 0.5]]))
    cache = AlignmentCache(data, hyp, priors, tables)
    trace = run_chain(data, hyp, priors, tables,
                      ChainConfig(iterations=2000, seed=2))
    with pytest.raises(NumericalError):
        rb_conditional(trace, cache,
                       RankEvent.from_sets([None, [1]], 2),
                       RankEvent.from_sets([[2], None], 2))


def test_chunked_evaluation_is_exact(setup, monkeypatch):
    _, _, _, _, _, cache, trace = setup
    ev = RankEvent.from_sets([[1], [2]], 2)
    full = es._event_values(trace, cache, ev)
    monkeypatch.setattr(es, "_CHUNK", 37)
    small = es._event_values(trace, cache, ev)
    assert np.array_equal(full, small)
    est_full = rb_marginal_table(trace, cache)
    assert np.array_equal(est_full[0], rb_marginal_table(trace, cache)[0])
