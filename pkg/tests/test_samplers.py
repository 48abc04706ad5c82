"""Chain correctness: conditionals, invariance, bookkeeping, round trips."""

import numpy as np
import pytest

from rankmcmc.errors import ConfigError
from rankmcmc.model import CategoryPriors, HyperParams, RankCounts
from rankmcmc import oracle as oc
from rankmcmc.permutation import build_tables
from rankmcmc.samplers import (AlignmentCache, ChainConfig, ChainTrace,
                               conditional_rank_pmf, run_chain, run_chains)


@pytest.fixture(scope="module")
def tables2():
    return build_tables(2)


@pytest.fixture(scope="module")
def mixing_instance(tables2):
    """Small balanced counts: every center configuration keeps real mass, so
    chains mix in a few sweeps and long-run frequencies are testable."""
    data = RankCounts(p=2, g=2, counts=[[3, 1], [2, 2]])
    hyp = HyperParams.from_precision(0.3, tables2)
    priors = CategoryPriors.uniform(2, 2)
    post = oc.enumerate_posterior(data, hyp, priors, tables2)
    return data, hyp, priors, post


@pytest.fixture(scope="module")
def trapping_instance(tables2):
    """Heavy counts concentrate the posterior on two swapped-center modes
    that plain center draws almost never bridge."""
    data = RankCounts(p=2, g=2, counts=[[40, 10], [14, 36]])
    hyp = HyperParams.from_precision(np.log(2.0), tables2, scale=0.5)
    priors = CategoryPriors.uniform(2, 2)
    return data, hyp, priors


def test_conditional_rank_pmf_squared_weights(tables2):
    # two identical observations: center weights are squared pmf components
    data = RankCounts(p=2, g=1, counts=[[2, 0]])
    hyp = HyperParams(precision=0.0, scale=1.0, alpha=np.array([1.0, 1.0]))
    priors = CategoryPriors.uniform(1, 2)
    pmf = conditional_rank_pmf([0.8, 0.2], data, hyp, priors, tables2)
    assert np.abs(pmf - [16 / 17, 1 / 17]).max() < 1e-14


def test_conditional_rank_pmf_point_prior(tables2):
    data = RankCounts(p=2, g=1, counts=[[2, 0]])
    hyp = HyperParams(precision=0.0, scale=1.0, alpha=np.array([1.0, 1.0]))
    priors = CategoryPriors.point_mass([2], 2)
    pmf = conditional_rank_pmf([0.8, 0.2], data, hyp, priors, tables2)
    assert pmf.tolist() == [[0.0, 1.0]]


def test_batch_conditional_matches_single(mixing_instance, tables2):
    data, hyp, priors, _ = mixing_instance
    cache = AlignmentCache(data, hyp, priors, tables2)
    thetas = np.random.default_rng(1).dirichlet((2.0, 1.0), size=8)
    batch = cache.conditional_pmf_batch(thetas)
    single = np.stack([cache.conditional_pmf(th) for th in thetas])
    assert np.array_equal(batch, single)


def test_tally_matches_model(mixing_instance, tables2):
    from rankmcmc.model import residual_counts
    data, hyp, priors, _ = mixing_instance
    cache = AlignmentCache(data, hyp, priors, tables2)
    for ranks in ([1, 1], [1, 2], [2, 1], [2, 2]):
        got = cache.tally(np.asarray(ranks))
        want = residual_counts(ranks, data, tables2)
        assert np.array_equal(got, want)


@pytest.mark.parametrize("variant,iters,tol", [
    ("gibbs", 50_000, 0.02),
    ("sandwich_uniform", 30_000, 0.02),
    ("sandwich_local", 30_000, 0.02),
])
def test_long_run_state_frequencies(mixing_instance, tables2, variant,
                                    iters, tol):
    data, hyp, priors, post = mixing_instance
    cfg = ChainConfig(iterations=iters, burnin=1000, seed=42, variant=variant)
    trace = run_chain(data, hyp, priors, tables2, cfg)
    flat = (trace.ranks[:, 0] - 1) * 2 + (trace.ranks[:, 1] - 1)
    emp = np.bincount(flat, minlength=4) / flat.size
    assert 0.5 * np.abs(emp - post.probs).sum() < tol
    # pmf draws agree with the exact posterior mean of the first component
    exact_mean = post.probs @ ((post.residual_matrix[:, 0] + hyp.alpha[0])
                               / (data.total + hyp.alpha0))
    assert abs(trace.theta[:, 0].mean() - exact_mean) < 0.01


def test_gibbs_has_no_move_flags(mixing_instance, tables2):
    data, hyp, priors, _ = mixing_instance
    trace = run_chain(data, hyp, priors, tables2,
                      ChainConfig(iterations=200, seed=0))
    assert np.all(trace.accepted == -1)


def test_sandwich_flags_show_both_outcomes(trapping_instance, tables2):
    data, hyp, priors = trapping_instance
    cfg = ChainConfig(iterations=2000, seed=3, variant="sandwich_uniform")
    trace = run_chain(data, hyp, priors, tables2, cfg, init_ranks=[2, 1])
    assert set(np.unique(trace.accepted)) == {0, 1}


def test_gibbs_stays_in_minor_mode(trapping_instance, tables2):
    # per-sweep escape probability is about 2e-6, so 200 sweeps stay put
    data, hyp, priors = trapping_instance
    cfg = ChainConfig(iterations=200, seed=3)
    trace = run_chain(data, hyp, priors, tables2, cfg, init_ranks=[2, 1])
    assert np.all(trace.ranks == [2, 1])


def test_sandwich_escapes_minor_mode(trapping_instance, tables2):
    data, hyp, priors = trapping_instance
    cfg = ChainConfig(iterations=2000, seed=3, variant="sandwich_uniform")
    trace = run_chain(data, hyp, priors, tables2, cfg, init_ranks=[2, 1])
    flat = (trace.ranks[:, 0] - 1) * 2 + (trace.ranks[:, 1] - 1)
    major = np.mean(flat == 1)
    assert major > 0.6
    assert np.mean(flat == 2) > 0.05


def test_same_seed_reproduces(mixing_instance, tables2):
    data, hyp, priors, _ = mixing_instance
    cfg = ChainConfig(iterations=80, seed=9, variant="sandwich_local")
    a = run_chain(data, hyp, priors, tables2, cfg)
    b = run_chain(data, hyp, priors, tables2, cfg)
    assert np.array_equal(a.theta, b.theta)
    assert np.array_equal(a.ranks, b.ranks)
    assert np.array_equal(a.accepted, b.accepted)
    c = run_chain(data, hyp, priors, tables2,
                  ChainConfig(iterations=80, seed=10, variant="sandwich_local"))
    assert not np.array_equal(a.theta, c.theta)


def test_spawned_chains_are_distinct_and_reproducible(mixing_instance, tables2):
    data, hyp, priors, _ = mixing_instance
    cfg = ChainConfig(iterations=60, seed=9)
    first = run_chains(data, hyp, priors, tables2, cfg, 3)
    second = run_chains(data, hyp, priors, tables2, cfg, 3)
    assert [t.chain_index for t in first] == [0, 1, 2]
    for x, y in zip(first, second):
        assert np.array_equal(x.theta, y.theta)
    assert not np.array_equal(first[0].theta, first[1].theta)
    assert not np.array_equal(first[1].theta, first[2].theta)


def test_retention_accounting(mixing_instance, tables2):
    data, hyp, priors, _ = mixing_instance
    cfg = ChainConfig(iterations=10, burnin=4, thin=2, seed=0)
    assert cfg.retained == 3
    trace = run_chain(data, hyp, priors, tables2, cfg)
    assert trace.retained == 3
    assert trace.iteration_numbers.tolist() == [6, 8, 10]


def test_csv_round_trip(mixing_instance, tables2, tmp_path):
    data, hyp, priors, _ = mixing_instance
    cfg = ChainConfig(iterations=25, burnin=5, thin=2, seed=7,
                      variant="sandwich_uniform")
    trace = run_chain(data, hyp, priors, tables2, cfg)
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    back = ChainTrace.from_csv(path)
    assert np.array_equal(back.theta, trace.theta)
    assert np.array_equal(back.ranks, trace.ranks)
    assert np.array_equal(back.accepted, trace.accepted)
    assert np.array_equal(back.iteration_numbers, trace.iteration_numbers)
    assert (back.variant, back.p, back.g) == (trace.variant, trace.p, trace.g)
    assert (back.iterations, back.burnin, back.thin, back.seed) == (
        trace.iterations, trace.burnin, trace.thin, trace.seed)


def test_config_validation():
    with pytest.raises(ConfigError):
        ChainConfig(iterations=10, variant="zig")
    with pytest.raises(ConfigError):
        ChainConfig(iterations=10, burnin=10)
    with pytest.raises(ConfigError):
        ChainConfig(iterations=10, thin=0)
    with pytest.raises(ConfigError):
        ChainConfig(iterations=10, burnin=-1)


def test_init_ranks_validation(mixing_instance, tables2):
    data, hyp, priors, _ = mixing_instance
    cfg = ChainConfig(iterations=5, seed=0)
    with pytest.raises(ConfigError):
        run_chain(data, hyp, priors, tables2, cfg, init_ranks=[1])
    with pytest.raises(ConfigError):
        run_chain(data, hyp, priors, tables2, cfg, init_ranks=[0, 1])
    with pytest.raises(ConfigError):
        run_chain(data, hyp, priors, tables2, cfg, init_ranks=[1, 3])


def test_cache_shape_validation(tables2):
    data = RankCounts(p=2, g=2, counts=[[1, 0], [0, 1]])
    hyp = HyperParams.from_precision(0.1, tables2)
    with pytest.raises(ConfigError):
        AlignmentCache(data, hyp, CategoryPriors.uniform(3, 2), tables2)
    with pytest.raises(ConfigError):
        AlignmentCache(data, hyp, CategoryPriors.uniform(2, 2),
                       build_tables(3))
