"""Gibbs and sandwich samplers for the center-plus-noise rank model.

One iteration draws fresh per-category centers given the current perturbation
pmf, then a fresh pmf given those centers; the sandwich variants insert a
group move between the two conditional draws, composing a random group
element onto every center at once and accepting by a ratio test against the
collapsed posterior.

The per-category work is vectorized through cached alignment tables: for
category j, ``T_j[i, r]`` is the index of the residual of observed ranking i
under candidate center r. These never change during a run, so each
conditional reduces to one gather and one matrix-vector product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import ConfigError, NumericalError
from .model import CategoryPriors, HyperParams, RankCounts
from .permutation import GroupTables

__all__ = [
    "ChainConfig",
    "ChainTrace",
    "AlignmentCache",
    "conditional_rank_pmf",
    "run_chain",
    "run_chains",
]

VARIANTS = ("gibbs", "sandwich_uniform", "sandwich_local")

_LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class ChainConfig:
    """Run-length bookkeeping for a single chain.

    ``iterations`` counts total sweeps including warmup; a sweep t is
    retained when t > burnin and (t - burnin) is a multiple of thin, giving
    floor((iterations - burnin) / thin) stored draws.
    """

    iterations: int
    burnin: int = 0
    thin: int = 1
    seed: int = 0
    variant: str = "gibbs"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; "
                              f"expected one of {VARIANTS}")
        if self.burnin < 0 or self.thin < 1:
            raise ConfigError("burnin must be >= 0 and thin >= 1")
        if self.iterations <= self.burnin:
            raise ConfigError("iterations must exceed burnin")

    @property
    def retained(self) -> int:
        return (self.iterations - self.burnin) // self.thin


@dataclass
class ChainTrace:
    """Stored draws of one chain.

    theta has one row per retained sweep; ranks holds 1-based center indices;
    accepted is 1/0 for the middle-move outcome of sandwich sweeps and -1 for
    plain Gibbs sweeps, where no ratio test happens.
    """

    variant: str
    p: int
    g: int
    iterations: int
    burnin: int
    thin: int
    seed: int
    chain_index: int
    iteration_numbers: np.ndarray
    theta: np.ndarray
    ranks: np.ndarray
    accepted: np.ndarray

    @property
    def retained(self) -> int:
        return self.theta.shape[0]

    def to_csv(self, path) -> None:
        order = self.theta.shape[1]
        meta = {
            "variant": self.variant, "p": self.p, "g": self.g,
            "iterations": self.iterations, "burnin": self.burnin,
            "thin": self.thin, "seed": self.seed,
            "chain_index": self.chain_index,
        }
        cols = (["iteration"]
                + [f"theta_{k}" for k in range(1, order + 1)]
                + [f"rank_{j}" for j in range(1, self.g + 1)]
                + ["accepted"])
        with open(path, "w") as f:
            for k, v in meta.items():
                f.write(f"# {k}={v}\n")
            f.write(",".join(cols) + "\n")
            for r in range(self.retained):
                row = ([str(self.iteration_numbers[r])]
                       + ["%.17g" % x for x in self.theta[r]]
                       + [str(x) for x in self.ranks[r]]
                       + [str(self.accepted[r])])
                f.write(",".join(row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "ChainTrace":
        meta = {}
        header = None
        rows = []
        with open(path) as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    key, _, val = line[1:].partition("=")
                    meta[key.strip()] = val.strip()
                elif header is None:
                    header = line.split(",")
                else:
                    rows.append(line.split(","))
        if header is None:
            raise ConfigError(f"no trace header found in {path}")
        arr = np.asarray(rows, dtype=float)
        order = sum(1 for c in header if c.startswith("theta_"))
        g = sum(1 for c in header if c.startswith("rank_"))
        return cls(
            variant=meta["variant"], p=int(meta["p"]), g=int(meta["g"]),
            iterations=int(meta["iterations"]), burnin=int(meta["burnin"]),
            thin=int(meta["thin"]), seed=int(meta["seed"]),
            chain_index=int(meta.get("chain_index", 0)),
            iteration_numbers=arr[:, 0].astype(np.int64),
            theta=arr[:, 1:1 + order],
            ranks=arr[:, 1 + order:1 + order + g].astype(np.int64),
            accepted=arr[:, -1].astype(np.int8),
        )


class AlignmentCache:
    """Precomputed, iteration-independent structure for one data set.

    Holds the per-category alignment tables, the prior log rows and the
    Dirichlet weights; every conditional the samplers need reduces to array
    gathers against this object.
    """

    def __init__(self, data: RankCounts, hyp: HyperParams,
                 priors: CategoryPriors, tables: GroupTables):
        if data.p != tables.p:
            raise ConfigError("data and group tables disagree on item count")
        if priors.rows.shape != (data.g, data.order):
            raise ConfigError("prior table shape does not match the data")
        if hyp.alpha.size != data.order:
            raise ConfigError("weight vector length does not match the data")
        self.data = data
        self.hyp = hyp
        self.priors = priors
        self.tables = tables
        self.order = data.order
        self.g = data.g
        self.alpha = np.asarray(hyp.alpha, dtype=float)
        self.log_prior_rows = priors.log_rows
        self.counts = []
        self.align = []
        for j in range(data.g):
            support = np.nonzero(data.counts[j])[0]
            self.counts.append(data.counts[j, support].astype(float))
            T = np.empty((support.size, self.order), dtype=np.int64)
            for pos, i in enumerate(support):
                T[pos] = tables.residual_row(int(i) + 1) - 1
            self.align.append(T)

    def conditional_log_pmf(self, log_theta: np.ndarray) -> np.ndarray:
        """Unnormalized per-category log pmf over candidate centers,
        shape (g, order)."""
        out = np.empty((self.g, self.order))
        for j in range(self.g):
            out[j] = self.counts[j] @ log_theta[self.align[j]]
        out += self.log_prior_rows
        return out

    def conditional_pmf(self, theta: np.ndarray) -> np.ndarray:
        """Normalized per-category center pmf given a perturbation pmf."""
        log_theta = np.log(np.maximum(theta, _LOG_FLOOR))
        lw = self.conditional_log_pmf(log_theta)
        mx = lw.max(axis=1, keepdims=True)
        if not np.all(np.isfinite(mx)):
            raise NumericalError("conditional center weights vanished")
        w = np.exp(lw - mx)
        return w / w.sum(axis=1, keepdims=True)

    def conditional_pmf_batch(self, thetas: np.ndarray) -> np.ndarray:
        """conditional_pmf for every row of thetas, shape (R, g, order)."""
        thetas = np.atleast_2d(thetas)
        log_theta = np.log(np.maximum(thetas, _LOG_FLOOR))
        out = np.empty((thetas.shape[0], self.g, self.order))
        for j in range(self.g):
            lw = log_theta[:, self.align[j]].transpose(0, 2, 1) @ self.counts[j]
            lw += self.log_prior_rows[j]
            mx = lw.max(axis=1, keepdims=True)
            w = np.exp(lw - mx)
            out[:, j, :] = w / w.sum(axis=1, keepdims=True)
        return out

    def tally(self, ranks: np.ndarray) -> np.ndarray:
        """Residual tally vector for a center configuration."""
        m = np.zeros(self.order)
        for j in range(self.g):
            np.add.at(m, self.align[j][:, ranks[j] - 1], self.counts[j])
        return m

    def log_posterior(self, ranks: np.ndarray, m: np.ndarray | None = None) -> float:
        """Collapsed (pmf-integrated) unnormalized log posterior of a center
        configuration."""
        if m is None:
            m = self.tally(ranks)
        lp = gammaln(m + self.alpha).sum()
        for j in range(self.g):
            lp += self.log_prior_rows[j, ranks[j] - 1]
        return float(lp)


def conditional_rank_pmf(theta, data: RankCounts, hyp: HyperParams,
                         priors: CategoryPriors, tables: GroupTables) -> np.ndarray:
    """Per-category posterior pmf of the centers given the perturbation pmf,
    shape (g, order). Convenience wrapper over AlignmentCache."""
    cache = AlignmentCache(data, hyp, priors, tables)
    return cache.conditional_pmf(np.asarray(theta, dtype=float))


def _draw_ranks(cache: AlignmentCache, pmf: np.ndarray, rng) -> np.ndarray:
    ranks = np.empty(cache.g, dtype=np.int64)
    u = rng.random(cache.g)
    for j in range(cache.g):
        cdf = np.cumsum(pmf[j])
        cdf[-1] = 1.0
        ranks[j] = np.searchsorted(cdf, u[j], side="right") + 1
    return ranks


def _draw_theta(cache: AlignmentCache, m: np.ndarray, rng) -> np.ndarray:
    gam = rng.gamma(m + cache.alpha)
    tot = gam.sum()
    if tot <= 0.0 or not np.isfinite(tot):
        raise NumericalError("degenerate Dirichlet draw")
    return gam / tot


def run_chain(data: RankCounts, hyp: HyperParams, priors: CategoryPriors,
              tables: GroupTables, config: ChainConfig,
              init_ranks=None, init_theta=None, rng=None,
              chain_index: int = 0,
              cache: AlignmentCache | None = None) -> ChainTrace:
    """Run one chain and return its retained draws.

    Every sweep draws fresh centers from their categorical conditionals given
    the current perturbation pmf, then a fresh pmf from the Dirichlet
    conditional of the centers kept at the end of the sweep. Sandwich
    variants insert a group move between the two draws: a group element is
    composed onto all centers at once and kept with probability
    min(1, posterior ratio). The element is uniform for ``sandwich_uniform``;
    for ``sandwich_local`` it is drawn from the prior weights with the
    identity excluded, and the ratio includes the forward/backward proposal
    correction (identically 1 here because inverse elements share a cycle
    count, but carried explicitly).

    By default the pmf is initialized from its Dirichlet prior. Passing
    ``init_ranks`` instead starts the chain at that center configuration by
    initializing the pmf from the center conditional, so a chain pinned to
    one posterior mode stays there rather than being scattered by a diffuse
    prior draw. ``init_theta`` overrides both.
    """
    if cache is None:
        cache = AlignmentCache(data, hyp, priors, tables)
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(config.seed))

    if init_theta is not None:
        theta = np.asarray(init_theta, dtype=float).copy()
        if theta.shape != (cache.order,) or np.any(theta <= 0.0):
            raise ConfigError("init_theta must be a positive vector with one "
                              "entry per group element")
        theta /= theta.sum()
    elif init_ranks is not None:
        ranks = np.asarray(init_ranks, dtype=np.int64)
        if ranks.shape != (cache.g,):
            raise ConfigError("init_ranks must give one center per category")
        if np.any(ranks < 1) or np.any(ranks > cache.order):
            raise ConfigError("init_ranks entries out of range")
        theta = _draw_theta(cache, cache.tally(ranks), rng)
    else:
        theta = _draw_theta(cache, np.zeros(cache.order), rng)

    sandwich = config.variant != "gibbs"
    if config.variant == "sandwich_local":
        move_w = cache.alpha.copy()
        move_w[0] = 0.0
        tot = move_w.sum()
        if tot <= 0.0:
            raise NumericalError("local move needs positive non-identity "
                                 "weights")
        move_w /= tot
        move_cdf = np.cumsum(move_w)
        move_cdf[-1] = 1.0
    elif config.variant == "sandwich_uniform":
        move_w = np.full(cache.order, 1.0 / cache.order)
        move_cdf = np.cumsum(move_w)
        move_cdf[-1] = 1.0

    inv = cache.tables.inverse_index

    n_keep = config.retained
    theta_out = np.empty((n_keep, cache.order))
    ranks_out = np.empty((n_keep, cache.g), dtype=np.int64)
    acc_out = np.full(n_keep, -1, dtype=np.int8)
    iter_out = np.empty(n_keep, dtype=np.int64)

    kept = 0
    for t in range(1, config.iterations + 1):
        pmf = cache.conditional_pmf(theta)
        ranks = _draw_ranks(cache, pmf, rng)
        m = cache.tally(ranks)

        accepted = -1
        if sandwich:
            lp = cache.log_posterior(ranks, m)
            sigma = int(np.searchsorted(move_cdf, rng.random(),
                                        side="right")) + 1
            row = cache.tables.compose_row(sigma)
            prop = row[ranks - 1]
            m_prop = cache.tally(prop)
            lp_prop = cache.log_posterior(prop, m_prop)
            log_ratio = lp_prop - lp
            if config.variant == "sandwich_local":
                log_ratio += np.log(move_w[inv[sigma - 1] - 1]) \
                    - np.log(move_w[sigma - 1])
            if np.log(rng.random()) < log_ratio:
                ranks, m = prop, m_prop
                accepted = 1
            else:
                accepted = 0

        theta = _draw_theta(cache, m, rng)

        if t > config.burnin and (t - config.burnin) % config.thin == 0:
            theta_out[kept] = theta
            ranks_out[kept] = ranks
            acc_out[kept] = accepted
            iter_out[kept] = t
            kept += 1

    return ChainTrace(
        variant=config.variant, p=data.p, g=data.g,
        iterations=config.iterations, burnin=config.burnin,
        thin=config.thin, seed=config.seed, chain_index=chain_index,
        iteration_numbers=iter_out, theta=theta_out, ranks=ranks_out,
        accepted=acc_out)


def run_chains(data: RankCounts, hyp: HyperParams, priors: CategoryPriors,
               tables: GroupTables, config: ChainConfig, n_chains: int,
               init_ranks=None, init_theta=None) -> list[ChainTrace]:
    """Run independent chains from split seed streams.

    Streams come from spawning the configured seed, so any chain count is
    reproducible from the single base seed and chains never share a stream.
    """
    if n_chains < 1:
        raise ConfigError("n_chains must be positive")
    cache = AlignmentCache(data, hyp, priors, tables)
    children = np.random.SeedSequence(config.seed).spawn(n_chains)
    traces = []
    for idx, child in enumerate(children):
        rng = np.random.default_rng(child)
        traces.append(run_chain(data, hyp, priors, tables, config,
                                init_ranks=init_ranks, init_theta=init_theta,
                                rng=rng, chain_index=idx, cache=cache))
    return traces
