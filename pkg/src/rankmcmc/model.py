"""Model quantities for rank data with categorical covariates.

Each observed ranking in category j is a perturbation composed onto that
category's central ranking: ``y = noise o center_j``. The perturbation
distribution is a pmf over all p! rankings with a Dirichlet prior whose
weights grow geometrically in the cycle count, ``alpha_k = scale *
exp(precision * cycles_k)``, so rankings close to the identity in Cayley
distance get more prior mass and a single precision parameter controls the
concentration.

Counts enter everything through the residual tally: ``m_k(centers)`` is the
number of observations across all categories whose implied perturbation is
ranking k. Conjugacy then gives the collapsed posterior over centers used by
the samplers and the oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .permutation import GroupTables

__all__ = [
    "RankCounts",
    "HyperParams",
    "CategoryPriors",
    "residual_counts",
    "log_likelihood",
    "log_rank_posterior",
    "simulate_data",
    "draw_from_pmf",
]


@dataclass(frozen=True)
class RankCounts:
    """Observed ranking counts: ``counts[j, i-1]`` is the number of rankings
    with index i in category j+1 (categories are rows)."""

    p: int
    g: int
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != self.g:
            raise ValueError("counts must be a (g, p!) array")
        if np.any(c < 0):
            raise ValueError("counts must be nonnegative")
        object.__setattr__(self, "counts", c)

    @property
    def order(self) -> int:
        return self.counts.shape[1]

    @property
    def category_sizes(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class HyperParams:
    """Dirichlet weights for the perturbation pmf.

    ``alpha[k-1] = scale * exp(precision * cycles_k)``. The scale leaves all
    weight ratios untouched (they depend on the precision only) and exists so
    small worked instances like alpha=(2,1) are representable exactly.
    """

    precision: float
    scale: float
    alpha: np.ndarray

    @classmethod
    def from_precision(cls, precision: float, tables: GroupTables,
                       scale: float = 1.0) -> "HyperParams":
        if precision < 0:
            raise ValueError("precision must be nonnegative")
        if scale <= 0:
            raise ValueError("scale must be positive")
        alpha = scale * np.exp(precision * tables.cycles.astype(float))
        alpha.setflags(write=False)
        return cls(precision=float(precision), scale=float(scale), alpha=alpha)

    @property
    def alpha0(self) -> float:
        return float(self.alpha.sum())


class CategoryPriors:
    """Per-category prior pmfs over the p! center rankings.

    Rows are categories; each row sums to one. ``log_rows`` carries -inf for
    zero-prior states so unnormalized log posteriors stay exact.
    """

    def __init__(self, rows: np.ndarray):
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2:
            raise ValueError("prior rows must be a (g, p!) array")
        if np.any(rows < 0):
            raise ValueError("prior probabilities must be nonnegative")
        sums = rows.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-12):
            raise ValueError("each prior row must sum to 1 within 1e-12")
        self.rows = rows
        with np.errstate(divide="ignore"):
            self.log_rows = np.log(rows)
        self.rows.setflags(write=False)
        self.log_rows.setflags(write=False)

    @property
    def g(self) -> int:
        return self.rows.shape[0]

    @property
    def order(self) -> int:
        return self.rows.shape[1]

    @classmethod
    def uniform(cls, g: int, order: int) -> "CategoryPriors":
        return cls(np.full((g, order), 1.0 / order))

    @classmethod
    def point_mass(cls, indices, order: int) -> "CategoryPriors":
        indices = np.asarray(indices, dtype=np.int64)
        rows = np.zeros((indices.size, order))
        rows[np.arange(indices.size), indices - 1] = 1.0
        return cls(rows)

    def log_prob(self, central: np.ndarray) -> float:
        return float(self.log_rows[np.arange(self.g), np.asarray(central) - 1].sum())


def _central_array(central, g: int, order: int) -> np.ndarray:
    c = np.asarray(central, dtype=np.int64)
    if c.shape != (g,):
        raise ValueError(f"central ranks must have shape ({g},)")
    if np.any(c < 1) or np.any(c > order):
        raise ValueError(f"central rank indices must lie in 1..{order}")
    return c


def residual_counts(central, data: RankCounts, tables: GroupTables) -> np.ndarray:
    """Tally of implied perturbations: ``m[k-1]`` counts observations whose
    ranking equals ranking_k composed onto their category's center."""
    central = _central_array(central, data.g, data.order)
    m = np.zeros(data.order, dtype=np.int64)
    for j in range(data.g):
        row = data.counts[j]
        support = np.nonzero(row)[0]
        inv_c = tables.inverse_index[central[j] - 1]
        for i in support:
            m[tables.compose_index(int(i) + 1, int(inv_c)) - 1] += row[i]
    return m


def log_likelihood(noise_pmf, central, data: RankCounts,
                   tables: GroupTables) -> float:
    """Log probability of the counts given the perturbation pmf and centers.

    Returns -inf when an observed perturbation has zero pmf mass.
    """
    noise_pmf = np.asarray(noise_pmf, dtype=float)
    m = residual_counts(central, data, tables)
    active = m > 0
    if np.any(noise_pmf[active] <= 0.0):
        return float("-inf")
    return float(m[active] @ np.log(noise_pmf[active]))


def log_rank_posterior(central, data: RankCounts, hyp: HyperParams,
                       priors: CategoryPriors, tables: GroupTables) -> float:
    """Unnormalized log posterior of the centers with the perturbation pmf
    integrated out: log prior + sum_k logGamma(m_k + alpha_k).

    Only differences across center configurations are meaningful; the
    normalizing constant is supplied by the oracle module.
    """
    central = _central_array(central, data.g, data.order)
    lp = priors.log_prob(central)
    if lp == float("-inf"):
        return lp
    m = residual_counts(central, data, tables)
    return lp + float(gammaln(m + hyp.alpha).sum())


def draw_from_pmf(pmf: np.ndarray, rng: np.random.Generator,
                  size: int | None = None):
    """CDF-inversion draw of 1-based indices; ties resolve to the lowest
    index because zero-width intervals can never be hit."""
    cdf = np.cumsum(pmf)
    cdf[-1] = 1.0
    if size is None:
        return int(np.searchsorted(cdf, rng.random(), side="right")) + 1
    u = rng.random(size)
    return np.searchsorted(cdf, u, side="right").astype(np.int64) + 1


def simulate_data(noise_pmf, central, sizes, tables: GroupTables,
                  seed) -> RankCounts:
    """Draw ranking counts from the model: for each category j, ``sizes[j]``
    perturbations from ``noise_pmf`` composed onto ``central[j]``."""
    noise_pmf = np.asarray(noise_pmf, dtype=float)
    if noise_pmf.ndim != 1 or noise_pmf.size != tables.order:
        raise ValueError("noise pmf must have length p!")
    if np.any(noise_pmf < 0) or abs(noise_pmf.sum() - 1.0) > 1e-9:
        raise ValueError("noise pmf must be a probability vector")
    sizes = np.asarray(sizes, dtype=np.int64)
    central = _central_array(central, sizes.size, tables.order)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    counts = np.zeros((sizes.size, tables.order), dtype=np.int64)
    for j in range(sizes.size):
        noise_idx = draw_from_pmf(noise_pmf, rng, size=int(sizes[j]))
        observed = tables.compose_col(central[j])[noise_idx - 1]
        counts[j] = np.bincount(observed - 1, minlength=tables.order)
    return RankCounts(p=tables.p, g=sizes.size, counts=counts)
