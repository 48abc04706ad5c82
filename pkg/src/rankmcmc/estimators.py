"""Rao-Blackwellized posterior summaries from stored chains.

Center probabilities are estimated by averaging the exact conditional center
pmf evaluated at each retained perturbation-pmf draw, instead of counting
center visits; conditioning strips the extra layer of sampling noise, so
these never do worse than raw frequencies. Standard errors come from batch
means over the (autocorrelated) draw sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .samplers import AlignmentCache, ChainTrace

__all__ = [
    "EstimateWithSE",
    "RankEvent",
    "batch_means_se",
    "rb_marginal",
    "rb_marginal_table",
    "rb_joint",
    "rb_conditional",
]

_CHUNK = 4096

# reported standard errors must rest on enough batch means to be meaningful
_MIN_BATCHES = 10


def _check_batches(batch_count: int) -> None:
    if batch_count < _MIN_BATCHES:
        raise ValueError(
            f"standard errors need at least {_MIN_BATCHES} batches, "
            f"got {batch_count}")


@dataclass(frozen=True)
class EstimateWithSE:
    value: float
    se: float
    batches: int


def batch_means_se(values, batch_count: int = 30) -> tuple[float, float]:
    """Mean and batch-means standard error of a (possibly autocorrelated)
    scalar series. The series is cut into batch_count contiguous batches,
    dropping the remainder; batch means are treated as near-independent."""
    values = np.asarray(values, dtype=float)
    if batch_count < 2:
        raise ValueError("need at least 2 batches")
    if values.size < 2 * batch_count:
        raise ValueError(
            f"series of length {values.size} too short for "
            f"{batch_count} batches; need at least {2 * batch_count}")
    width = values.size // batch_count
    trimmed = values[:width * batch_count].reshape(batch_count, width)
    means = trimmed.mean(axis=1)
    se = means.std(ddof=1) / np.sqrt(batch_count)
    return float(values.mean()), float(se)


@dataclass(frozen=True)
class RankEvent:
    """Product event over categories: center j must land in the set marked
    true in row j. Intersections of such events are again such events."""

    masks: np.ndarray  # (g, order) bool

    def __post_init__(self):
        masks = np.asarray(self.masks, dtype=bool)
        if masks.ndim != 2:
            raise ValueError("event masks must be a (categories, centers) grid")
        if not masks.any(axis=1).all():
            raise ValueError("every category needs at least one allowed center")
        object.__setattr__(self, "masks", masks)

    @classmethod
    def from_sets(cls, allowed, order: int) -> "RankEvent":
        """Build from an iterable of per-category collections of 1-based
        center indices; None or empty means unrestricted."""
        rows = []
        for entry in allowed:
            row = np.zeros(order, dtype=bool)
            if entry is None or len(entry) == 0:
                row[:] = True
            else:
                idx = np.asarray(list(entry), dtype=np.int64)
                if idx.min() < 1 or idx.max() > order:
                    raise ValueError("center index out of range in event")
                row[idx - 1] = True
            rows.append(row)
        return cls(np.stack(rows))

    @classmethod
    def all_true(cls, g: int, order: int) -> "RankEvent":
        return cls(np.ones((g, order), dtype=bool))

    def intersect(self, other: "RankEvent") -> "RankEvent":
        return RankEvent(self.masks & other.masks)


def _event_values(trace: ChainTrace, cache: AlignmentCache,
                  event: RankEvent) -> np.ndarray:
    """Per-draw conditional probability of the event: product over categories
    of the masked conditional pmf mass. Computed in chunks to bound memory."""
    if event.masks.shape != (cache.g, cache.order):
        raise ValueError("event shape does not match the instance")
    R = trace.retained
    out = np.empty(R)
    for lo in range(0, R, _CHUNK):
        hi = min(lo + _CHUNK, R)
        pmf = cache.conditional_pmf_batch(trace.theta[lo:hi])  # (c, g, order)
        vals = np.ones(hi - lo)
        for j in range(cache.g):
            vals *= pmf[:, j, event.masks[j]].sum(axis=1)
        out[lo:hi] = vals
    return out


def rb_marginal(trace: ChainTrace, cache: AlignmentCache, category: int,
                index: int, batch_count: int = 30) -> EstimateWithSE:
    """Posterior probability that the given category's center is the given
    group element (both 1-based), with a batch-means standard error."""
    if not 1 <= category <= cache.g:
        raise ValueError(f"category {category} out of range")
    if not 1 <= index <= cache.order:
        raise ValueError(f"center index {index} out of range")
    masks = np.ones((cache.g, cache.order), dtype=bool)
    masks[category - 1] = False
    masks[category - 1, index - 1] = True
    return rb_joint(trace, cache, RankEvent(masks), batch_count)


def rb_marginal_table(trace: ChainTrace, cache: AlignmentCache,
                      batch_count: int = 30) -> tuple[np.ndarray, np.ndarray]:
    """Posterior center pmf per category with standard errors.

    Returns (estimate, se), each of shape (g, order). Rows of the estimate
    sum to one exactly because every averaged conditional pmf row does.
    """
    _check_batches(batch_count)
    R = trace.retained
    if R < 2 * batch_count:
        raise ValueError(
            f"{R} retained draws cannot fill {batch_count} batches twice")
    width = R // batch_count
    used = width * batch_count
    batch_sums = np.zeros((batch_count, cache.g, cache.order))
    total = np.zeros((cache.g, cache.order))
    for lo in range(0, R, _CHUNK):
        hi = min(lo + _CHUNK, R)
        pmf = cache.conditional_pmf_batch(trace.theta[lo:hi])
        total += pmf.sum(axis=0)
        inside = np.arange(lo, hi)
        b = inside // width
        keep = b < batch_count
        np.add.at(batch_sums, b[keep], pmf[keep])
    est = total / R
    means = batch_sums / width
    se = means.std(axis=0, ddof=1) / np.sqrt(batch_count)
    return est, se


def rb_joint(trace: ChainTrace, cache: AlignmentCache, event: RankEvent,
             batch_count: int = 30) -> EstimateWithSE:
    """Posterior probability that every category's center falls in its
    allowed set, with a batch-means standard error."""
    _check_batches(batch_count)
    vals = _event_values(trace, cache, event)
    mean, se = batch_means_se(vals, batch_count)
    return EstimateWithSE(value=mean, se=se, batches=batch_count)


def rb_conditional(trace: ChainTrace, cache: AlignmentCache,
                   target: RankEvent, given: RankEvent,
                   batch_count: int = 30) -> EstimateWithSE:
    """Posterior probability of ``target`` given ``given``, as a ratio of
    Rao-Blackwellized averages.

    The point estimate divides the overall averages; the standard error is
    the spread of per-batch ratios, so the denominator must keep visible mass
    in every batch.
    """
    _check_batches(batch_count)
    num_vals = _event_values(trace, cache, target.intersect(given))
    den_vals = _event_values(trace, cache, given)
    if den_vals.size < 2 * batch_count:
        raise ValueError(
            f"{den_vals.size} retained draws cannot fill {batch_count} "
            "batches twice")
    den_total = den_vals.mean()
    if den_total <= 0.0:
        raise NumericalError("conditioning event has zero estimated mass")
    width = den_vals.size // batch_count
    nb = num_vals[:width * batch_count].reshape(batch_count, width).mean(axis=1)
    db = den_vals[:width * batch_count].reshape(batch_count, width).mean(axis=1)
    if np.any(db <= 0.0):
        raise NumericalError(
            "conditioning event vanishes inside a batch; standard error "
            "is undefined, run a longer chain or merge batches")
    ratios = nb / db
    se = ratios.std(ddof=1) / np.sqrt(batch_count)
    return EstimateWithSE(value=float(num_vals.mean() / den_total),
                          se=float(se), batches=batch_count)
