"""Convergence diagnostics for stored chains.

The statistics here are deliberately plain: biased-normalization
autocorrelations, the between/within variance ratio for parallel chains, and
total-variation / Kolmogorov-Smirnov distances against exact references from
the enumeration oracle. Their point is to expose the failure mode these
samplers are prone to: a chain that looks converged by every single-chain
statistic while it sits in one mode of a two-mode posterior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "acf",
    "psrf",
    "tv_distance",
    "ks_distance",
    "flat_state_index",
    "running_state_tv",
    "TrapReport",
    "trap_report",
]


def acf(series, max_lag: int) -> np.ndarray:
    """Autocorrelation at lags 0..max_lag with the biased 1/n normalization
    (guarantees the sequence is positive semidefinite)."""
    x = np.asarray(series, dtype=float)
    n = x.size
    if max_lag < 0 or max_lag >= n:
        raise ValueError("max_lag must lie in [0, len(series) - 1]")
    x = x - x.mean()
    c0 = (x @ x) / n
    if c0 == 0.0:
        raise ValueError("constant series has no autocorrelation")
    out = np.empty(max_lag + 1)
    for h in range(max_lag + 1):
        out[h] = (x[:n - h] @ x[h:]) / (n * c0)
    return out


def psrf(chains) -> float:
    """Potential scale reduction factor for parallel chains of one scalar.

    Uses the law-of-total-variance form with biased (1/n) variances: with W
    the mean within-chain variance and B the variance of the chain means,
    returns sqrt((W + B) / W). Identical chains give exactly 1.0; chains
    stuck in different modes push B far above W.
    """
    arr = np.asarray(chains, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise ValueError("need a 2-D array with one row per chain (>= 2)")
    W = arr.var(axis=1, ddof=0).mean()
    if W == 0.0:
        raise ValueError("within-chain variance is zero")
    B = arr.mean(axis=1).var(ddof=0)
    return float(np.sqrt((W + B) / W))


def tv_distance(p, q) -> float:
    """Total variation distance between two pmfs on the same support."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("pmfs must share a support")
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("pmfs must be nonnegative")
    return float(0.5 * np.abs(p - q).sum())


def ks_distance(samples, cdf) -> float:
    """One-sample Kolmogorov-Smirnov statistic: the largest gap between the
    empirical cdf of the samples and the supplied cdf callable."""
    xs = np.sort(np.asarray(samples, dtype=float))
    n = xs.size
    if n == 0:
        raise ValueError("need at least one sample")
    F = np.asarray(cdf(xs), dtype=float)
    i = np.arange(1, n + 1)
    return float(max((i / n - F).max(), (F - (i - 1) / n).max()))


def flat_state_index(ranks: np.ndarray, order: int) -> np.ndarray:
    """Mixed-radix flattening of center tuples, first category most
    significant; matches the enumeration order of the exact oracle."""
    ranks = np.atleast_2d(np.asarray(ranks, dtype=np.int64))
    flat = np.zeros(ranks.shape[0], dtype=np.int64)
    for j in range(ranks.shape[1]):
        flat = flat * order + (ranks[:, j] - 1)
    return flat


def running_state_tv(ranks: np.ndarray, exact_probs: np.ndarray, order: int,
                     limit: int | None = None) -> np.ndarray:
    """Total variation between the running empirical distribution of the
    first m retained center tuples and the exact posterior, for m = 1..limit.
    Shows how many retained draws a chain needs before its occupancy matches
    the target."""
    flat = flat_state_index(ranks, order)
    q = exact_probs.size
    m_max = flat.size if limit is None else min(limit, flat.size)
    counts = np.zeros(q)
    out = np.empty(m_max)
    for m in range(m_max):
        counts[flat[m]] += 1
        out[m] = 0.5 * np.abs(counts / (m + 1) - exact_probs).sum()
    return out


@dataclass(frozen=True)
class TrapReport:
    """Joint summary exposing the stuck-chain failure mode: a chain can show
    negligible autocorrelation while its state occupancy is nowhere near the
    posterior."""

    tv_to_exact: float
    acf_values: np.ndarray
    max_abs_acf_in_window: float
    escaped: bool


def trap_report(trace, exact_probs: np.ndarray, order: int,
                lag_lo: int = 3, lag_hi: int = 50) -> TrapReport:
    """Contrast single-chain mixing statistics with exact state occupancy.

    ``tv_to_exact`` compares the empirical distribution of retained center
    tuples against the enumerated posterior; ``max_abs_acf_in_window`` is the
    largest absolute autocorrelation of the first pmf component over lags
    lag_lo..lag_hi; ``escaped`` records whether the chain ever left its
    initial center tuple.
    """
    flat = flat_state_index(trace.ranks, order)
    emp = np.bincount(flat, minlength=exact_probs.size) / flat.size
    tv = tv_distance(emp, exact_probs)
    a = acf(trace.theta[:, 0], lag_hi)
    window = float(np.abs(a[lag_lo:lag_hi + 1]).max())
    escaped = bool(np.unique(flat).size > 1)
    return TrapReport(tv_to_exact=tv, acf_values=a,
                      max_abs_acf_in_window=window, escaped=escaped)
