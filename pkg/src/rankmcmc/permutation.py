"""Rankings as permutations: lexicographic indexing and group operations.

A ranking of p items is a permutation in one-line notation: ``word[j]`` is the
rank assigned to item ``j+1``, with values 1..p. Rankings are identified by
their 1-based lexicographic index among all p! words (index 1 is the identity,
index p! is the full reversal). Composition follows ``(tau o sigma)(j) =
tau(sigma(j))``.

All indices crossing the public API are 1-based. A hard cap of p <= 8 keeps
the full group enumerable; the composition table is precomputed only while
p! stays below a configurable limit (default 720, i.e. p <= 6) and is computed
on the fly from one-line words above it.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

MAX_ITEMS = 8
_FACT = [math.factorial(i) for i in range(MAX_ITEMS + 2)]


def _as_word(word) -> np.ndarray:
    w = np.asarray(word, dtype=np.int64)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("ranking word must be a nonempty 1-D sequence")
    p = w.size
    if p > MAX_ITEMS:
        raise ValueError(f"p = {p} exceeds the hard cap of {MAX_ITEMS} items")
    seen = np.zeros(p, dtype=bool)
    for v in w:
        if v < 1 or v > p or seen[v - 1]:
            raise ValueError(f"not a bijection on 1..{p}: {list(w)}")
        seen[v - 1] = True
    return w


def unrank(k: int, p: int) -> np.ndarray:
    """Word of the k-th ranking (1-based) in lexicographic order on p items.

    Uses the factorial number system: the Lehmer digits of k-1 select from the
    pool of unused values left to right.
    """
    if p < 1 or p > MAX_ITEMS:
        raise ValueError(f"p must be in 1..{MAX_ITEMS}, got {p}")
    if k < 1 or k > _FACT[p]:
        raise ValueError(f"index {k} out of range 1..{_FACT[p]}")
    rem = k - 1
    pool = list(range(1, p + 1))
    out = np.empty(p, dtype=np.int64)
    for j in range(p):
        f = _FACT[p - 1 - j]
        d, rem = divmod(rem, f)
        out[j] = pool.pop(d)
    return out


def rank(word) -> int:
    """1-based lexicographic index of a ranking word."""
    w = _as_word(word)
    p = w.size
    idx = 0
    for j in range(p):
        smaller_right = int(np.sum(w[j + 1:] < w[j]))
        idx += smaller_right * _FACT[p - 1 - j]
    return idx + 1


def compose(tau, sigma) -> np.ndarray:
    """Word of tau o sigma, i.e. item j is sent to tau(sigma(j))."""
    t = _as_word(tau)
    s = _as_word(sigma)
    if t.size != s.size:
        raise ValueError("rankings act on different item counts")
    return t[s - 1]


def inverse(word) -> np.ndarray:
    """Word of the inverse ranking."""
    w = _as_word(word)
    out = np.empty_like(w)
    out[w - 1] = np.arange(1, w.size + 1)
    return out


def cycle_count(word) -> int:
    """Number of cycles, fixed points included."""
    w = _as_word(word)
    seen = np.zeros(w.size, dtype=bool)
    count = 0
    for start in range(w.size):
        if seen[start]:
            continue
        count += 1
        j = start
        while not seen[j]:
            seen[j] = True
            j = w[j] - 1
    return count


def cayley_distance(a, b) -> int:
    """Minimum number of transpositions turning one ranking into the other.

    Equals p minus the cycle count of a o b^{-1}; right-invariant under
    composition.
    """
    return _as_word(a).size - cycle_count(compose(a, inverse(b)))


def _rank_words(words: np.ndarray) -> np.ndarray:
    """Vectorized 1-based lexicographic ranks for an (n, p) array of words."""
    n, p = words.shape
    smaller = (words[:, :, None] > words[:, None, :])
    upper = np.triu(np.ones((p, p), dtype=bool), k=1)
    digits = (smaller & upper[None, :, :]).sum(axis=2)
    weights = np.array([_FACT[p - 1 - j] for j in range(p)], dtype=np.int64)
    return digits @ weights + 1


@dataclass(frozen=True)
class GroupTables:
    """Precomputed structure of the full ranking group on p items.

    ``words[k-1]`` is the one-line word of the ranking with index k;
    ``cycles[k-1]`` its cycle count; ``inverse_index[k-1]`` the index of its
    inverse. ``compose_table`` holds ``compose_table[k-1, r-1] = index of
    ranking_k o ranking_r`` when tabulated (p! <= the build limit), else None
    and composition indices are computed from words on demand.
    """

    p: int
    order: int
    words: np.ndarray
    cycles: np.ndarray
    inverse_index: np.ndarray
    compose_table: np.ndarray | None
    _word_to_index: dict = field(repr=False, default_factory=dict)

    def compose_index(self, k: int, r: int) -> int:
        """Index of ranking_k o ranking_r (all 1-based)."""
        self._check_index(k)
        self._check_index(r)
        if self.compose_table is not None:
            return int(self.compose_table[k - 1, r - 1])
        word = self.words[k - 1][self.words[r - 1] - 1]
        return self._word_to_index[tuple(word)]

    def compose_row(self, k: int) -> np.ndarray:
        """Indices of ranking_k o ranking_r for every r = 1..p! at once."""
        self._check_index(k)
        if self.compose_table is not None:
            return self.compose_table[k - 1].copy()
        composed = self.words[k - 1][self.words - 1]
        return _rank_words(composed)

    def compose_col(self, r: int) -> np.ndarray:
        """Indices of ranking_k o ranking_r for every k = 1..p! at once."""
        self._check_index(r)
        if self.compose_table is not None:
            return self.compose_table[:, r - 1].copy()
        composed = self.words[:, self.words[r - 1] - 1]
        return _rank_words(composed)

    def residual_row(self, i: int) -> np.ndarray:
        """Indices of ranking_i o ranking_r^{-1} for every center r = 1..p!.

        Entry r-1 identifies which perturbation maps center r onto the
        observed ranking i; this is the alignment used by the count and
        weight computations and is independent of the chain state, so
        callers cache it.
        """
        self._check_index(i)
        row = self.compose_row(i)
        return row[self.inverse_index - 1]

    def _check_index(self, k: int) -> None:
        if k < 1 or k > self.order:
            raise ValueError(f"ranking index {k} out of range 1..{self.order}")


def build_tables(p: int, compose_table_limit: int = 720) -> GroupTables:
    """Enumerate the group on p items and build its lookup tables.

    The composition table costs (p!)^2 entries and is built only while
    p! <= compose_table_limit; beyond that, composition indices are derived
    from the stored words per call. p itself is capped at 8.
    """
    if p < 1 or p > MAX_ITEMS:
        raise ValueError(f"p must be in 1..{MAX_ITEMS}, got {p}")
    order = _FACT[p]
    words = np.array(list(itertools.permutations(range(1, p + 1))),
                     dtype=np.int64)
    word_to_index = {tuple(w): i + 1 for i, w in enumerate(words)}

    cycles = np.array([cycle_count(w) for w in words], dtype=np.int64)

    inv_words = np.empty_like(words)
    rows = np.arange(order)[:, None]
    inv_words[rows, words - 1] = np.arange(1, p + 1)[None, :]
    inverse_index = _rank_words(inv_words)

    compose_table = None
    if order <= compose_table_limit:
        compose_table = np.empty((order, order), dtype=np.int64)
        for k in range(order):
            compose_table[k] = _rank_words(words[k][words - 1])

    for arr in (words, cycles, inverse_index):
        arr.setflags(write=False)
    if compose_table is not None:
        compose_table.setflags(write=False)
    return GroupTables(p=p, order=order, words=words, cycles=cycles,
                       inverse_index=inverse_index,
                       compose_table=compose_table,
                       _word_to_index=word_to_index)
