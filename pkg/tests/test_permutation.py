"""Group-structure tests, checked against independent exhaustive enumeration."""

import itertools
import math

import numpy as np
import pytest

from rankmcmc.permutation import (
    GroupTables,
    build_tables,
    cayley_distance,
    compose,
    cycle_count,
    inverse,
    rank,
    unrank,
)


def brute_lex_words(p):
    """Independent oracle: all words in lexicographic order via itertools."""
    return [list(w) for w in itertools.permutations(range(1, p + 1))]


def brute_cycles(word):
    """Independent oracle: cycle count by explicit orbit chasing on a dict."""
    mapping = {j + 1: word[j] for j in range(len(word))}
    left = set(mapping)
    count = 0
    while left:
        count += 1
        start = next(iter(left))
        j = start
        while j in left:
            left.remove(j)
            j = mapping[j]
    return count


def test_unrank_examples():
    assert list(unrank(4, 3)) == [2, 3, 1]
    assert list(unrank(1, 4)) == [1, 2, 3, 4]
    assert list(unrank(math.factorial(4), 4)) == [4, 3, 2, 1]


def test_rank_examples():
    assert rank([1, 3, 2]) == 2
    assert rank([1, 2, 3, 4]) == 1
    assert rank([4, 3, 2, 1]) == 24


@pytest.mark.parametrize("p", [1, 2, 3, 4, 5, 6])
def test_rank_unrank_round_trip_exhaustive(p):
    words = brute_lex_words(p)
    for k, w in enumerate(words, start=1):
        assert list(unrank(k, p)) == w
        assert rank(w) == k


def test_invalid_inputs():
    with pytest.raises(ValueError):
        rank([1, 1, 2])
    with pytest.raises(ValueError):
        rank([0, 1])
    with pytest.raises(ValueError):
        unrank(0, 3)
    with pytest.raises(ValueError):
        unrank(7, 3)
    with pytest.raises(ValueError):
        unrank(1, 9)
    with pytest.raises(ValueError):
        build_tables(9)


def test_compose_convention_example():
    # third and second words of p=3 compose to the fourth: pointwise
    # 1 -> 1 -> 2, 2 -> 3 -> 3, 3 -> 2 -> 1
    z2, z3 = unrank(2, 3), unrank(3, 3)
    out = compose(z3, z2)
    assert list(out) == [2, 3, 1]
    assert rank(out) == 4


def test_paper_display_words():
    # index 2 swaps the last two items; index 3 swaps items p-2 and p-1;
    # the last index is the full reversal
    for p in (3, 4, 5):
        z2 = [*range(1, p - 1), p, p - 1]
        z3 = list(range(1, p + 1))
        z3[p - 3], z3[p - 2] = z3[p - 2], z3[p - 3]
        assert list(unrank(2, p)) == z2
        assert list(unrank(3, p)) == z3
        assert list(unrank(math.factorial(p), p)) == list(range(p, 0, -1))


@pytest.mark.parametrize("p", [2, 3, 4, 5])
def test_group_laws_exhaustive(p):
    tables = build_tables(p)
    order = tables.order
    identity = 1
    C = tables.compose_table
    assert C is not None
    # identity row and column
    assert np.array_equal(C[identity - 1], np.arange(1, order + 1))
    assert np.array_equal(C[:, identity - 1], np.arange(1, order + 1))
    # inverses
    inv = tables.inverse_index
    assert np.array_equal(inv[inv - 1], np.arange(1, order + 1))
    for k in range(1, order + 1):
        assert C[k - 1, inv[k - 1] - 1] == identity
        assert C[inv[k - 1] - 1, k - 1] == identity
    # associativity, fully vectorized: C[C[i,j],k] == C[i,C[j,k]]
    ij = C - 1
    lhs = C[ij.reshape(-1), :].reshape(order, order, order)
    rhs = np.swapaxes(C[:, C - 1], 1, 2)
    assert np.array_equal(lhs, np.swapaxes(rhs, 1, 2))


def test_tables_p2_example():
    tables = build_tables(2)
    assert np.array_equal(tables.compose_table, [[1, 2], [2, 1]])
    assert list(tables.cycles) == [2, 1]


def test_tables_p3_cycles_example():
    tables = build_tables(3)
    assert list(tables.cycles) == [3, 2, 2, 1, 1, 2]
    assert tables.cycles[0] == 3


def test_cycles_against_brute_force():
    for p in (2, 3, 4, 5):
        tables = build_tables(p)
        for k in range(1, tables.order + 1):
            assert tables.cycles[k - 1] == brute_cycles(list(tables.words[k - 1]))
            assert cycle_count(tables.words[k - 1]) == tables.cycles[k - 1]


def test_cayley_metric_axioms_exhaustive_p4():
    p = 4
    words = brute_lex_words(p)
    n = len(words)
    D = np.array([[cayley_distance(a, b) for b in words] for a in words])
    assert np.array_equal(np.diag(D), np.zeros(n, dtype=int))
    assert np.array_equal(D, D.T)
    assert D[~np.eye(n, dtype=bool)].min() >= 1
    # triangle inequality over all triples
    assert np.all(D[:, :, None] <= D[:, None, :] + D[None, :, :])


def test_cayley_right_invariance():
    rng = np.random.default_rng(0)
    for _ in range(50):
        p = int(rng.integers(2, 7))
        a = rng.permutation(p) + 1
        b = rng.permutation(p) + 1
        s = rng.permutation(p) + 1
        assert cayley_distance(a, b) == cayley_distance(compose(a, s), compose(b, s))


def test_cayley_transposition_is_one():
    assert cayley_distance([2, 1, 3, 4], [1, 2, 3, 4]) == 1
    assert cayley_distance([1, 2, 3], [1, 2, 3]) == 0


def test_two_tier_compose_agrees():
    # force the on-the-fly path at small p and compare against the table
    small = build_tables(4)
    nofly = build_tables(4, compose_table_limit=0)
    assert nofly.compose_table is None
    for k in (1, 5, 17, 24):
        assert np.array_equal(nofly.compose_row(k), small.compose_table[k - 1])
        for r in (1, 2, 13, 24):
            assert nofly.compose_index(k, r) == small.compose_table[k - 1, r - 1]


def test_residual_row_definition():
    tables = build_tables(4)
    for i in (1, 7, 24):
        row = tables.residual_row(i)
        for r in range(1, tables.order + 1):
            expected = rank(compose(tables.words[i - 1],
                                    inverse(tables.words[r - 1])))
            assert row[r - 1] == expected


def test_index_bounds_checked():
    tables = build_tables(3)
    with pytest.raises(ValueError):
        tables.compose_index(0, 1)
    with pytest.raises(ValueError):
        tables.compose_index(1, 7)
    with pytest.raises(ValueError):
        tables.residual_row(7)


def test_large_p_tables_on_the_fly():
    tables = build_tables(7)
    assert tables.compose_table is None
    assert tables.order == 5040
    assert tables.cycles[0] == 7
    # spot-check a composition against the scalar functions
    k, r = 123, 4567
    expected = rank(compose(tables.words[k - 1], tables.words[r - 1]))
    assert tables.compose_index(k, r) == expected
