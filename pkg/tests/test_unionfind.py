import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from reference import components, partition_of

from lbvhscan.unionfind import DisjointSets, make


def test_make():
    assert len(make(0)) == 0
    s = make(3)
    assert len({s.find(0), s.find(1), s.find(2)}) == 3
    assert len(set(make(50).representatives().tolist())) == 50


def test_find_and_union():
    s = make(5)
    assert s.find(4) == 4
    s.union(0, 1)
    assert s.find(0) == s.find(1)
    s.union(3, 3)
    assert s.find(3) == 3
    s.union(1, 2)
    assert s.find(0) == s.find(1) == s.find(2)
    s.union(2, 0)
    assert len(set(s.representatives().tolist())) == 3


def test_root_is_minimum():
    s = make(10)
    s.union(9, 7)
    s.union(7, 3)
    assert s.find(9) == 3


def test_out_of_range():
    s = make(3)
    with pytest.raises(IndexError):
        s.find(3)
    with pytest.raises(IndexError):
        s.union(0, -1)
    with pytest.raises(IndexError):
        s.union_pairs([0], [5])
    with pytest.raises(ValueError):
        make(-1)


def _random_pairs(rng, n, m):
    return rng.integers(0, n, m), rng.integers(0, n, m)


def test_random_unions_match_reachability(rng):
    n = 2000
    a, b = _random_pairs(rng, n, 1500)
    s = make(n)
    for x, y in zip(a, b):
        s.union(int(x), int(y))
    expect = components(n, zip(a.tolist(), b.tolist()))
    got = np.array([s.find(i) for i in range(n)])
    assert partition_of(got) == partition_of(expect)
    # the min-root rule makes the representative the component minimum
    assert np.array_equal(got, expect)


def test_bulk_sequential_matches_oracle(rng):
    n = 20000
    a, b = _random_pairs(rng, n, 10_000)
    s = make(n)
    s.union_pairs(a, b)
    assert np.array_equal(s.representatives(), components(n, zip(a.tolist(), b.tolist())))


def test_concurrent_unions_linearizable(rng):
    # 4 worker threads (see conftest); the final partition must equal the
    # order-independent sequential one
    for _ in range(20):
        n = int(rng.integers(10, 50_000))
        a, b = _random_pairs(rng, n, int(rng.integers(1, 2 * n)))
        seq, par = make(n), make(n)
        seq.union_pairs(a, b)
        par.union_pairs(a, b, parallel=True)
        assert np.array_equal(seq.representatives(), par.representatives())


def test_parent_chains_acyclic(rng):
    n = 5000
    a, b = _random_pairs(rng, n, 4000)
    s = make(n)
    s.union_pairs(a, b, parallel=True)
    p = s.parent
    # parents never point upward in index, so chains must terminate
    assert np.all(p <= np.arange(n))


@given(st.lists(st.tuples(st.integers(0, 29), st.integers(0, 29)), max_size=60), st.randoms())
def test_order_independence(pairs, rnd):
    s1, s2 = make(30), make(30)
    for x, y in pairs:
        s1.union(x, y)
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    for x, y in shuffled:
        s2.union(y, x)
    assert np.array_equal(s1.representatives(), s2.representatives())


def test_representatives_does_not_mutate(rng):
    s = DisjointSets(100)
    s.union_pairs(*_random_pairs(rng, 100, 80))
    before = s.parent.copy()
    s.representatives()
    assert np.array_equal(before, s.parent)
