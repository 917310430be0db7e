import numpy as np
import pytest
from numba import njit
from reference import (
    brute_knn,
    brute_pairs,
    brute_range_boxes,
    brute_range_spheres,
    clustered,
    dist32,
    stack_range_boxes,
    stack_range_spheres,
)

from lbvhscan import bvh as B
from lbvhscan import morton, traversal as T
from lbvhscan.geometry import Aabb, Sphere


@njit
def _record(q, obj, state):
    hits, cursor = state
    hits[q, cursor[q]] = obj
    cursor[q] += 1
    return 0


@njit
def _stop_after(q, obj, state):
    calls, limit = state
    calls[q] += 1
    if calls[q] >= limit[q]:
        return 1
    return 0


@njit
def _pair_record(i, j, state):
    out, cursor = state
    k = cursor[0]
    cursor[0] += 1
    out[k, 0] = i
    out[k, 1] = j
    return 0


def collect_python(tree, preds, **kw):
    found = {}

    def cb(q, obj):
        found.setdefault(q, []).append(obj)

    T.range_query(tree, preds, cb, **kw)
    return found


def collect_jit(tree, preds, nq, parallel):
    hits = np.full((nq, tree.n), -1, dtype=np.int64)
    cursor = np.zeros(nq, dtype=np.int64)
    T.range_query(tree, preds, _record, (hits, cursor), parallel=parallel)
    return [set(hits[q, : cursor[q]].tolist()) for q in range(nq)], cursor


def test_empty_tree():
    tree = B.build(np.empty((0, 3), np.float32))
    calls = []
    T.range_query(tree, [Sphere((0, 0, 0), 10)], lambda q, o: calls.append(o))
    T.pair_traversal(tree, 1.0, lambda i, j: calls.append(i))
    assert calls == []
    idx, dist = T.nearest(tree, np.zeros((2, 3)), 3)
    assert (idx == -1).all() and np.isinf(dist).all()


def test_covering_sphere_reports_everything(rng):
    pts = rng.random((300, 3)).astype(np.float32)
    tree = B.build(pts)
    found = collect_python(tree, [Sphere((0.5, 0.5, 0.5), 2.0), Sphere((0.2, 0.1, 0.9), 5.0)])
    for q in (0, 1):
        assert sorted(found[q]) == list(range(300))


@pytest.mark.parametrize("parallel", [False, True])
def test_spheres_match_brute_force(rng, parallel):
    pts = rng.random((1000, 3)).astype(np.float32)
    tree = B.build(pts)
    centers = rng.random((100, 3)).astype(np.float32)
    radii = (rng.random(100) * 0.2).astype(np.float32)
    got, cursor = collect_jit(tree, T.spheres(centers, radii), 100, parallel)
    assert got == brute_range_spheres(pts, centers, radii)
    # exactly once per object
    assert cursor.sum() == sum(len(s) for s in got)


def test_python_callback_matches(rng):
    pts = rng.random((500, 2)).astype(np.float32)
    tree = B.build(pts)
    centers = rng.random((40, 2)).astype(np.float32)
    found = collect_python(tree, T.spheres(centers, 0.1))
    expect = brute_range_spheres(pts, centers, np.full(40, 0.1, np.float32))
    for q in range(40):
        assert sorted(found.get(q, [])) == sorted(expect[q])


@pytest.mark.parametrize("parallel", [False, True])
def test_box_queries_on_box_objects(rng, parallel):
    lo = rng.random((400, 3)).astype(np.float32)
    hi = (lo + rng.random((400, 3)) * 0.05).astype(np.float32)
    tree = B.build(lo, hi)
    qlo = rng.random((60, 3)).astype(np.float32)
    qhi = (qlo + rng.random((60, 3)) * 0.2).astype(np.float32)
    got, _ = collect_jit(tree, T.boxes(qlo, qhi), 60, parallel)
    assert got == brute_range_boxes(lo, hi, qlo, qhi)
    assert got == stack_range_boxes(tree, qlo, qhi)


def test_mixed_predicate_list(rng):
    pts = rng.random((300, 3)).astype(np.float32)
    tree = B.build(pts)
    preds = [Sphere((0.5, 0.5, 0.5), 0.2), Aabb((0, 0, 0), (0.3, 0.3, 0.3)), Sphere((0.1, 0.9, 0.5), 0.15)]
    found = collect_python(tree, preds)
    assert set(found[0]) == brute_range_spheres(pts, [preds[0].center], [preds[0].radius])[0]
    assert set(found[1]) == brute_range_boxes(pts, pts, [preds[1].min_corner], [preds[1].max_corner])[0]
    assert set(found[2]) == brute_range_spheres(pts, [preds[2].center], [preds[2].radius])[0]


def test_stackless_equals_stack(rng):
    for _ in range(30):
        n = int(rng.integers(1, 800))
        d = int(rng.choice([2, 3]))
        pts = clustered(rng, n, d)
        tree = B.build(pts)
        centers = (rng.random((50, d)) * 1.2 - 0.1).astype(np.float32)
        radii = (rng.random(50) * 0.1).astype(np.float32)
        got, _ = collect_jit(tree, T.spheres(centers, radii), 50, False)
        assert got == stack_range_spheres(tree, centers, radii)


@pytest.mark.parametrize("parallel", [False, True])
def test_early_termination(rng, parallel):
    pts = rng.random((800, 3)).astype(np.float32)
    tree = B.build(pts)
    centers = rng.random((200, 3)).astype(np.float32)
    preds = T.spheres(centers, 0.15)
    full = np.array([len(s) for s in brute_range_spheres(pts, centers, preds.radii)])
    limit = rng.integers(1, 20, 200).astype(np.int64)
    calls = np.zeros(200, dtype=np.int64)
    T.range_query(tree, preds, _stop_after, (calls, limit), parallel=parallel)
    # a terminated query stops exactly at its limit; the others run to completion
    assert np.array_equal(calls, np.minimum(full, limit))


def test_early_termination_python_callback(rng):
    pts = rng.random((300, 2)).astype(np.float32)
    tree = B.build(pts)
    seen = {}

    def cb(q, obj):
        seen.setdefault(q, []).append(obj)
        return T.CallbackControl.TERMINATE_QUERY if len(seen[q]) == 3 else T.CallbackControl.CONTINUE

    T.range_query(tree, [Sphere((0.5, 0.5), 1.0), Sphere((0.5, 0.5), 1.0)], cb)
    assert [len(seen[0]), len(seen[1])] == [3, 3]
    assert len(set(seen[0])) == 3


def test_presort_does_not_change_results(rng):
    pts = rng.random((600, 3)).astype(np.float32)
    tree = B.build(pts)
    preds = T.spheres(rng.random((80, 3)), 0.1)
    a, _ = collect_jit(tree, preds, 80, False)
    hits = np.full((80, tree.n), -1, dtype=np.int64)
    cursor = np.zeros(80, dtype=np.int64)
    T.range_query(tree, preds, _record, (hits, cursor), presort=False)
    b = [set(hits[q, : cursor[q]].tolist()) for q in range(80)]
    order = rng.permutation(80)
    hits[:] = -1
    cursor[:] = 0
    T.range_query(tree, preds, _record, (hits, cursor), presort=order)
    c = [set(hits[q, : cursor[q]].tolist()) for q in range(80)]
    assert a == b == c


def test_sort_queries():
    assert T.sort_queries([Sphere((1, 2, 3), 1)]).tolist() == [0]
    # centres on a Z-ordered 4x4 grid are already sorted
    grid = [(x, y) for y in range(4) for x in range(4)]
    codes = [morton.encode(g, 64) for g in grid]
    zorder = [grid[i] for i in np.argsort(codes, kind="stable")]
    preds = T.spheres(np.array(zorder, dtype=np.float32), 0.5)
    assert T.sort_queries(preds).tolist() == list(range(16))


def test_sort_queries_matches_morton_oracle(rng):
    centers = rng.random((200, 3)).astype(np.float32)
    codes = morton.compute_codes(centers, centers, 64)
    assert T.sort_queries(T.spheres(centers, 0.1)).tolist() == morton.sort_by_code(codes).tolist()


def test_pairs_small_cases():
    close = np.array([[0, 0, 0], [0.1, 0, 0], [0, 0.1, 0]], dtype=np.float32)
    got = []
    T.pair_traversal(B.build(close), 0.5, lambda i, j: got.append((i, j)))
    assert sorted(tuple(sorted(p)) for p in got) == [(0, 1), (0, 2), (1, 2)]
    got.clear()
    T.pair_traversal(B.build(close * 100), 0.5, lambda i, j: got.append((i, j)))
    assert got == []


def _pairs_jit(tree, eps, cap):
    out = np.empty((cap, 2), dtype=np.int64)
    cursor = np.zeros(1, dtype=np.int64)
    T.pair_traversal(tree, eps, _pair_record, (out, cursor))
    return out[: cursor[0]]


def test_pairs_match_brute_force(rng):
    for _ in range(10):
        n = int(rng.integers(2, 2000))
        pts = clustered(rng, n, int(rng.choice([2, 3])))
        eps = float(rng.choice([0.005, 0.02, 0.05]))
        tree = B.build(pts)
        expect = brute_pairs(pts, eps)
        got = _pairs_jit(tree, eps, len(expect) + 1)
        keys = [tuple(sorted(p)) for p in got.tolist()]
        assert len(keys) == len(set(keys))
        assert set(keys) == expect
        # i precedes j in leaf order
        pos = np.empty(n, dtype=np.int64)
        pos[tree.leaf_object] = np.arange(n)
        assert all(pos[i] < pos[j] for i, j in got.tolist())


@njit
def _pair_rows(i, j, state):
    # all pairs (i, .) come from the walk of i's leaf, so row i has one writer
    rows, cnt = state
    rows[i, cnt[i]] = j
    cnt[i] += 1
    return 0


def test_pairs_parallel(rng):
    pts = clustered(rng, 1500, 3)
    tree = B.build(pts)
    eps = 0.02
    rows = np.full((1500, 1500), -1, dtype=np.int64)
    cnt = np.zeros(1500, dtype=np.int64)
    T.pair_traversal(tree, eps, _pair_rows, (rows, cnt), parallel=True)
    got = [(i, int(j)) for i in range(1500) for j in rows[i, : cnt[i]]]
    keys = [tuple(sorted(p)) for p in got]
    assert len(keys) == len(set(keys))
    assert set(keys) == brute_pairs(pts, eps)


def test_pairs_reject_negative_eps(rng):
    tree = B.build(rng.random((5, 2)).astype(np.float32))
    with pytest.raises(ValueError):
        T.pair_traversal(tree, -1.0, lambda i, j: None)


def test_crs_examples(rng):
    pts = rng.random((50, 2)).astype(np.float32)
    tree = B.build(pts)
    none = T.query_crs(tree, T.spheres(np.full((4, 2), 10.0), 0.1))
    assert none.offsets.tolist() == [0] * 5 and none.values.size == 0
    everything = T.query_crs(tree, [Sphere((0.5, 0.5), 5)])
    assert everything.offsets.tolist() == [0, 50]
    assert everything.values.tolist() == list(range(50))


@pytest.mark.parametrize("parallel", [False, True])
def test_crs_matches_brute_force(rng, parallel):
    pts = clustered(rng, 1500, 3)
    tree = B.build(pts)
    centers = pts[rng.integers(0, 1500, 300)]
    res = T.query_crs(tree, T.spheres(centers, 0.03), parallel=parallel)
    expect = brute_range_spheres(pts, centers, np.full(300, 0.03, np.float32))
    assert len(res) == 300
    assert np.all(np.diff(res.offsets) >= 0) and res.offsets[-1] == res.values.size
    for q in range(300):
        assert res.row(q).tolist() == sorted(expect[q])


def test_crs_capacity(rng):
    pts = rng.random((100, 3)).astype(np.float32)
    tree = B.build(pts)
    with pytest.raises(T.CrsCapacityError):
        T.query_crs(tree, T.spheres(pts, 1.0), max_values=500)
    with pytest.raises(MemoryError):
        T.query_crs(tree, T.spheres(pts, 1.0), max_values=500)


def test_nearest_examples(rng):
    pts = rng.random((200, 3)).astype(np.float32)
    tree = B.build(pts)
    idx, dist = T.nearest(tree, pts[[17]], 1)
    assert idx.tolist() == [[17]] and dist[0, 0] == 0
    idx, dist = T.nearest(tree, np.zeros((1, 3)), 500)
    assert sorted(idx[0, :200].tolist()) == list(range(200))
    assert (idx[0, 200:] == -1).all()


@pytest.mark.parametrize("k", [1, 5, 32])
@pytest.mark.parametrize("parallel", [False, True])
def test_nearest_matches_brute_force(rng, k, parallel):
    pts = rng.random((1000, 3)).astype(np.float32)
    tree = B.build(pts)
    origins = rng.random((100, 3)).astype(np.float32)
    idx, dist = T.nearest(tree, origins, k, parallel=parallel)
    for q in range(100):
        ref_idx, ref_dist = brute_knn(pts, origins[q], k)
        assert idx[q].tolist() == ref_idx.tolist()
        assert np.array_equal(dist[q], ref_dist)


def test_nearest_tie_break_by_index():
    # four points at equal distance from the origin
    pts = np.array([[1, 0], [0, 1], [-1, 0], [0, -1], [5, 5]], dtype=np.float32)
    tree = B.build(pts[::-1].copy())
    idx, dist = T.nearest(tree, np.zeros((1, 2)), 3)
    # after reversal the far point is index 0 and the tied ones are 1..4
    assert idx[0].tolist() == [1, 2, 3]
    assert (dist[0] == 1).all()


def test_nearest_with_duplicates(rng):
    pts = np.repeat(rng.random((20, 2)), 5, axis=0).astype(np.float32)
    tree = B.build(pts)
    origins = rng.random((30, 2)).astype(np.float32)
    idx, _ = T.nearest(tree, origins, 7)
    for q in range(30):
        assert idx[q].tolist() == brute_knn(pts, origins[q], 7)[0].tolist()


def test_nearest_independent_of_width_and_order(rng):
    pts = np.round(rng.random((500, 3)), 2).astype(np.float32)
    origins = rng.random((50, 3)).astype(np.float32)
    a, _ = T.nearest(B.build(pts, code_width=32), origins, 5)
    b, _ = T.nearest(B.build(pts, code_width=64), origins, 5)
    perm = rng.permutation(50)
    c, _ = T.nearest(B.build(pts), origins[perm], 5)
    assert np.array_equal(a, b)
    assert np.array_equal(b[perm], c)


def test_nearest_per_query_k(rng):
    pts = rng.random((100, 2)).astype(np.float32)
    tree = B.build(pts)
    idx, _ = T.nearest(tree, pts[:3], np.array([1, 3, 2]))
    assert (idx[0, 1:] == -1).all() and (idx[2, 2:] == -1).all()
    with pytest.raises(ValueError):
        T.nearest(tree, pts[:1], 0)


def test_nearest_query_callback(rng):
    pts = rng.random((300, 3)).astype(np.float32)
    tree = B.build(pts)
    preds = [T.NearestPredicate(pts[5], 4), T.NearestPredicate(np.array([2, 2, 2], np.float32), 1)]
    got = {}
    T.nearest_query(tree, preds, lambda q, o: got.setdefault(q, []).append(o))
    assert got[0] == brute_knn(pts, pts[5], 4)[0].tolist()
    assert got[1] == brute_knn(pts, preds[1].origin, 1)[0].tolist()
    assert got[0][0] == 5


def test_nearest_box_objects(rng):
    lo = rng.random((200, 2)).astype(np.float32)
    hi = (lo + 0.05).astype(np.float32)
    tree = B.build(lo, hi)
    origins = rng.random((20, 2)).astype(np.float32)
    idx, dist = T.nearest(tree, origins, 3)
    from reference import box_dist32

    for q in range(20):
        d = box_dist32(lo, hi, origins[q])
        order = np.lexsort((np.arange(200), d))[:3]
        assert idx[q].tolist() == order.tolist()
        assert np.array_equal(dist[q], d[order])


def test_predicate_validation():
    with pytest.raises(ValueError):
        T.spheres(np.zeros((2, 3)), -1)
    with pytest.raises(ValueError):
        T.boxes(np.zeros((2, 3)), np.zeros((3, 3)))
    with pytest.raises(TypeError):
        T.range_query(B.build(np.zeros((2, 2), np.float32)), ["nope"], lambda q, o: None)


def test_distance_rule_is_inclusive():
    pts = np.array([[0, 0], [3, 4]], dtype=np.float32)
    tree = B.build(pts)
    assert dist32(pts[0], pts[1]) == 5
    got = []
    T.pair_traversal(tree, 5.0, lambda i, j: got.append((i, j)))
    assert len(got) == 1
    T.pair_traversal(tree, np.nextafter(np.float32(5), np.float32(0)), lambda i, j: got.append((i, j)))
    assert len(got) == 1
