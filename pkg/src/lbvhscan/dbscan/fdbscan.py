"""FDBSCAN: tree traversal fused with core counting and union-find merging.

Core detection is a range query per point whose callback counts matches and
stops the query once ``min_pts`` is reached. The merge phase is a pair
traversal; no neighbor list is ever stored.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .. import bvh as _bvh
from .. import traversal
from ..unionfind import atomic_cas, union, union_atomic
from ._common import DbscanOutput, DbscanParams, Timer, empty_output, labels_from_parent, prepare


@njit
def _core_count_cb(q, obj, state):
    counts, min_pts = state
    counts[q] += 1
    if counts[q] >= min_pts:
        return 1
    return 0


@njit(inline="always")
def merge_pair(parent, core, claimed, x, y):
    """Merge rule for a close pair; symmetric in ``x`` and ``y``."""
    if core[x]:
        if core[y]:
            union_atomic(parent, x, y)
        elif claimed[y] == 0 and atomic_cas(claimed, y, 0, 1) == 0:
            union_atomic(parent, x, y)
    elif core[y]:
        if claimed[x] == 0 and atomic_cas(claimed, x, 0, 1) == 0:
            union_atomic(parent, y, x)


@njit
def _merge_cb(i, j, state):
    parent, core, claimed = state
    merge_pair(parent, core, claimed, i, j)
    return 0


@njit
def _fof_cb(i, j, state):
    parent, core = state
    # both ends have a neighbor besides themselves, so both are core at min_pts=2
    core[i] = True
    core[j] = True
    union_atomic(parent, i, j)
    return 0


def detect_core_points(
    tree: _bvh.Bvh,
    points: np.ndarray,
    params: DbscanParams,
    *,
    parallel: bool = True,
    return_counts: bool = False,
):
    """Core flags via early-terminating neighbor counting (self included).

    With ``return_counts`` also returns the number of callback invocations per
    point, which never exceeds ``min_pts``.
    """
    pts = prepare(points, params)
    n = pts.shape[0]
    counts = np.zeros(n, dtype=np.int64)
    if n:
        preds = traversal.Spheres(pts, np.full(n, params.eps32, dtype=np.float32))
        order = tree.leaf_object if tree.n == n else True
        traversal.range_query(
            tree, preds, _core_count_cb, (counts, np.int64(params.min_pts)), parallel=parallel, presort=order
        )
    core = counts >= params.min_pts
    return (core, counts) if return_counts else core


def fdbscan(points, params: DbscanParams, *, code_width: int = 64, parallel: bool = True) -> DbscanOutput:
    pts = prepare(points, params)
    n = pts.shape[0]
    if n == 0:
        return empty_output()
    timer = Timer()
    with timer.phase("build"):
        tree = _bvh.build(pts, code_width=code_width)
    parent = np.arange(n, dtype=np.int64)
    claimed = np.zeros(n, dtype=np.uint8)
    if params.min_pts > 2:
        with timer.phase("core"):
            core = detect_core_points(tree, pts, params, parallel=parallel)
        with timer.phase("merge"):
            traversal.pair_traversal(tree, params.eps32, _merge_cb, (parent, core, claimed), parallel=parallel)
    else:
        core = np.zeros(n, dtype=np.bool_)
        with timer.phase("merge"):
            traversal.pair_traversal(tree, params.eps32, _fof_cb, (parent, core), parallel=parallel)
    with timer.phase("finalize"):
        labels = labels_from_parent(parent, core, claimed)
    return DbscanOutput(labels, core, timer.timings, {"tree_height": tree.height})


def fof_connected_components(points, eps: float, *, code_width: int = 64, parallel: bool = True) -> DbscanOutput:
    """Friends-of-friends: connected components of the eps-proximity graph (min_pts=2)."""
    return fdbscan(points, DbscanParams(eps, 2), code_width=code_width, parallel=parallel)


@njit(cache=True)
def _components_from_crs(offsets, values, parent, core):
    for i in range(offsets.shape[0] - 1):
        a, b = offsets[i], offsets[i + 1]
        if b - a >= 2:
            core[i] = True
        for t in range(a, b):
            union(parent, i, values[t])


def legacy_graph_dbscan(
    points,
    eps: float,
    *,
    max_edges: int | None = None,
    code_width: int = 64,
    parallel: bool = True,
) -> DbscanOutput:
    """Friends-of-friends via an explicit adjacency graph.

    Stores every neighbor of every point, so memory grows with the total
    neighbor count; raises :class:`~lbvhscan.traversal.CrsCapacityError` when
    the graph exceeds ``max_edges`` entries or cannot be allocated.
    """
    params = DbscanParams(eps, 2)
    pts = prepare(points, params)
    n = pts.shape[0]
    if n == 0:
        return empty_output()
    timer = Timer()
    with timer.phase("build"):
        tree = _bvh.build(pts, code_width=code_width)
    with timer.phase("core"):
        preds = traversal.Spheres(pts, np.full(n, params.eps32, dtype=np.float32))
        graph = traversal.query_crs(tree, preds, max_values=max_edges, parallel=parallel)
    parent = np.arange(n, dtype=np.int64)
    core = np.zeros(n, dtype=np.bool_)
    with timer.phase("merge"):
        _components_from_crs(graph.offsets, graph.values, parent, core)
    with timer.phase("finalize"):
        labels = labels_from_parent(parent, core)
    return DbscanOutput(labels, core, timer.timings, {"num_edges": int(graph.values.shape[0])})
