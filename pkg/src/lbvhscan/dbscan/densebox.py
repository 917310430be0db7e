"""FDBSCAN-DenseBox.

A grid with cell side ``eps / sqrt(d)`` is laid over the data. Any two points
in one cell are within ``eps``, so a cell holding at least ``min_pts`` points
(a dense cell) contains only core points and needs no internal distance
checks. The hierarchy is built over the tight boxes of the dense cells plus
the remaining individual points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numba import njit, prange

from .. import bvh as _bvh
from .. import traversal
from ..geometry import FLOAT, point_distance
from ..unionfind import find, union_atomic
from ._common import DbscanOutput, DbscanParams, Timer, empty_output, labels_from_parent, prepare
from .fdbscan import merge_pair

# cells are shrunk by this relative amount so that floor() rounding can never
# put two points more than eps apart into one cell
_CELL_SHRINK = 1.0 - 2.0**-40


@dataclass(frozen=True)
class DenseGrid:
    cell_length: float
    origin: np.ndarray
    keys: np.ndarray  # (m, d) integer cell coordinates, sorted
    offsets: np.ndarray  # (m + 1,) into members
    members: np.ndarray  # point indices grouped by cell, ascending within a cell
    point_cell: np.ndarray  # (n,) cell id of every point
    dense: np.ndarray  # (m,) member count >= min_pts

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def num_cells(self) -> int:
        return self.keys.shape[0]

    @cached_property
    def cells(self) -> dict:
        """Map from cell coordinates to the member indices of that cell."""
        return {
            tuple(int(v) for v in self.keys[c]): self.members[self.offsets[c] : self.offsets[c + 1]]
            for c in range(self.num_cells)
        }

    def cell_of(self, p) -> tuple[int, ...]:
        p = np.asarray(p, dtype=np.float64)
        return tuple(int(v) for v in np.floor((p - self.origin) / (self.cell_length * _CELL_SHRINK)))


def build_dense_grid(points, params: DbscanParams) -> DenseGrid:
    pts = prepare(points, params)
    n, d = pts.shape
    cell_length = float(params.eps32) / math.sqrt(d)
    origin = pts.min(axis=0).astype(np.float64) if n else np.zeros(d)
    coords = np.floor((pts - origin) / (cell_length * _CELL_SHRINK)).astype(np.int64)
    keys, point_cell = np.unique(coords, axis=0, return_inverse=True)
    point_cell = point_cell.reshape(-1).astype(np.int64)
    members = np.argsort(point_cell, kind="stable").astype(np.int64)
    counts = np.bincount(point_cell, minlength=keys.shape[0])
    offsets = np.zeros(keys.shape[0] + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return DenseGrid(
        cell_length=cell_length,
        origin=origin,
        keys=keys,
        offsets=offsets,
        members=members,
        point_cell=point_cell,
        dense=counts >= params.min_pts,
    )


# ---------------------------------------------------------------------------
# callbacks; object ids below `n_dense` are dense cells, the rest are points
# ---------------------------------------------------------------------------


@njit
def _count_cb(q, obj, state):
    counts, min_pts, qpoint, n_dense, obj_point, cell_ids, offsets, members, pts, eps = state
    x = qpoint[q]
    if obj >= n_dense:
        counts[q] += 1
    else:
        c = cell_ids[obj]
        for t in range(offsets[c], offsets[c + 1]):
            if point_distance(pts, x, pts, members[t]) <= eps:
                counts[q] += 1
                if counts[q] >= min_pts:
                    return 1
    if counts[q] >= min_pts:
        return 1
    return 0


@njit
def _point_merge_cb(q, obj, state):
    parent, core, claimed, qpoint, n_dense, obj_point, cell_ids, offsets, members, pts, eps = state
    x = qpoint[q]
    if obj >= n_dense:
        y = obj_point[obj - n_dense]
        # each point-point pair is seen from both ends; handle it once
        if x < y:
            merge_pair(parent, core, claimed, x, y)
        return 0
    if not core[x] and claimed[x] != 0:
        return 0
    c = cell_ids[obj]
    for t in range(offsets[c], offsets[c + 1]):
        m = members[t]
        if point_distance(pts, x, pts, m) <= eps:
            # members of a dense cell are core and already share a set, one hit is enough
            merge_pair(parent, core, claimed, x, m)
            break
    return 0


@njit
def _cell_merge_cb(q, obj, state):
    parent, cell_ids, offsets, members, pts, eps = state
    # points are handled by their own queries; each cell pair once
    if obj >= cell_ids.shape[0] or obj <= q:
        return 0
    a = cell_ids[q]
    b = cell_ids[obj]
    if find(parent, members[offsets[a]]) == find(parent, members[offsets[b]]):
        return 0
    for s in range(offsets[a], offsets[a + 1]):
        for t in range(offsets[b], offsets[b + 1]):
            if point_distance(pts, members[s], pts, members[t]) <= eps:
                union_atomic(parent, members[s], members[t])
                return 0
    return 0


@njit(cache=True, parallel=True)
def _union_cells(parent, core, cell_ids, offsets, members):
    for t_ in prange(cell_ids.shape[0]):
        t = np.int64(t_)  # parfor indices are unsigned
        c = cell_ids[t]
        first = members[offsets[c]]
        for s in range(offsets[c], offsets[c + 1]):
            core[members[s]] = True
            union_atomic(parent, first, members[s])


@njit(cache=True)
def _tight_boxes(pts, cell_ids, offsets, members, lo, hi):
    for t in range(cell_ids.shape[0]):
        c = cell_ids[t]
        for k in range(pts.shape[1]):
            lo[t, k] = pts[members[offsets[c]], k]
            hi[t, k] = lo[t, k]
        for s in range(offsets[c], offsets[c + 1]):
            for k in range(pts.shape[1]):
                v = pts[members[s], k]
                lo[t, k] = min(lo[t, k], v)
                hi[t, k] = max(hi[t, k], v)


def _inflate(lo, hi, eps):
    """Boxes grown by eps, rounded outward to float32."""
    lo64 = lo.astype(np.float64) - float(eps)
    hi64 = hi.astype(np.float64) + float(eps)
    lo32 = lo64.astype(FLOAT)
    hi32 = hi64.astype(FLOAT)
    lo32 = np.where(lo32 > lo64, np.nextafter(lo32, FLOAT(-np.inf)), lo32)
    hi32 = np.where(hi32 < hi64, np.nextafter(hi32, FLOAT(np.inf)), hi32)
    return lo32, hi32


def fdbscan_densebox(points, params: DbscanParams, *, code_width: int = 64, parallel: bool = True) -> DbscanOutput:
    pts = prepare(points, params)
    n = pts.shape[0]
    if n == 0:
        return empty_output()
    eps = params.eps32
    timer = Timer()
    with timer.phase("build"):
        grid = build_dense_grid(pts, params)
        dense_cells = np.flatnonzero(grid.dense).astype(np.int64)
        n_dense = dense_cells.shape[0]
        sparse_points = np.flatnonzero(~grid.dense[grid.point_cell]).astype(np.int64)
        cell_lo = np.empty((n_dense, pts.shape[1]), dtype=FLOAT)
        cell_hi = np.empty_like(cell_lo)
        _tight_boxes(pts, dense_cells, grid.offsets, grid.members, cell_lo, cell_hi)
        obj_lo = np.concatenate([cell_lo, pts[sparse_points]])
        obj_hi = np.concatenate([cell_hi, pts[sparse_points]])
        tree = _bvh.build(obj_lo, obj_hi, code_width=code_width)

    parent = np.arange(n, dtype=np.int64)
    core = np.zeros(n, dtype=np.bool_)
    claimed = np.zeros(n, dtype=np.uint8)
    n_sparse = sparse_points.shape[0]
    sparse_preds = traversal.Spheres(pts[sparse_points], np.full(n_sparse, eps, dtype=FLOAT))
    common = (sparse_points, np.int64(n_dense), sparse_points, dense_cells, grid.offsets, grid.members, pts, eps)

    with timer.phase("core"):
        counts = np.zeros(n_sparse, dtype=np.int64)
        traversal.range_query(
            tree, sparse_preds, _count_cb, (counts, np.int64(params.min_pts)) + common, parallel=parallel
        )
        core[sparse_points] = counts >= params.min_pts
        del counts
        _union_cells(parent, core, dense_cells, grid.offsets, grid.members)

    with timer.phase("merge"):
        traversal.range_query(tree, sparse_preds, _point_merge_cb, (parent, core, claimed) + common, parallel=parallel)
        if n_dense > 1:
            grown = traversal.Boxes(*_inflate(cell_lo, cell_hi, eps))
            traversal.range_query(
                tree,
                grown,
                _cell_merge_cb,
                (parent, dense_cells, grid.offsets, grid.members, pts, eps),
                parallel=parallel,
            )

    with timer.phase("finalize"):
        labels = labels_from_parent(parent, core, claimed)
    stats = {"num_dense_cells": int(n_dense), "num_objects": int(tree.n), "tree_height": tree.height}
    return DbscanOutput(labels, core, timer.timings, stats)
