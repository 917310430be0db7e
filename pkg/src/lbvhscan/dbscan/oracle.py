"""Sequential disjoint-set DBSCAN with brute-force neighborhoods.

Deliberately independent of the hierarchy code: every neighborhood is an
O(n) scan, so the whole run is O(n^2). Used as the reference the tree-based
algorithms are checked against.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ..geometry import point_distance
from ..unionfind import union
from ._common import DbscanOutput, DbscanParams, Timer, empty_output, labels_from_parent, prepare


@njit(cache=True)
def _neighbors(pts, x, eps, out):
    m = 0
    for y in range(pts.shape[0]):
        if point_distance(pts, x, pts, y) <= eps:
            out[m] = y
            m += 1
    return m


@njit(cache=True)
def _dsdbscan(pts, eps, min_pts, parent, core, member):
    buf = np.empty(pts.shape[0], dtype=np.int64)
    for x in range(pts.shape[0]):
        m = _neighbors(pts, x, eps, buf)
        if m >= min_pts:
            core[x] = True
            for t in range(m):
                y = buf[t]
                if core[y]:
                    union(parent, x, y)
                elif not member[y]:
                    member[y] = True
                    union(parent, x, y)


def dsdbscan_oracle(points, params: DbscanParams) -> DbscanOutput:
    pts = prepare(points, params)
    n = pts.shape[0]
    if n == 0:
        return empty_output()
    timer = Timer()
    parent = np.arange(n, dtype=np.int64)
    core = np.zeros(n, dtype=np.bool_)
    member = np.zeros(n, dtype=np.bool_)
    with timer.phase("merge"):
        _dsdbscan(pts, params.eps32, params.min_pts, parent, core, member)
    with timer.phase("finalize"):
        labels = labels_from_parent(parent, core)
    return DbscanOutput(labels, core, timer.timings)


@njit(cache=True)
def _count_all(pts, eps, counts):
    for x in range(pts.shape[0]):
        c = 0
        for y in range(pts.shape[0]):
            if point_distance(pts, x, pts, y) <= eps:
                c += 1
        counts[x] = c


def brute_force_counts(points, eps: float) -> np.ndarray:
    """|N_eps(x)| for every point, self included."""
    pts = np.ascontiguousarray(points, dtype=np.float32)
    counts = np.zeros(pts.shape[0], dtype=np.int64)
    _count_all(pts, np.float32(eps), counts)
    return counts
