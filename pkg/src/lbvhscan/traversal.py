"""Queries against a :class:`~lbvhscan.bvh.Bvh`.

Range queries and pair traversal walk the hierarchy without a stack: on a
volume hit descend to the left child, otherwise (or after a leaf) follow the
rope, until the sentinel. Nearest queries use a small explicit stack plus a
bounded max-heap of the current best candidates.

Callbacks come in two flavours:

* a plain Python callable ``f(query_index, object_index)``; the traversal runs
  in the interpreter (fine for small problems and tests);
* a numba-jitted ``f(query_index, object_index, state)`` together with a
  ``state`` object (typically a tuple of arrays); the traversal is compiled
  and may run queries concurrently with ``parallel=True``.

Range callbacks may return :attr:`CallbackControl.TERMINATE_QUERY` to stop
the traversal of the query that produced the match.
"""

from __future__ import annotations

import enum
from typing import NamedTuple, Sequence, Union

import numpy as np
from numba import njit, prange
from numba.extending import is_jitted

from . import morton
from .bvh import SENTINEL, Bvh
from .geometry import FLOAT, Aabb, Sphere, box_point_distance, boxes_intersect


class CallbackControl(enum.IntEnum):
    CONTINUE = 0
    TERMINATE_QUERY = 1


_TERMINATE = 1


class CrsCapacityError(MemoryError):
    """The flat result list does not fit; use a callback instead."""


class Spheres(NamedTuple):
    centers: np.ndarray
    radii: np.ndarray


class Boxes(NamedTuple):
    lo: np.ndarray
    hi: np.ndarray


class NearestPredicate(NamedTuple):
    origin: np.ndarray
    k: int


class CrsResult(NamedTuple):
    offsets: np.ndarray
    values: np.ndarray

    def row(self, q: int) -> np.ndarray:
        return self.values[self.offsets[q] : self.offsets[q + 1]]

    def __len__(self):
        return self.offsets.shape[0] - 1


RangePredicates = Union[Spheres, Boxes, Sequence[Union[Sphere, Aabb]]]


def _twin(fn):
    """(interpreted, sequential jit, parallel jit) versions of one kernel body."""
    return fn, njit(fn), njit(parallel=True)(fn)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


def _spheres_kernel(bvh, centers, radii, qids, callback, state):
    n_int = bvh.internal_left.shape[0]
    for t_ in prange(qids.shape[0]):
        t = np.int64(t_)  # parfor indices are unsigned
        q = qids[t]
        r = radii[q]
        node = bvh.root
        while node != -1:
            if node < n_int:
                if box_point_distance(bvh.internal_lo, bvh.internal_hi, node, centers, q) <= r:
                    node = bvh.internal_left[node]
                else:
                    node = bvh.internal_rope[node]
            else:
                leaf = node - n_int
                node = bvh.leaf_rope[leaf]
                if box_point_distance(bvh.leaf_lo, bvh.leaf_hi, leaf, centers, q) <= r:
                    if callback(q, bvh.leaf_object[leaf], state) == _TERMINATE:
                        break


def _boxes_kernel(bvh, lo, hi, qids, callback, state):
    n_int = bvh.internal_left.shape[0]
    for t_ in prange(qids.shape[0]):
        t = np.int64(t_)  # parfor indices are unsigned
        q = qids[t]
        node = bvh.root
        while node != -1:
            if node < n_int:
                if boxes_intersect(bvh.internal_lo, bvh.internal_hi, node, lo, hi, q):
                    node = bvh.internal_left[node]
                else:
                    node = bvh.internal_rope[node]
            else:
                leaf = node - n_int
                node = bvh.leaf_rope[leaf]
                if boxes_intersect(bvh.leaf_lo, bvh.leaf_hi, leaf, lo, hi, q):
                    if callback(q, bvh.leaf_object[leaf], state) == _TERMINATE:
                        break


def _pairs_kernel(bvh, radius, callback, state):
    # the walk for leaf k starts at k's rope, so it only sees leaves after k
    n_int = bvh.internal_left.shape[0]
    pts = bvh.leaf_lo
    for k_ in prange(bvh.leaf_rope.shape[0]):
        k = np.int64(k_)  # parfor indices are unsigned
        i = bvh.leaf_object[k]
        node = bvh.leaf_rope[k]
        while node != -1:
            if node < n_int:
                if box_point_distance(bvh.internal_lo, bvh.internal_hi, node, pts, k) <= radius:
                    node = bvh.internal_left[node]
                else:
                    node = bvh.internal_rope[node]
            else:
                leaf = node - n_int
                node = bvh.leaf_rope[leaf]
                if box_point_distance(bvh.leaf_lo, bvh.leaf_hi, leaf, pts, k) <= radius:
                    callback(i, bvh.leaf_object[leaf], state)


_SPHERES = _twin(_spheres_kernel)
_BOXES = _twin(_boxes_kernel)
_PAIRS = _twin(_pairs_kernel)


def _pick(kernels, callback, parallel):
    if is_jitted(callback):
        return kernels[2] if parallel else kernels[1]
    return kernels[0]


def _python_adapter(callback):
    def cb(q, obj, state):
        return callback(int(q), int(obj))

    return cb


# ---------------------------------------------------------------------------
# predicates
# ---------------------------------------------------------------------------


def spheres(centers, radii) -> Spheres:
    centers = np.ascontiguousarray(centers, dtype=FLOAT)
    radii = np.broadcast_to(np.asarray(radii, dtype=FLOAT), centers.shape[:1]).copy()
    if centers.ndim != 2:
        raise ValueError("centers must have shape (q, d)")
    if not (np.isfinite(centers).all() and np.isfinite(radii).all()) or np.any(radii < 0):
        raise ValueError("sphere predicates must be finite with radius >= 0")
    return Spheres(centers, radii)


def boxes(lo, hi) -> Boxes:
    lo = np.ascontiguousarray(lo, dtype=FLOAT)
    hi = np.ascontiguousarray(hi, dtype=FLOAT)
    if lo.shape != hi.shape or lo.ndim != 2:
        raise ValueError("box predicates need matching (q, d) corner arrays")
    if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
        raise ValueError("box predicates must be finite")
    return Boxes(lo, hi)


def _split_predicates(predicates, d):
    """Group predicates into (batch, original query ids) pairs."""
    if isinstance(predicates, (Spheres, Boxes)):
        return [(predicates, np.arange(predicates[0].shape[0], dtype=np.int64))], predicates[0].shape[0]
    predicates = list(predicates)
    nq = len(predicates)
    groups = []
    sph = [i for i, p in enumerate(predicates) if isinstance(p, Sphere)]
    box = [i for i, p in enumerate(predicates) if isinstance(p, Aabb)]
    if len(sph) + len(box) != nq:
        raise TypeError("range predicates must be Sphere or Aabb")
    if sph:
        centers = np.zeros((nq, d), dtype=FLOAT)
        radii = np.zeros(nq, dtype=FLOAT)
        for i in sph:
            centers[i] = predicates[i].center
            radii[i] = predicates[i].radius
        groups.append((spheres(centers, radii), np.asarray(sph, dtype=np.int64)))
    if box:
        lo = np.zeros((nq, d), dtype=FLOAT)
        hi = np.zeros((nq, d), dtype=FLOAT)
        for i in box:
            lo[i] = predicates[i].min_corner
            hi[i] = predicates[i].max_corner
        groups.append((boxes(lo, hi), np.asarray(box, dtype=np.int64)))
    return groups, nq


def representative_points(predicates) -> np.ndarray:
    if isinstance(predicates, Spheres):
        return predicates.centers
    if isinstance(predicates, Boxes):
        return ((predicates.lo.astype(np.float64) + predicates.hi) / 2).astype(FLOAT)
    reps = []
    for p in predicates:
        if isinstance(p, Sphere):
            reps.append(p.center)
        elif isinstance(p, Aabb):
            reps.append(((p.min_corner.astype(np.float64) + p.max_corner) / 2).astype(FLOAT))
        elif isinstance(p, NearestPredicate):
            reps.append(np.asarray(p.origin, dtype=FLOAT))
        else:
            raise TypeError(f"unsupported predicate {type(p).__name__}")
    return np.asarray(reps, dtype=FLOAT)


def sort_queries(predicates) -> np.ndarray:
    """Permutation putting queries in Z-order of their representative points."""
    pts = representative_points(predicates)
    if len(pts) == 0:
        return np.empty(0, dtype=np.int64)
    codes = morton.compute_codes(pts, pts, 64)
    return morton.sort_by_code(codes).astype(np.int64)


# ---------------------------------------------------------------------------
# range / pair queries
# ---------------------------------------------------------------------------


def range_query(
    bvh: Bvh,
    predicates: RangePredicates,
    callback,
    state=None,
    *,
    parallel: bool = False,
    presort=True,
) -> None:
    """Invoke ``callback`` once per (query, stored object) whose volumes intersect.

    ``presort`` reorders query execution along the Z-curve; it may also be an
    explicit execution order (a permutation of the query indices) for a
    batch predicate. Results never depend on it.
    """
    groups, nq = _split_predicates(predicates, bvh.dim)
    if bvh.n == 0 or nq == 0:
        return
    cb = callback if is_jitted(callback) else _python_adapter(callback)
    if isinstance(presort, np.ndarray):
        if len(groups) != 1 or presort.shape != (nq,):
            raise ValueError("an explicit query order needs a batch predicate and one entry per query")
        groups = [(groups[0][0], presort.astype(np.int64, copy=False))]
        presort = False
    for batch, qids in groups:
        if presort and len(qids) > 1:
            qids = qids[sort_queries(type(batch)(*(a[qids] for a in batch)))]
        kernels = _SPHERES if isinstance(batch, Spheres) else _BOXES
        _pick(kernels, callback, parallel)(bvh, batch[0], batch[1], qids, cb, state)


def pair_traversal(bvh: Bvh, eps: float, callback, state=None, *, parallel: bool = False) -> None:
    """Invoke ``callback(i, j)`` once per unordered pair of stored points within ``eps``."""
    eps = FLOAT(eps)
    if not (np.isfinite(eps) and eps >= 0):
        raise ValueError("eps must be finite and >= 0")
    if bvh.n < 2:
        return
    cb = callback if is_jitted(callback) else _python_adapter(callback)
    _pick(_PAIRS, callback, parallel)(bvh, eps, cb, state)


@njit
def _count_cb(q, obj, counts):
    counts[q] += 1
    return 0


@njit
def _fill_cb(q, obj, state):
    values, cursor = state
    values[cursor[q]] = obj
    cursor[q] += 1
    return 0


@njit(cache=True, parallel=True)
def _sort_rows(offsets, values):
    for q_ in prange(offsets.shape[0] - 1):
        q = np.int64(q_)  # parfor indices are unsigned
        values[offsets[q] : offsets[q + 1]].sort()


def query_crs(
    bvh: Bvh,
    predicates: RangePredicates,
    *,
    max_values: int | None = None,
    parallel: bool = False,
) -> CrsResult:
    """Materialize range matches as offsets + values (two-pass: count, scan, fill).

    Raises :class:`CrsCapacityError` when the flat list would exceed
    ``max_values`` entries or cannot be allocated.
    """
    _, nq = _split_predicates(predicates, bvh.dim)
    counts = np.zeros(nq, dtype=np.int64)
    range_query(bvh, predicates, _count_cb, counts, parallel=parallel)
    offsets = np.zeros(nq + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    total = int(offsets[-1])
    del counts
    if max_values is not None and total > max_values:
        raise CrsCapacityError(f"{total} matches exceed the capacity of {max_values}")
    try:
        values = np.empty(total, dtype=np.int64)
    except MemoryError as exc:
        raise CrsCapacityError(f"cannot allocate {total} matches") from exc
    cursor = offsets[:-1].copy()
    range_query(bvh, predicates, _fill_cb, (values, cursor), parallel=parallel)
    del cursor
    _sort_rows(offsets, values)
    return CrsResult(offsets, values)


# ---------------------------------------------------------------------------
# nearest
# ---------------------------------------------------------------------------


@njit(inline="always")
def _worse(da, ia, db, ib):
    return da > db or (da == db and ia > ib)


@njit(inline="always")
def _sift_down(hd, hi, size, pos):
    while True:
        c = 2 * pos + 1
        if c >= size:
            return
        if c + 1 < size and _worse(hd[c + 1], hi[c + 1], hd[c], hi[c]):
            c += 1
        if _worse(hd[c], hi[c], hd[pos], hi[pos]):
            hd[c], hd[pos] = hd[pos], hd[c]
            hi[c], hi[pos] = hi[pos], hi[c]
            pos = c
        else:
            return


@njit(inline="always")
def _node_dist(bvh, n_int, node, origins, q):
    if node < n_int:
        return box_point_distance(bvh.internal_lo, bvh.internal_hi, node, origins, q)
    return box_point_distance(bvh.leaf_lo, bvh.leaf_hi, node - n_int, origins, q)


def _nearest_kernel(bvh, origins, ks, out_idx, out_dist, stack_cap):
    n_int = bvh.internal_left.shape[0]
    for q_ in prange(origins.shape[0]):
        q = np.int64(q_)  # parfor indices are unsigned
        k = ks[q]
        hd = np.empty(k, dtype=np.float32)
        hi = np.empty(k, dtype=np.int64)
        size = 0
        stack = np.empty(stack_cap, dtype=np.int64)
        stack_d = np.empty(stack_cap, dtype=np.float32)
        stack[0] = bvh.root
        stack_d[0] = _node_dist(bvh, n_int, bvh.root, origins, q)
        top = 1
        while top > 0:
            top -= 1
            node = stack[top]
            dnode = stack_d[top]
            # equal distance can still win on the index tie-break, so prune only on ">"
            if size == k and dnode > hd[0]:
                continue
            if node >= n_int:
                obj = bvh.leaf_object[node - n_int]
                if size < k:
                    # sift up
                    pos = size
                    hd[pos] = dnode
                    hi[pos] = obj
                    size += 1
                    while pos > 0:
                        par = (pos - 1) // 2
                        if _worse(hd[pos], hi[pos], hd[par], hi[par]):
                            hd[pos], hd[par] = hd[par], hd[pos]
                            hi[pos], hi[par] = hi[par], hi[pos]
                            pos = par
                        else:
                            break
                elif _worse(hd[0], hi[0], dnode, obj):
                    hd[0] = dnode
                    hi[0] = obj
                    _sift_down(hd, hi, size, 0)
                continue
            a = bvh.internal_left[node]
            b = bvh.leaf_rope[a - n_int] if a >= n_int else bvh.internal_rope[a]
            da = _node_dist(bvh, n_int, a, origins, q)
            db = _node_dist(bvh, n_int, b, origins, q)
            # push the farther child first so the nearer one is popped next
            if da < db:
                a, b = b, a
                da, db = db, da
            if not (size == k and da > hd[0]):
                stack[top] = a
                stack_d[top] = da
                top += 1
            if not (size == k and db > hd[0]):
                stack[top] = b
                stack_d[top] = db
                top += 1
        # heap -> ascending order
        for end in range(size - 1, 0, -1):
            hd[0], hd[end] = hd[end], hd[0]
            hi[0], hi[end] = hi[end], hi[0]
            _sift_down(hd, hi, end, 0)
        for m in range(size):
            out_idx[q, m] = hi[m]
            out_dist[q, m] = hd[m]


_NEAREST = _twin(_nearest_kernel)


def nearest(bvh: Bvh, origins, k, *, parallel: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """k nearest stored objects per origin, ascending by (distance, index).

    ``k`` is an int or a per-query array. Returns ``(indices, distances)`` of
    shape ``(q, max k)``; slots beyond ``min(k, n)`` hold -1 / inf.
    """
    origins = np.ascontiguousarray(origins, dtype=FLOAT)
    if origins.ndim != 2 or (origins.shape[0] and origins.shape[1] != bvh.dim):
        raise ValueError("origins must have shape (q, d) matching the hierarchy")
    nq = origins.shape[0]
    ks = np.broadcast_to(np.asarray(k, dtype=np.int64), (nq,)).copy()
    if np.any(ks < 1):
        raise ValueError("k must be >= 1")
    kmax = int(ks.max()) if nq else 0
    out_idx = np.full((nq, kmax), -1, dtype=np.int64)
    out_dist = np.full((nq, kmax), np.inf, dtype=FLOAT)
    if bvh.n == 0 or nq == 0:
        return out_idx, out_dist
    np.minimum(ks, bvh.n, out=ks)
    kernel = _NEAREST[2] if parallel else _NEAREST[1]
    kernel(bvh, origins, ks, out_idx, out_dist, bvh.height + 2)
    return out_idx, out_dist


def nearest_query(bvh: Bvh, predicates: Sequence[NearestPredicate], callback, *, parallel: bool = False) -> None:
    """Deliver the ``min(k, n)`` nearest objects of each predicate to ``callback(q, obj)``.

    Objects of one query arrive in ascending (distance, index) order.
    """
    predicates = list(predicates)
    if not predicates or bvh.n == 0:
        return
    origins = np.asarray([p.origin for p in predicates], dtype=FLOAT)
    ks = np.asarray([p.k for p in predicates], dtype=np.int64)
    idx, _ = nearest(bvh, origins, ks, parallel=parallel)
    for q in range(len(predicates)):
        for obj in idx[q, : min(int(ks[q]), bvh.n)]:
            callback(q, int(obj))
