"""Linear BVH with ropes.

Construction: scene fold, Morton codes of the object centroids, stable sort,
Karras-ordered binary hierarchy from code prefixes, then one bottom-up pass
that computes node volumes and ropes.

Node references are plain integers in a single index space::

    0 .. n-2          internal nodes (Karras numbering, root is 0)
    n-1 .. 2n-2       leaves, in Morton order (leaf k is node n-1+k)
    SENTINEL (-1)     end of traversal

Only the left child of an internal node is stored. Its right child is the rope
of its left child.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from numba import njit, prange
from numba.cpython.unsafe.numbers import leading_zeros

from . import morton
from .geometry import FLOAT, Aabb, as_points

SENTINEL = -1


class Bvh(NamedTuple):
    n: int
    dim: int
    code_width: int
    root: int
    height: int
    internal_left: np.ndarray
    internal_rope: np.ndarray
    internal_lo: np.ndarray
    internal_hi: np.ndarray
    leaf_object: np.ndarray
    leaf_rope: np.ndarray
    leaf_lo: np.ndarray
    leaf_hi: np.ndarray
    scene_lo: np.ndarray
    scene_hi: np.ndarray

    @property
    def n_internal(self) -> int:
        return self.internal_left.shape[0]

    @property
    def scene(self) -> Aabb:
        return Aabb(self.scene_lo, self.scene_hi)

    def is_leaf(self, ref: int) -> bool:
        return ref >= self.n_internal

    def leaf_of(self, ref: int) -> int:
        return ref - self.n_internal


# ---------------------------------------------------------------------------
# hierarchy generation
# ---------------------------------------------------------------------------


@njit(inline="always", cache=True)
def _delta(codes, objs, i, j):
    """Common-prefix length of the (code, original index) keys at i and j."""
    if j < 0 or j >= codes.shape[0]:
        return -1
    a = np.uint64(codes[i])
    b = np.uint64(codes[j])
    if a != b:
        return np.int64(leading_zeros(a ^ b))
    return 64 + np.int64(leading_zeros(np.uint64(objs[i]) ^ np.uint64(objs[j])))


@njit(cache=True, parallel=True)
def _karras(codes, objs, left, right, first, last):
    n = codes.shape[0]
    n_int = n - 1
    for i_ in prange(n_int):
        i = np.int64(i_)  # parfor indices are unsigned
        direction = 1 if _delta(codes, objs, i, i + 1) > _delta(codes, objs, i, i - 1) else -1
        dmin = _delta(codes, objs, i, i - direction)

        lmax = 2
        while _delta(codes, objs, i, i + lmax * direction) > dmin:
            lmax *= 2
        lo, hi = lmax // 2, lmax
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if _delta(codes, objs, i, i + mid * direction) > dmin:
                lo = mid
            else:
                hi = mid
        length = lo
        j = i + length * direction
        dnode = _delta(codes, objs, i, j)

        lo, hi = 0, length
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if _delta(codes, objs, i, i + mid * direction) > dnode:
                lo = mid
            else:
                hi = mid
        gamma = i + lo * direction + min(direction, 0)

        f = min(i, j)
        l = max(i, j)
        first[i] = f
        last[i] = l
        left[i] = n_int + gamma if f == gamma else gamma
        right[i] = n_int + gamma + 1 if l == gamma + 1 else gamma + 1


@njit(inline="always", cache=True)
def _rope_after(last, first, n):
    # next node in depth-first order after a subtree whose range ends at `last`:
    # the right child of the split at `last`
    if last == n - 1:
        return -1
    nxt = last + 1
    if nxt <= n - 2 and first[nxt] == nxt:
        return nxt
    return n - 1 + nxt


@njit(cache=True)
def _bottom_up(left, right, first, last, leaf_lo, leaf_hi, int_lo, int_hi, int_rope, leaf_rope, height):
    n = leaf_lo.shape[0]
    n_int = n - 1
    d = leaf_lo.shape[1]
    parent = np.full(n_int + n, -1, dtype=np.int64)
    for i in range(n_int):
        parent[left[i]] = i
        parent[right[i]] = i
    visits = np.zeros(n_int, dtype=np.int8)
    leaf_height = 1
    for k in range(n):
        leaf_rope[k] = _rope_after(k, first, n)
        node = parent[n_int + k]
        while node != -1:
            if visits[node] == 0:
                visits[node] = 1
                break
            a = left[node]
            b = right[node]
            ha = leaf_height if a >= n_int else height[a]
            hb = leaf_height if b >= n_int else height[b]
            height[node] = 1 + max(ha, hb)
            for c in range(d):
                alo = leaf_lo[a - n_int, c] if a >= n_int else int_lo[a, c]
                ahi = leaf_hi[a - n_int, c] if a >= n_int else int_hi[a, c]
                blo = leaf_lo[b - n_int, c] if b >= n_int else int_lo[b, c]
                bhi = leaf_hi[b - n_int, c] if b >= n_int else int_hi[b, c]
                int_lo[node, c] = min(alo, blo)
                int_hi[node, c] = max(ahi, bhi)
            int_rope[node] = _rope_after(last[node], first, n)
            node = parent[node]


def _check_boxes(lo: np.ndarray, hi: np.ndarray):
    if lo.shape != hi.shape:
        raise ValueError("box corner arrays differ in shape")
    if not np.isfinite(hi).all():
        raise ValueError("non-finite box corner")
    if np.any(lo > hi):
        raise ValueError("box with min_corner > max_corner")


def build(lo, hi=None, code_width: int = 64) -> Bvh:
    """Build a hierarchy over boxes ``(lo[i], hi[i])``, or points if ``hi`` is None."""
    lo = as_points(lo)
    hi = lo if hi is None else as_points(hi)
    _check_boxes(lo, hi)
    n, d = lo.shape
    morton.bits_per_axis(code_width, d)

    scene_lo = lo.min(axis=0) if n else np.full(d, np.finfo(FLOAT).max, dtype=FLOAT)
    scene_hi = hi.max(axis=0) if n else np.full(d, -np.finfo(FLOAT).max, dtype=FLOAT)
    codes = morton.compute_codes(lo, hi, code_width, Aabb(scene_lo, scene_hi) if n else None)
    order = morton.sort_by_code(codes).astype(np.int64)

    n_int = max(n - 1, 0)
    leaf_lo = np.ascontiguousarray(lo[order])
    leaf_hi = leaf_lo if hi is lo else np.ascontiguousarray(hi[order])
    internal_left = np.empty(n_int, dtype=np.int64)
    internal_rope = np.empty(n_int, dtype=np.int64)
    internal_lo = np.empty((n_int, d), dtype=FLOAT)
    internal_hi = np.empty((n_int, d), dtype=FLOAT)
    leaf_rope = np.full(n, SENTINEL, dtype=np.int64)
    height = np.ones(n_int, dtype=np.int64)

    if n >= 2:
        sorted_codes = codes[order]
        right = np.empty(n_int, dtype=np.int64)
        first = np.empty(n_int, dtype=np.int64)
        last = np.empty(n_int, dtype=np.int64)
        _karras(sorted_codes, order, internal_left, right, first, last)
        _bottom_up(internal_left, right, first, last, leaf_lo, leaf_hi,
                   internal_lo, internal_hi, internal_rope, leaf_rope, height)

    return Bvh(
        n=n,
        dim=d,
        code_width=code_width,
        root=0 if n else SENTINEL,
        height=int(height[0]) if n >= 2 else int(n > 0),
        internal_left=internal_left,
        internal_rope=internal_rope,
        internal_lo=internal_lo,
        internal_hi=internal_hi,
        leaf_object=order,
        leaf_rope=leaf_rope,
        leaf_lo=leaf_lo,
        leaf_hi=leaf_hi,
        scene_lo=np.asarray(scene_lo, dtype=FLOAT),
        scene_hi=np.asarray(scene_hi, dtype=FLOAT),
    )


def build_from_boxes(objects: Sequence[Aabb], code_width: int = 64, dim: Optional[int] = None) -> Bvh:
    if not objects:
        if dim is None:
            raise ValueError("dim is required for an empty object list")
        return build(np.empty((0, dim), dtype=FLOAT), code_width=code_width)
    lo = np.stack([b.min_corner for b in objects])
    hi = np.stack([b.max_corner for b in objects])
    return build(lo, hi, code_width=code_width)


# ---------------------------------------------------------------------------
# inspection
# ---------------------------------------------------------------------------


def node_volume(bvh: Bvh, ref: int) -> tuple[np.ndarray, np.ndarray]:
    if bvh.is_leaf(ref):
        k = bvh.leaf_of(ref)
        return bvh.leaf_lo[k], bvh.leaf_hi[k]
    return bvh.internal_lo[ref], bvh.internal_hi[ref]


def rope(bvh: Bvh, ref: int) -> int:
    if bvh.is_leaf(ref):
        return int(bvh.leaf_rope[bvh.leaf_of(ref)])
    return int(bvh.internal_rope[ref])


def right_child(bvh: Bvh, ref: int) -> int:
    return rope(bvh, int(bvh.internal_left[ref]))


def rope_walk(bvh: Bvh, limit: Optional[int] = None) -> list[int]:
    """Leaves visited by following left children and ropes from the root, no pruning."""
    limit = 2 * bvh.n + 1 if limit is None else limit
    out = []
    node = bvh.root
    steps = 0
    while node != SENTINEL and steps <= limit:
        steps += 1
        if bvh.is_leaf(node):
            out.append(bvh.leaf_of(node))
            node = rope(bvh, node)
        else:
            node = int(bvh.internal_left[node])
    return out


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violation: Optional[str] = None
    detail: str = ""

    def __bool__(self):
        return self.ok


def validate(bvh: Bvh) -> ValidationReport:
    """Check structure; returns the first violation found."""
    n, n_int = bvh.n, bvh.n_internal

    def fail(kind, detail):
        return ValidationReport(False, kind, detail)

    if n == 0:
        if bvh.root != SENTINEL or n_int != 0:
            return fail("leaf-count", "empty hierarchy must have no nodes")
        return ValidationReport(True)
    if n_int != n - 1 or bvh.leaf_rope.shape[0] != n or bvh.leaf_object.shape[0] != n:
        return fail("leaf-count", f"{n} leaves need {n - 1} internal nodes, found {n_int}")
    if not np.array_equal(np.sort(bvh.leaf_object), np.arange(n)):
        return fail("leaf-count", "leaf objects are not a permutation")

    walk = rope_walk(bvh)
    if walk != list(range(n)):
        return fail("rope-coverage", f"rope walk visited {len(walk)} leaves, expected 0..{n - 1} in order")

    node = bvh.root
    while True:
        if rope(bvh, node) != SENTINEL:
            return fail("sentinel", f"right-most node {node} has rope {rope(bvh, node)}")
        if bvh.is_leaf(node):
            break
        node = right_child(bvh, node)

    for i in range(n_int):
        plo, phi = node_volume(bvh, i)
        for child in (int(bvh.internal_left[i]), right_child(bvh, i)):
            clo, chi = node_volume(bvh, child)
            if np.any(clo < plo) or np.any(chi > phi):
                return fail("containment", f"node {child} not inside parent {i}")
    return ValidationReport(True)


def to_text(bvh: Bvh) -> str:
    """Deterministic one-node-per-line dump for golden tests."""

    def fmt(v):
        return ",".join(format(float(x), ".9g") for x in v)

    lines = [f"bvh n={bvh.n} dim={bvh.dim} width={bvh.code_width} root={bvh.root}"]
    for i in range(bvh.n_internal):
        lines.append(
            f"I {i} left={bvh.internal_left[i]} rope={bvh.internal_rope[i]} "
            f"lo={fmt(bvh.internal_lo[i])} hi={fmt(bvh.internal_hi[i])}"
        )
    for k in range(bvh.n):
        lines.append(
            f"L {bvh.n_internal + k} object={bvh.leaf_object[k]} rope={bvh.leaf_rope[k]} "
            f"lo={fmt(bvh.leaf_lo[k])} hi={fmt(bvh.leaf_hi[k])}"
        )
    return "\n".join(lines) + "\n"
