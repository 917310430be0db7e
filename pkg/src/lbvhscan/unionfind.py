"""Disjoint sets over ``0..n-1``.

Unions always link the larger root under the smaller one, so the root of every
set is its smallest member. That makes the partition's representatives
canonical regardless of the order in which unions happen, sequential or
concurrent.

Concurrent unions use a compare-and-swap on the root's parent entry; a lost
race re-reads both roots and retries. ``find`` halves paths with plain
stores, which is safe here because a parent entry only ever moves to an
ancestor.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange, types
from numba.core import cgutils
from numba.extending import intrinsic


@intrinsic
def atomic_cas(typingctx, arr, idx, expected, desired):
    """``old = arr[idx]; if old == expected: arr[idx] = desired; return old``, atomically."""
    if not isinstance(arr, types.Array) or not isinstance(arr.dtype, types.Integer):
        return None
    sig = arr.dtype(arr, types.intp, arr.dtype, arr.dtype)

    def codegen(context, builder, signature, args):
        arr_t = signature.args[0]
        aryv, idxv, expv, desv = args
        ary = context.make_array(arr_t)(context, builder, aryv)
        ptr = cgutils.get_item_pointer(context, builder, arr_t, ary, [idxv])
        res = builder.cmpxchg(ptr, expv, desv, "seq_cst", "seq_cst")
        return builder.extract_value(res, 0)

    return sig, codegen


@njit(inline="always", cache=True)
def find(parent, i):
    while parent[i] != i:
        g = parent[parent[i]]
        parent[i] = g
        i = g
    return i


@njit(inline="always", cache=True)
def union(parent, i, j):
    """Sequential union; returns True if two sets were merged."""
    i = find(parent, i)
    j = find(parent, j)
    if i == j:
        return False
    if i < j:
        parent[j] = i
    else:
        parent[i] = j
    return True


@njit(inline="always", cache=True)
def union_atomic(parent, i, j):
    while True:
        i = find(parent, i)
        j = find(parent, j)
        if i == j:
            return False
        if i < j:
            i, j = j, i
        if atomic_cas(parent, i, i, j) == i:
            return True


@njit(cache=True)
def _union_pairs_seq(parent, a, b):
    for t in range(a.shape[0]):
        union(parent, a[t], b[t])


@njit(cache=True, parallel=True)
def _union_pairs_par(parent, a, b):
    for t_ in prange(a.shape[0]):
        t = np.int64(t_)  # parfor indices are unsigned
        union_atomic(parent, a[t], b[t])


@njit(cache=True, parallel=True)
def _flatten(parent, out):
    for i_ in prange(parent.shape[0]):
        i = np.int64(i_)  # parfor indices are unsigned
        r = i
        while parent[r] != r:
            r = parent[r]
        out[i] = r


class DisjointSets:
    """Union-find state; ``parent`` is an int64 array of length ``n``."""

    def __init__(self, n: int):
        if n < 0:
            raise ValueError("n must be >= 0")
        self.parent = np.arange(n, dtype=np.int64)

    def __len__(self):
        return self.parent.shape[0]

    def _check(self, i):
        if not 0 <= i < len(self):
            raise IndexError(f"element {i} out of range for {len(self)} sets")

    def find(self, i: int) -> int:
        self._check(i)
        p = self.parent
        while p[i] != i:
            p[i] = p[p[i]]
            i = int(p[i])
        return int(i)

    def union(self, i: int, j: int) -> None:
        self._check(j)
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            if ri < rj:
                self.parent[rj] = ri
            else:
                self.parent[ri] = rj

    def union_pairs(self, a, b, parallel: bool = False) -> None:
        """Bulk union of ``(a[t], b[t])``; concurrent CAS-based when ``parallel``."""
        a = np.ascontiguousarray(a, dtype=np.int64)
        b = np.ascontiguousarray(b, dtype=np.int64)
        if a.shape != b.shape:
            raise ValueError("pair arrays differ in length")
        if a.size and (min(a.min(), b.min()) < 0 or max(a.max(), b.max()) >= len(self)):
            raise IndexError("pair element out of range")
        (_union_pairs_par if parallel else _union_pairs_seq)(self.parent, a, b)

    def representatives(self) -> np.ndarray:
        """Root of every element, without modifying the structure."""
        out = np.empty_like(self.parent)
        _flatten(self.parent, out)
        return out


def make(n: int) -> DisjointSets:
    return DisjointSets(n)
