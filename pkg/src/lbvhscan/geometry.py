"""Points, boxes and spheres plus the distance/intersection predicates.

Coordinates are stored as float32. Squared-difference sums are accumulated in
float64 and the final length is rounded to float32, so that every comparison
against a radius is done the same way by the tree kernels, the brute-force
references and the scalar helpers below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from numba import njit

FLOAT = np.float32
# identity element of box union; finite so it survives float32 arithmetic
LARGE = np.float32(np.finfo(np.float32).max)

SUPPORTED_DIMS = (2, 3)


def as_points(points, copy: bool = False) -> np.ndarray:
    """Validate and convert input to a C-contiguous ``(n, d)`` float32 array.

    Raises ``ValueError`` for wrong shape, unsupported dimension or any
    non-finite coordinate.
    """
    arr = np.ascontiguousarray(points, dtype=FLOAT)
    if copy and np.shares_memory(arr, points):
        arr = arr.copy()
    if arr.ndim != 2:
        raise ValueError(f"points must have shape (n, d), got {arr.shape}")
    if arr.shape[1] not in SUPPORTED_DIMS:
        raise ValueError(f"dimension must be one of {SUPPORTED_DIMS}, got {arr.shape[1]}")
    if not np.isfinite(arr).all():
        bad = int(np.flatnonzero(~np.isfinite(arr).all(axis=1))[0])
        raise ValueError(f"non-finite coordinate in point {bad}")
    return arr


def _as_point(p) -> np.ndarray:
    return np.asarray(p, dtype=FLOAT).reshape(-1)


@dataclass(frozen=True)
class Aabb:
    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "min_corner", _as_point(self.min_corner))
        object.__setattr__(self, "max_corner", _as_point(self.max_corner))
        if self.min_corner.shape != self.max_corner.shape:
            raise ValueError("box corners differ in dimension")

    @classmethod
    def empty(cls, d: int) -> "Aabb":
        return cls(np.full(d, LARGE), np.full(d, -LARGE))

    @classmethod
    def of_point(cls, p) -> "Aabb":
        p = _as_point(p)
        return cls(p, p.copy())

    @property
    def dim(self) -> int:
        return self.min_corner.shape[0]

    def is_empty(self) -> bool:
        return bool(np.any(self.min_corner > self.max_corner))

    def __eq__(self, other):
        if not isinstance(other, Aabb):
            return NotImplemented
        return np.array_equal(self.min_corner, other.min_corner) and np.array_equal(
            self.max_corner, other.max_corner
        )

    def __hash__(self):
        return hash((self.min_corner.tobytes(), self.max_corner.tobytes()))

    def __repr__(self):
        return f"Aabb({self.min_corner.tolist()}, {self.max_corner.tolist()})"


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _as_point(self.center))
        r = FLOAT(self.radius)
        if not (math.isfinite(r) and r >= 0):
            raise ValueError(f"sphere radius must be finite and >= 0, got {self.radius}")
        object.__setattr__(self, "radius", r)


# ---------------------------------------------------------------------------
# jitted primitives; row-wise on (n, d) arrays so kernels avoid temporaries
# ---------------------------------------------------------------------------


@njit(inline="always", cache=True)
def point_distance(a, i, b, j):
    s = 0.0
    for k in range(a.shape[1]):
        t = np.float64(a[i, k]) - np.float64(b[j, k])
        s += t * t
    return np.float32(math.sqrt(s))


@njit(inline="always", cache=True)
def box_point_distance(lo, hi, i, p, j):
    """Distance from point ``p[j]`` to box ``(lo[i], hi[i])``; 0 inside."""
    s = 0.0
    for k in range(lo.shape[1]):
        x = np.float64(p[j, k])
        if x < lo[i, k]:
            t = np.float64(lo[i, k]) - x
            s += t * t
        elif x > hi[i, k]:
            t = x - np.float64(hi[i, k])
            s += t * t
    return np.float32(math.sqrt(s))


@njit(inline="always", cache=True)
def boxes_intersect(alo, ahi, i, blo, bhi, j):
    for k in range(alo.shape[1]):
        if alo[i, k] > bhi[j, k] or blo[j, k] > ahi[i, k]:
            return False
    return True


# ---------------------------------------------------------------------------
# scalar API
# ---------------------------------------------------------------------------


def distance(a, b) -> np.float32:
    a = _as_point(a)
    b = _as_point(b)
    if a.shape != b.shape:
        raise ValueError("points differ in dimension")
    return point_distance(a[None, :], 0, b[None, :], 0)


def min_distance(p, box: Aabb) -> np.float32:
    p = _as_point(p)
    if p.shape[0] != box.dim:
        raise ValueError("point and box differ in dimension")
    return box_point_distance(box.min_corner[None, :], box.max_corner[None, :], 0, p[None, :], 0)


def expand(box: Aabb, other: Union[Aabb, np.ndarray]) -> Aabb:
    """Smallest box containing ``box`` and ``other`` (a box or a point)."""
    if isinstance(other, Aabb):
        lo, hi = other.min_corner, other.max_corner
    else:
        lo = hi = _as_point(other)
    if lo.shape[0] != box.dim:
        raise ValueError("dimension mismatch")
    return Aabb(np.minimum(box.min_corner, lo), np.maximum(box.max_corner, hi))


def intersects(box: Aabb, other: Union[Sphere, Aabb]) -> bool:
    if isinstance(other, Sphere):
        return bool(min_distance(other.center, box) <= other.radius)
    if isinstance(other, Aabb):
        if other.dim != box.dim:
            raise ValueError("dimension mismatch")
        return bool(
            boxes_intersect(
                box.min_corner[None, :],
                box.max_corner[None, :],
                0,
                other.min_corner[None, :],
                other.max_corner[None, :],
                0,
            )
        )
    raise TypeError(f"cannot intersect a box with {type(other).__name__}")


def centroid(box: Aabb) -> np.ndarray:
    return ((box.min_corner.astype(np.float64) + box.max_corner) / 2).astype(FLOAT)


def bounding_box(lo: np.ndarray, hi: np.ndarray | None = None) -> Aabb:
    """Fold of a set of boxes ``(lo, hi)`` (or of points, if ``hi`` is None)."""
    if hi is None:
        hi = lo
    if lo.shape[0] == 0:
        return Aabb.empty(lo.shape[1])
    return Aabb(lo.min(axis=0), hi.max(axis=0))
