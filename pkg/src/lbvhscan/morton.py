"""Z-order (Morton) codes at 32- and 64-bit widths.

Each axis gets ``width // d`` bits. Bits are interleaved so that axis 0 sits
in the least-significant position of every group of ``d`` bits; the unused
high bits stay zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .geometry import Aabb

WIDTHS = (32, 64)

_U = np.uint64


def bits_per_axis(width: int, d: int) -> int:
    if width not in WIDTHS:
        raise ValueError(f"code width must be 32 or 64, got {width}")
    return width // d


def code_dtype(width: int):
    return np.uint32 if width == 32 else np.uint64


# ---------------------------------------------------------------------------
# binning
# ---------------------------------------------------------------------------


def bin_points(points: np.ndarray, scene_min, scene_max, bits: int) -> np.ndarray:
    """Quantize ``(n, d)`` points against the scene box into ``[0, 2**bits - 1]``.

    Zero-extent axes map to bin 0. Points outside the scene are rejected.
    """
    p = np.asarray(points, dtype=np.float64)
    lo = np.asarray(scene_min, dtype=np.float64)
    hi = np.asarray(scene_max, dtype=np.float64)
    if p.size and (np.any(p < lo) or np.any(p > hi)):
        raise ValueError("point outside the scene box")
    extent = hi - lo
    nbins = float(1 << bits)
    scale = np.divide(nbins, extent, out=np.zeros_like(extent), where=extent > 0)
    b = np.floor((p - lo) * scale)
    np.clip(b, 0, nbins - 1, out=b)
    return b.astype(np.int64)


def bin(p, scene: Aabb, bits: int) -> tuple[int, ...]:  # noqa: A001
    return tuple(int(v) for v in bin_points(np.asarray(p)[None, :], scene.min_corner, scene.max_corner, bits)[0])


# ---------------------------------------------------------------------------
# bit interleaving
# ---------------------------------------------------------------------------


@njit(cache=True)
def _spread3_21(x):
    x = _U(x) & _U(0x1FFFFF)
    x = (x | (x << _U(32))) & _U(0x1F00000000FFFF)
    x = (x | (x << _U(16))) & _U(0x1F0000FF0000FF)
    x = (x | (x << _U(8))) & _U(0x100F00F00F00F00F)
    x = (x | (x << _U(4))) & _U(0x10C30C30C30C30C3)
    x = (x | (x << _U(2))) & _U(0x1249249249249249)
    return x


@njit(cache=True)
def _spread2_32(x):
    x = _U(x) & _U(0xFFFFFFFF)
    x = (x | (x << _U(16))) & _U(0x0000FFFF0000FFFF)
    x = (x | (x << _U(8))) & _U(0x00FF00FF00FF00FF)
    x = (x | (x << _U(4))) & _U(0x0F0F0F0F0F0F0F0F)
    x = (x | (x << _U(2))) & _U(0x3333333333333333)
    x = (x | (x << _U(1))) & _U(0x5555555555555555)
    return x


@njit(cache=True, parallel=True)
def _interleave(bins, out):
    # bins are already below 2**bits, so the masks of the widest layout serve
    # both widths
    n, d = bins.shape
    for i_ in prange(n):
        i = np.int64(i_)  # parfor indices are unsigned
        if d == 3:
            out[i] = _spread3_21(bins[i, 0]) | (_spread3_21(bins[i, 1]) << _U(1)) | (_spread3_21(bins[i, 2]) << _U(2))
        else:
            out[i] = _spread2_32(bins[i, 0]) | (_spread2_32(bins[i, 1]) << _U(1))


def encode_many(bins: np.ndarray, width: int) -> np.ndarray:
    bins = np.ascontiguousarray(bins, dtype=np.int64)
    n, d = bins.shape
    bits = bits_per_axis(width, d)
    if n and (bins.min() < 0 or bins.max() >= (1 << bits)):
        raise ValueError(f"bin index out of range for {bits} bits per axis")
    out = np.empty(n, dtype=np.uint64)
    _interleave(bins, out)
    return out.astype(code_dtype(width), copy=False)


def encode(bins, width: int) -> int:
    bins = np.asarray(bins, dtype=np.int64)
    return int(encode_many(bins[None, :], width)[0])


def decode(code: int, width: int, d: int) -> tuple[int, ...]:
    bits = bits_per_axis(width, d)
    code = int(code)
    out = [0] * d
    for b in range(bits):
        for k in range(d):
            out[k] |= ((code >> (b * d + k)) & 1) << b
    return tuple(out)


def compute_codes(lo: np.ndarray, hi: np.ndarray, width: int, scene: Aabb | None = None) -> np.ndarray:
    """Codes of box centroids, binned against ``scene`` (default: fold of the boxes)."""
    d = lo.shape[1]
    if lo.shape[0] == 0:
        return np.empty(0, dtype=code_dtype(width))
    if scene is None:
        scene_min, scene_max = lo.min(axis=0), hi.max(axis=0)
    else:
        scene_min, scene_max = scene.min_corner, scene.max_corner
    centers = (lo.astype(np.float64) + hi) * 0.5
    bins = bin_points(centers, scene_min, scene_max, bits_per_axis(width, d))
    return encode_many(bins, width)


def sort_by_code(codes: np.ndarray) -> np.ndarray:
    """Stable ascending permutation; equal codes keep their input order."""
    return np.argsort(np.asarray(codes), kind="stable")


# ---------------------------------------------------------------------------
# duplicate statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MortonStats:
    num_codes_duplicated_gt3: int
    num_points_with_duplicate_code: int
    max_same_code_duplicates: int


def morton_stats(codes) -> MortonStats:
    codes = np.asarray(codes)
    if codes.size == 0:
        return MortonStats(0, 0, 0)
    _, counts = np.unique(codes, return_counts=True)
    return MortonStats(
        num_codes_duplicated_gt3=int(np.count_nonzero(counts > 3)),
        num_points_with_duplicate_code=int(counts[counts > 1].sum()),
        max_same_code_duplicates=int(counts.max()),
    )
