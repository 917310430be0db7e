"""Point-set files, synthetic generators and the linking-length eps rule.

Two on-disk formats are understood:

``csv``
    One point per line, coordinates separated by commas. The dimension is
    taken from the first line and every other line must agree.
``binary``
    Little-endian. The 8-byte magic ``ABXPTS01``, a ``uint32`` dimension, a
    ``uint64`` point count, then ``count * dimension`` ``float32`` values
    stored point by point.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import FLOAT, SUPPORTED_DIMS

MAGIC = b"ABXPTS01"
_HEADER = struct.Struct("<8sIQ")
FORMATS = ("csv", "binary")
_FLOAT_MAX = float(np.finfo(FLOAT).max)


class LoadError(ValueError):
    """Malformed point file; the message names the offending line or byte."""


class SpecError(ValueError):
    """Invalid generator spec or eps inputs."""


def derive_eps(b: float, volume: float, n: float) -> float:
    """``b * (volume / n) ** (1/3)``: linking length times mean interparticle spacing."""
    for name, v in (("b", b), ("V", volume), ("n", n)):
        if not (isinstance(v, (int, float, np.integer, np.floating)) and math.isfinite(v) and v > 0):
            raise SpecError(f"{name} must be a positive finite number, got {v!r}")
    return float(b) * (float(volume) / float(n)) ** (1.0 / 3.0)


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------


def _check_finite(values: np.ndarray, where):
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise LoadError(f"non-finite value at {where(int(bad[0]))}")


def _load_csv(path: Path) -> np.ndarray:
    rows = []
    d = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            fields = text.split(",")
            try:
                row = [float(f) for f in fields]
            except ValueError:
                raise LoadError(f"{path}: line {lineno}: cannot parse {text!r}") from None
            if d is None:
                d = len(row)
                if d not in SUPPORTED_DIMS:
                    raise LoadError(f"{path}: line {lineno}: dimension {d} not supported")
            elif len(row) != d:
                raise LoadError(f"{path}: line {lineno}: expected {d} values, found {len(row)}")
            if not all(math.isfinite(v) for v in row):
                raise LoadError(f"{path}: line {lineno}: non-finite value")
            if any(abs(v) > _FLOAT_MAX for v in row):
                raise LoadError(f"{path}: line {lineno}: value out of float32 range")
            rows.append(row)
    if d is None:
        raise LoadError(f"{path}: no points")
    return np.array(rows, dtype=np.float64).astype(FLOAT)


def _load_binary(path: Path) -> np.ndarray:
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise LoadError(f"{path}: truncated header at byte {len(blob)}, need {_HEADER.size}")
    magic, d, n = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise LoadError(f"{path}: bad magic at byte 0: {magic!r}")
    if d not in SUPPORTED_DIMS:
        raise LoadError(f"{path}: unsupported dimension {d} at byte 8")
    need = _HEADER.size + 4 * d * n
    if len(blob) < need:
        raise LoadError(f"{path}: truncated payload at byte {len(blob)}, expected {need} bytes")
    if len(blob) > need:
        raise LoadError(f"{path}: {len(blob) - need} trailing bytes after byte {need}")
    pts = np.frombuffer(blob, dtype="<f4", count=d * n, offset=_HEADER.size)
    _check_finite(pts, lambda k: f"{path}: byte {_HEADER.size + 4 * k}")
    return pts.astype(FLOAT).reshape(n, d)


def load_points(path, fmt: str = "csv") -> np.ndarray:
    path = Path(path)
    if fmt == "csv":
        return _load_csv(path)
    if fmt == "binary":
        return _load_binary(path)
    raise ValueError(f"unknown format {fmt!r}")


def save_points(path, points, fmt: str = "csv") -> None:
    pts = np.asarray(points, dtype=FLOAT)
    if pts.ndim != 2:
        raise ValueError("points must be an (n, d) array")
    n, d = pts.shape
    if fmt == "csv":
        # repr of a float32 round-trips exactly
        with open(path, "w", encoding="utf-8") as fh:
            for row in pts:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
    elif fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, d, n))
            fh.write(pts.astype("<f4").tobytes())
    else:
        raise ValueError(f"unknown format {fmt!r}")


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Uniform:
    n: int
    d: int
    extent: float = 1.0


@dataclass(frozen=True)
class GaussianClusters:
    n: int
    d: int
    num_clusters: int
    sigma: float
    extent: float = 1.0
    seed: int = 0


def _validate(spec):
    if not isinstance(spec.n, (int, np.integer)) or spec.n < 0:
        raise SpecError(f"n must be a non-negative integer, got {spec.n!r}")
    if spec.d not in SUPPORTED_DIMS:
        raise SpecError(f"d must be 2 or 3, got {spec.d!r}")
    if not (math.isfinite(spec.extent) and spec.extent > 0):
        raise SpecError(f"extent must be positive, got {spec.extent!r}")
    if isinstance(spec, GaussianClusters):
        if spec.num_clusters < 1:
            raise SpecError("num_clusters must be >= 1")
        if not (math.isfinite(spec.sigma) and spec.sigma >= 0):
            raise SpecError("sigma must be >= 0")


def generate(spec, seed: int | None = None) -> np.ndarray:
    """Points in ``[0, extent]^d``; the same spec and seed give identical output.

    ``seed`` overrides the seed stored in a :class:`GaussianClusters` spec and
    seeds :class:`Uniform`, which defaults to 0.
    """
    if not isinstance(spec, (Uniform, GaussianClusters)):
        raise SpecError(f"unknown generator spec {spec!r}")
    _validate(spec)
    if seed is None:
        seed = getattr(spec, "seed", 0)
    rng = np.random.default_rng(seed)
    if isinstance(spec, Uniform):
        return (rng.random((spec.n, spec.d)) * spec.extent).astype(FLOAT)
    centers = rng.random((spec.num_clusters, spec.d)) * spec.extent
    which = np.arange(spec.n) % spec.num_clusters
    pts = centers[which] + rng.normal(0.0, spec.sigma, (spec.n, spec.d))
    np.clip(pts, 0.0, spec.extent, out=pts)
    return pts.astype(FLOAT)


def cluster_centers(spec: GaussianClusters, seed: int | None = None) -> np.ndarray:
    """The centers :func:`generate` draws for ``spec``; cluster ``c`` owns points ``c, c+k, ...``."""
    _validate(spec)
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    return rng.random((spec.num_clusters, spec.d)) * spec.extent


_KINDS = {
    "uniform": (Uniform, {"n": int, "d": int, "extent": float}),
    "gaussian": (
        GaussianClusters,
        {"n": int, "d": int, "k": int, "sigma": float, "extent": float, "seed": int},
    ),
}


def parse_spec(text: str):
    """Parse ``uniform:n=1000,d=3[,extent=1]`` or ``gaussian:n=..,d=..,k=..,sigma=..[,extent=..][,seed=..]``."""
    kind, _, rest = text.partition(":")
    if kind not in _KINDS:
        raise SpecError(f"unknown generator {kind!r}; expected one of {sorted(_KINDS)}")
    cls, fields = _KINDS[kind]
    kwargs = {}
    for item in filter(None, rest.split(",")):
        key, eq, value = item.partition("=")
        key = key.strip()
        if not eq or key not in fields:
            raise SpecError(f"bad generator field {item!r} for {kind}")
        try:
            kwargs["num_clusters" if key == "k" else key] = fields[key](value)
        except ValueError:
            raise SpecError(f"bad value for {key}: {value!r}") from None
    try:
        spec = cls(**kwargs)
    except TypeError as exc:
        raise SpecError(f"incomplete {kind} spec: {exc}") from None
    _validate(spec)
    return spec
