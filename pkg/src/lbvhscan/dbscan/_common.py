from __future__ import annotations

import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from ..geometry import FLOAT, as_points
from ..unionfind import DisjointSets

NOISE = -1
PHASES = ("build", "core", "merge", "finalize")


@dataclass(frozen=True)
class DbscanParams:
    eps: float
    min_pts: int

    def __post_init__(self):
        if not (math.isfinite(self.eps) and self.eps > 0):
            raise ValueError(f"eps must be finite and > 0, got {self.eps}")
        if int(self.min_pts) != self.min_pts or self.min_pts < 2:
            raise ValueError(f"min_pts must be an integer >= 2, got {self.min_pts}")
        object.__setattr__(self, "min_pts", int(self.min_pts))

    @property
    def eps32(self) -> np.float32:
        return FLOAT(self.eps)


@dataclass
class DbscanOutput:
    labels: np.ndarray
    core_flags: np.ndarray
    timings: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def num_clusters(self) -> int:
        return int(np.unique(self.labels[self.labels != NOISE]).shape[0])

    @property
    def num_noise(self) -> int:
        return int(np.count_nonzero(self.labels == NOISE))

    @property
    def num_core(self) -> int:
        return int(np.count_nonzero(self.core_flags))


class Timer:
    def __init__(self):
        self.timings = {p: 0.0 for p in PHASES}

    @contextmanager
    def phase(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] += time.perf_counter() - t0


def prepare(points, params: DbscanParams) -> np.ndarray:
    if not isinstance(params, DbscanParams):
        raise TypeError("params must be DbscanParams")
    return as_points(points)


def empty_output(n: int = 0) -> DbscanOutput:
    return DbscanOutput(
        labels=np.full(n, NOISE, dtype=np.int64),
        core_flags=np.zeros(n, dtype=bool),
        timings={p: 0.0 for p in PHASES},
    )


def labels_from_parent(parent: np.ndarray, core_flags: np.ndarray, claimed=None) -> np.ndarray:
    sets = DisjointSets(0)
    sets.parent = parent
    return finalize_labels(sets, core_flags, claimed)


def finalize_labels(sets: DisjointSets, core_flags, claimed=None) -> np.ndarray:
    """Cluster id = smallest index in the set; non-core singletons are NOISE."""
    n = len(sets)
    roots = sets.representatives()
    smallest = np.full(n, n, dtype=np.int64)
    np.minimum.at(smallest, roots, np.arange(n, dtype=np.int64))
    labels = smallest[roots]
    lonely = np.bincount(roots, minlength=n)[roots] == 1
    noise = ~np.asarray(core_flags, dtype=bool) & lonely
    if claimed is not None:
        noise &= ~np.asarray(claimed, dtype=bool)
    labels[noise] = NOISE
    return labels
