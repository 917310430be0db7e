"""Equivalence check between two DBSCAN results on the same input.

Core and noise sets must match exactly and the core points must be
partitioned the same way. Border points may legitimately end up in different
clusters, so each border label is only required to name a cluster that has a
core point within eps.
"""

from __future__ import annotations

import numpy as np

from ..geometry import as_points
from ._common import NOISE, DbscanOutput, DbscanParams


def _same_partition(a: np.ndarray, b: np.ndarray) -> bool:
    if a.shape != b.shape:
        return False
    if a.size == 0:
        return True
    pairs = np.unique(np.stack([a, b], axis=1), axis=0)
    return pairs.shape[0] == np.unique(a).shape[0] == np.unique(b).shape[0]


def _core_neighbors(pts, i, core_idx, eps):
    diff = pts[core_idx].astype(np.float64) - pts[i]
    dist = np.sqrt((diff * diff).sum(axis=1)).astype(np.float32)
    return core_idx[dist <= eps]


def check_equivalence(points, params: DbscanParams, result: DbscanOutput, reference: DbscanOutput) -> list[str]:
    """Return a list of violations (empty when ``result`` is acceptable)."""
    pts = as_points(points)
    eps = params.eps32
    problems = []
    if result.labels.shape != reference.labels.shape:
        return [f"label count {result.labels.shape[0]} != {reference.labels.shape[0]}"]

    core = np.asarray(result.core_flags, dtype=bool)
    if not np.array_equal(core, np.asarray(reference.core_flags, dtype=bool)):
        bad = np.flatnonzero(core != reference.core_flags)
        problems.append(f"core sets differ at {bad.shape[0]} points, first {bad[:5].tolist()}")
    noise = result.labels == NOISE
    ref_noise = reference.labels == NOISE
    if not np.array_equal(noise, ref_noise):
        bad = np.flatnonzero(noise != ref_noise)
        problems.append(f"noise sets differ at {bad.shape[0]} points, first {bad[:5].tolist()}")
    if np.any(core & noise):
        problems.append("core point labeled as noise")

    ref_core = np.asarray(reference.core_flags, dtype=bool)
    both = core & ref_core
    if not _same_partition(result.labels[both], reference.labels[both]):
        problems.append("core points are partitioned differently")

    core_idx = np.flatnonzero(core)
    for i in np.flatnonzero(~core):
        near = _core_neighbors(pts, i, core_idx, eps)
        if noise[i]:
            if near.size:
                problems.append(f"noise point {i} has core neighbor {near[0]}")
        elif not np.any(result.labels[near] == result.labels[i]):
            problems.append(f"border point {i} has no core neighbor in its cluster {result.labels[i]}")
        if len(problems) > 20:
            break
    return problems
