"""Density-based clustering of grid cells.

Points are integer cell index vectors.  Distances on the lattice are
integers (Chebyshev) or square roots of integers (Euclidean), so the
neighbourhood test is done on exact integer quantities:

* chebyshev: ``max |a - b| <= floor(r)``
* euclidean: ``sum (a - b)^2 <= floor(r^2 + 1e-9)``
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .regions import ceil_fraction

NOISE = -1


@dataclass(frozen=True, eq=False)
class ClusterResult:
    """Cluster labels for points in canonical (lexicographic) order.

    ``labels[i]`` is in ``1..n_clusters`` or :data:`NOISE`.
    """

    points: np.ndarray
    labels: np.ndarray
    core: np.ndarray
    n_clusters: int

    def label_of(self) -> dict[tuple, int]:
        return {tuple(p): int(l) for p, l in zip(self.points.tolist(), self.labels.tolist())}

    def core_points(self) -> set[tuple]:
        return {tuple(p) for p in self.points[self.core].tolist()}

    def members(self, cluster_id: int) -> np.ndarray:
        return self.points[self.labels == cluster_id]


def min_samples(tau_rep: float, n_interesting: int) -> int:
    """Smallest cluster size meeting the representation threshold."""
    if n_interesting < 0:
        raise ValueError("region count must be non-negative")
    return max(1, ceil_fraction(tau_rep, n_interesting))


def packing_radius(min_s: int, d: int, metric: str = "chebyshev", override: float | None = None) -> float:
    """Radius of the smallest lattice ball that could hold ``min_s`` cells if densely packed.

    For Chebyshev distance that is the least integer ``r >= 1`` with
    ``(2r + 1)^d >= min_s``; the Euclidean radius circumscribes that cube,
    ``r * sqrt(d)``.
    """
    if override is not None:
        return float(override)
    if min_s < 1 or d < 1:
        raise ValueError("min_s and d must be positive")
    r = 1
    while (2 * r + 1) ** d < min_s:
        r += 1
    if metric == "chebyshev":
        return float(r)
    if metric == "euclidean":
        return r * math.sqrt(d)
    raise ValueError(f"unknown metric {metric!r}")


def radius_threshold(radius: float, metric: str) -> int:
    """Integer neighbourhood threshold on the lattice for a real radius."""
    if metric == "chebyshev":
        return int(math.floor(radius + 1e-9))
    if metric == "euclidean":
        return int(math.floor(radius * radius + 1e-9))
    raise ValueError(f"unknown metric {metric!r}")


def canonical_order(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.int64)
    if len(points) == 0:
        return np.zeros(0, dtype=np.int64)
    return np.lexsort(points.T[::-1])


def neighbourhoods(points: np.ndarray, radius: float, metric: str) -> list[np.ndarray]:
    """Sorted neighbour indices (self included) for each point."""
    n = len(points)
    if n == 0:
        return []
    threshold = radius_threshold(radius, metric)
    tree = cKDTree(points.astype(np.float64))
    if metric == "chebyshev":
        found = tree.query_ball_point(points, threshold + 0.5, p=np.inf)
    else:
        found = tree.query_ball_point(points, math.sqrt(threshold) + 0.5, p=2)
    out = []
    for i, cand in enumerate(found):
        cand = np.asarray(cand, dtype=np.int64)
        diff = np.abs(points[cand] - points[i])
        if metric == "chebyshev":
            ok = diff.max(axis=1) <= threshold
        else:
            ok = (diff * diff).sum(axis=1) <= threshold
        out.append(np.sort(cand[ok]))
    return out


def dbscan(points: Sequence[Sequence[int]], radius: float, min_s: int, metric: str = "chebyshev") -> ClusterResult:
    """DBSCAN over distinct lattice points.

    A core point has at least ``min_s`` points (itself included) within
    ``radius``.  Points are visited in lexicographic order; each unlabelled
    core point seeds a new cluster that grows breadth-first through core
    points.  A border point joins the first cluster that reaches it.
    """
    if min_s < 1:
        raise ValueError("min_s must be at least 1")
    if radius <= 0:
        raise ValueError("radius must be positive")
    raw = np.asarray(points, dtype=np.int64)
    if raw.size == 0:
        empty = np.zeros((0, raw.shape[1] if raw.ndim == 2 else 0), dtype=np.int64)
        return ClusterResult(empty, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=bool), 0)
    pts = raw[canonical_order(raw)]
    if len(np.unique(pts, axis=0)) != len(pts):
        raise ValueError("points must be distinct")
    nbrs = neighbourhoods(pts, radius, metric)
    core = np.array([len(nb) >= min_s for nb in nbrs], dtype=bool)
    labels = np.zeros(len(pts), dtype=np.int64)
    cluster = 0
    for seed in range(len(pts)):
        if labels[seed] or not core[seed]:
            continue
        cluster += 1
        labels[seed] = cluster
        queue = deque([seed])
        while queue:
            i = queue.popleft()
            for j in nbrs[i]:
                if labels[j]:
                    continue
                labels[j] = cluster
                if core[j]:
                    queue.append(j)
    labels[labels == 0] = NOISE
    pts.setflags(write=False)
    return ClusterResult(pts, labels, core, cluster)
