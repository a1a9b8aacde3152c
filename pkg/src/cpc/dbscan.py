"""Density-based clustering over a precomputed distance matrix.

Classical DBSCAN semantics with one pinned tie-break so runs are exactly
reproducible: a border point reachable from several clusters joins the
cluster of its lowest-index core neighbor.  Neighborhood counts include the
point itself, which shifts the effective ``min_pts`` by one relative to
implementations that exclude it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NOISE = -1


@dataclass(frozen=True)
class ClusterParams:
    """DBSCAN radius and density threshold; the radius is what the curriculum relaxes."""

    eps: float
    min_pts: int

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.min_pts < 1:
            raise ValueError(f"min_pts must be >= 1, got {self.min_pts}")


@dataclass(frozen=True)
class PseudoLabeling:
    """Per-sample cluster assignment: ids 0..C-1, or NOISE (-1).

    Cluster ids are contiguous and every id in range is used.
    """

    labels: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.labels, dtype=np.int64)
        if arr.ndim != 1:
            raise ValueError("labels must be 1-D")
        if arr.size and arr.min() < NOISE:
            raise ValueError("labels must be cluster ids >= 0 or NOISE (-1)")
        used = np.unique(arr[arr != NOISE])
        if used.size and not np.array_equal(used, np.arange(used.size)):
            raise ValueError("cluster ids must be contiguous 0..C-1")
        object.__setattr__(self, "labels", arr)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def num_clusters(self) -> int:
        mask = self.labels != NOISE
        return int(self.labels[mask].max()) + 1 if mask.any() else 0

    @property
    def num_clustered(self) -> int:
        return int(np.count_nonzero(self.labels != NOISE))

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.labels[self.labels != NOISE], minlength=self.num_clusters)


def _check_distance_matrix(dist: np.ndarray) -> np.ndarray:
    dist = np.asarray(dist, dtype=np.float64)
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise ValueError(f"distance matrix must be square, got {dist.shape}")
    if not np.all(np.isfinite(dist)):
        raise ValueError("distance matrix contains non-finite values")
    if np.any(dist < 0):
        raise ValueError("distance matrix contains negative entries")
    if np.any(np.diagonal(dist) != 0):
        raise ValueError("distance matrix diagonal must be zero")
    if not np.array_equal(dist, dist.T):
        raise ValueError("distance matrix must be symmetric")
    return dist


def dbscan(dist: np.ndarray, params: ClusterParams) -> PseudoLabeling:
    """Cluster points given their pairwise distances.

    A point is core iff it has >= min_pts neighbors within eps (itself
    included).  Clusters are the connected components of the core points
    under the <= eps relation, numbered by ascending first core index;
    non-core points within eps of a core join the cluster of their
    lowest-index core neighbor, everything else is NOISE.
    """
    dist = _check_distance_matrix(dist)
    n = dist.shape[0]
    within = dist <= params.eps
    core = within.sum(axis=1) >= params.min_pts
    labels = np.full(n, NOISE, dtype=np.int64)

    cluster = 0
    for seed in range(n):
        if not core[seed] or labels[seed] != NOISE:
            continue
        # breadth-first expansion over core-core edges
        labels[seed] = cluster
        frontier = [seed]
        while frontier:
            reach = np.zeros(n, dtype=bool)
            for p in frontier:
                reach |= within[p]
            fresh = reach & core & (labels == NOISE)
            idx = np.flatnonzero(fresh)
            labels[idx] = cluster
            frontier = idx.tolist()
        cluster += 1

    # border points: non-core, adopt lowest-index core neighbor's cluster
    for p in np.flatnonzero(~core):
        core_neighbors = np.flatnonzero(within[p] & core)
        if core_neighbors.size:
            labels[p] = labels[core_neighbors[0]]
    return PseudoLabeling(labels)


def relabel_compact(raw: np.ndarray) -> PseudoLabeling:
    """Remap arbitrary integer labels to contiguous ids, preserving the partition.

    Negative labels are treated as NOISE.  New ids follow first appearance.
    """
    raw = np.asarray(raw, dtype=np.int64)
    labels = np.full(raw.shape[0], NOISE, dtype=np.int64)
    mapping: dict[int, int] = {}
    for i, lab in enumerate(raw.tolist()):
        if lab < 0:
            continue
        labels[i] = mapping.setdefault(lab, len(mapping))
    return PseudoLabeling(labels)
