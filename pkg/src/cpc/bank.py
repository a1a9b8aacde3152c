"""Cluster-center memory bank: per-cluster prototypes with EMA updates.

Centers start as cluster means and drift toward the samples assigned to
them; they double as the classifier weights of the contrastive loss.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dbscan import NOISE, PseudoLabeling
from .store import FeatureMatrix, save_embeddings


@dataclass
class ClusterBank:
    """C x D prototype matrix, one row per cluster.

    When ``normalize`` is on every row is kept at unit norm after updates,
    so inner-product logits stay scale-stable.
    """

    centers: np.ndarray
    alpha: float
    normalize: bool = True

    def __post_init__(self):
        self.centers = np.ascontiguousarray(self.centers, dtype=np.float64)
        if self.centers.ndim != 2:
            raise ValueError("centers must be a C x D matrix")
        if not np.all(np.isfinite(self.centers)):
            raise ValueError("centers contain non-finite values")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")

    @property
    def num_clusters(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def ema_update(self, cluster: int, f: np.ndarray) -> None:
        """Blend a feature row into its center: m <- alpha*m + (1-alpha)*f."""
        if not 0 <= cluster < self.num_clusters:
            raise IndexError(f"cluster {cluster} out of range [0, {self.num_clusters})")
        f = np.asarray(f, dtype=np.float64).reshape(-1)
        if f.shape[0] != self.dim:
            raise ValueError(f"feature dimension {f.shape[0]} != bank dimension {self.dim}")
        m = self.alpha * self.centers[cluster] + (1.0 - self.alpha) * f
        if self.normalize:
            norm = np.linalg.norm(m)
            if norm == 0.0:
                raise ValueError(f"EMA drove center {cluster} to zero norm")
            m = m / norm
        self.centers[cluster] = m

    def logits(self, f: np.ndarray, tau: float) -> np.ndarray:
        """Temperature-scaled inner products of a feature row against all centers."""
        if not tau > 0:
            raise ValueError(f"tau must be positive, got {tau}")
        f = np.asarray(f, dtype=np.float64).reshape(-1)
        if f.shape[0] != self.dim:
            raise ValueError(f"feature dimension {f.shape[0]} != bank dimension {self.dim}")
        return self.centers @ f / tau

    def save(self, path: str | Path) -> None:
        """Snapshot the centers in the embedding binary format (no meta block)."""
        save_embeddings(path, FeatureMatrix(self.centers.copy()))


def init_bank(
    f: FeatureMatrix,
    labeling: PseudoLabeling,
    alpha: float,
    normalize: bool = True,
) -> ClusterBank:
    """Build a bank from cluster means; noise rows are excluded.

    Raises ValueError when the labeling contains no clusters at all.
    """
    c = labeling.num_clusters
    if c == 0:
        raise ValueError("nothing clustered: cannot initialize bank")
    if labeling.n != f.n:
        raise ValueError(f"labeling length {labeling.n} != sample count {f.n}")
    centers = np.zeros((c, f.d), dtype=np.float64)
    counts = np.zeros(c, dtype=np.int64)
    mask = labeling.labels != NOISE
    np.add.at(centers, labeling.labels[mask], f.data[mask])
    np.add.at(counts, labeling.labels[mask], 1)
    centers /= counts[:, None]
    if normalize:
        norms = np.linalg.norm(centers, axis=1)
        if np.any(norms == 0.0):
            bad = int(np.flatnonzero(norms == 0.0)[0])
            raise ValueError(f"cluster {bad} has a zero-norm mean; cannot normalize")
        centers /= norms[:, None]
    return ClusterBank(centers=centers, alpha=alpha, normalize=normalize)
