"""Confidence-gated relaxation of the clustering radius.

Each epoch gets a Relaxing Index: the mean correlation between every
clustered sample and its cluster center.  Tight clusters score high, and a
score above the threshold widens the DBSCAN radius by one fixed step, so
clustering proceeds from fine granularity (single outfit) toward coarse
(whole identity).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bank import ClusterBank
from .dbscan import NOISE, ClusterParams, PseudoLabeling
from .store import FeatureMatrix

RI_VARIANTS = ("pearson", "raw", "cosine")


@dataclass(frozen=True)
class CurriculumRecord:
    """One epoch of curriculum history; ``eps`` is the radius after the update."""

    epoch: int
    ri: float
    delta: int
    eps: float


@dataclass
class CurriculumState:
    """Current clustering radius plus the scheduler's knobs and history.

    The radius is kept in closed form, eps = eps0 + step * (number of
    relaxations), rather than accumulated in place: repeated addition drifts
    by an ulp per epoch and the trajectory is contractually exactly that sum.
    """

    eps: float
    min_pts: int
    threshold: float
    step: float
    history: list[CurriculumRecord] = field(default_factory=list)
    delta_sum: int = 0

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not self.step >= 0:
            raise ValueError(f"step must be non-negative, got {self.step}")
        self.eps0 = self.eps - self.step * self.delta_sum if self.delta_sum else self.eps

    @property
    def psi(self) -> ClusterParams:
        return ClusterParams(eps=self.eps, min_pts=self.min_pts)


def _rowwise_similarity(rows: np.ndarray, centers: np.ndarray, variant: str) -> np.ndarray:
    if variant == "cosine":
        rn = np.linalg.norm(rows, axis=1)
        cn = np.linalg.norm(centers, axis=1)
        if np.any(rn == 0.0) or np.any(cn == 0.0):
            raise ValueError("degenerate feature: zero-norm vector in cosine similarity")
        return np.einsum("ij,ij->i", rows, centers) / (rn * cn)
    if rows.shape[1] < 2:
        raise ValueError("degenerate feature: correlation needs dimension >= 2")
    fc = rows - rows.mean(axis=1, keepdims=True)
    mc = centers - centers.mean(axis=1, keepdims=True)
    ssf = np.einsum("ij,ij->i", fc, fc)
    ssm = np.einsum("ij,ij->i", mc, mc)
    if np.any(ssf == 0.0) or np.any(ssm == 0.0):
        raise ValueError("degenerate feature: zero-variance vector in correlation")
    num = np.einsum("ij,ij->i", fc, mc)
    if variant == "raw":
        # printed form: sums of squared deviations used without square roots
        return num / (ssf * ssm)
    return num / (np.sqrt(ssf) * np.sqrt(ssm))


def center_similarity(f: np.ndarray, m: np.ndarray, variant: str = "pearson") -> float:
    """Similarity between one sample and its cluster center.

    The default is the Pearson correlation of the two vectors across their
    coordinates, bounded in [-1, 1].  ``raw`` skips the square roots in the
    denominator (kept for fidelity experiments; unbounded), ``cosine`` drops
    the mean subtraction.
    """
    if variant not in RI_VARIANTS:
        raise ValueError(f"unknown similarity variant {variant!r}")
    f = np.asarray(f, dtype=np.float64).reshape(1, -1)
    m = np.asarray(m, dtype=np.float64).reshape(1, -1)
    if f.shape != m.shape:
        raise ValueError(f"shape mismatch: {f.shape[1]} vs {m.shape[1]}")
    return float(_rowwise_similarity(f, m, variant)[0])


def relaxing_index(
    f: FeatureMatrix,
    labeling: PseudoLabeling,
    bank: ClusterBank,
    variant: str = "pearson",
) -> float:
    """Mean center similarity over all clustered samples (noise excluded)."""
    if variant not in RI_VARIANTS:
        raise ValueError(f"unknown similarity variant {variant!r}")
    mask = labeling.labels != NOISE
    if not mask.any():
        raise ValueError("no clustered samples: relaxing index undefined")
    rows = f.data[mask]
    centers = bank.centers[labeling.labels[mask]]
    return float(_rowwise_similarity(rows, centers, variant).mean())


def scheduler_delta(ri: float, threshold: float) -> int:
    """Binary gate: 1 iff the index strictly exceeds the threshold."""
    return 1 if ri > threshold else 0


def update_psi(state: CurriculumState, delta: int, epoch: int, ri: float) -> CurriculumState:
    """Relax the radius by step*delta and append the epoch record."""
    if delta not in (0, 1):
        raise ValueError(f"delta must be 0 or 1, got {delta}")
    if state.history and epoch <= state.history[-1].epoch:
        raise ValueError(f"epoch {epoch} not after last recorded {state.history[-1].epoch}")
    state.delta_sum += delta
    state.eps = state.eps0 + state.step * state.delta_sum
    state.history.append(CurriculumRecord(epoch=epoch, ri=ri, delta=delta, eps=state.eps))
    return state


def write_ri_history(history: list[CurriculumRecord], path: str | Path) -> None:
    """Dump the curriculum trace as ``epoch,ri,delta,eps`` CSV."""
    lines = ["epoch,ri,delta,eps"]
    for rec in history:
        lines.append(f"{rec.epoch},{float(rec.ri)!r},{rec.delta},{float(rec.eps)!r}")
    Path(path).write_text("\n".join(lines) + "\n")
