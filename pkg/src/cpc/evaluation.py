"""Retrieval metrics (CMC, mAP) and clustering quality against ground truth.

Two ranking protocols:

* ``standard`` - the whole gallery is ranked; entries that are the query's
  own capture (same identity, camera, and timestamp) are dropped; every
  other same-identity entry is a positive.
* ``long_term`` - per query, only gallery entries from the query's camera
  with a different timestamp and different clothes id are ranked at all;
  among those, same-identity entries are the positives.  This rewards
  matching a person across outfit changes and never rewards re-finding the
  same outfit.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.metrics import adjusted_rand_score

from .dbscan import NOISE, PseudoLabeling
from .store import FeatureMatrix, SampleMeta

PROTOCOLS = ("standard", "long_term")


@dataclass(frozen=True)
class RetrievalResult:
    """CMC curve (rank 1..K), mean average precision, and query accounting."""

    cmc: np.ndarray
    mean_ap: float
    num_valid_queries: int
    skipped_queries: int


@dataclass(frozen=True)
class ClusterQuality:
    pairwise_precision: float
    pairwise_recall: float
    pairwise_f1: float
    ari: float
    cluster_count: int


def _query_outcome(
    sims: np.ndarray,
    keep: np.ndarray,
    positive: np.ndarray,
    max_rank: int,
) -> tuple[np.ndarray, float] | None:
    """CMC hit vector and AP for one query, or None when it has no positives."""
    if not positive.any():
        return None
    order = np.argsort(-sims[keep], kind="stable")  # ties fall back to gallery index
    hits = positive[keep][order]
    ranks = np.flatnonzero(hits) + 1
    cmc = np.zeros(max_rank)
    first = ranks[0]
    if first <= max_rank:
        cmc[first - 1 :] = 1.0
    ap = float(np.mean(np.arange(1, ranks.size + 1) / ranks))
    return cmc, ap


def evaluate_retrieval(
    query_f: FeatureMatrix,
    query_meta: SampleMeta,
    gallery_f: FeatureMatrix,
    gallery_meta: SampleMeta,
    protocol: str = "long_term",
    max_rank: int = 20,
    workers: int = 1,
) -> RetrievalResult:
    """Rank the gallery for every query by cosine similarity and score it.

    Queries with no valid positive are excluded from both averages and
    counted in ``skipped_queries``.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"protocol must be one of {PROTOCOLS}")
    if query_f.d != gallery_f.d:
        raise ValueError(f"query dim {query_f.d} != gallery dim {gallery_f.d}")
    if query_meta.n != query_f.n or gallery_meta.n != gallery_f.n:
        raise ValueError("metadata length does not match feature count")
    qn = query_f.data / np.linalg.norm(query_f.data, axis=1, keepdims=True)
    gn = gallery_f.data / np.linalg.norm(gallery_f.data, axis=1, keepdims=True)
    if not (np.all(np.isfinite(qn)) and np.all(np.isfinite(gn))):
        raise ValueError("zero-norm feature row: cosine similarity undefined")
    all_sims = qn @ gn.T

    def one(i: int):
        same_id = gallery_meta.identity == query_meta.identity[i]
        if protocol == "long_term":
            keep = (
                (gallery_meta.camera == query_meta.camera[i])
                & (gallery_meta.timestamp != query_meta.timestamp[i])
                & (gallery_meta.clothes != query_meta.clothes[i])
            )
        else:
            self_capture = (
                same_id
                & (gallery_meta.camera == query_meta.camera[i])
                & (gallery_meta.timestamp == query_meta.timestamp[i])
            )
            keep = ~self_capture
        return _query_outcome(all_sims[i], keep, keep & same_id, max_rank)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, range(query_f.n)))
    else:
        outcomes = [one(i) for i in range(query_f.n)]

    kept = [o for o in outcomes if o is not None]
    skipped = len(outcomes) - len(kept)
    if not kept:
        return RetrievalResult(np.zeros(max_rank), 0.0, 0, skipped)
    cmc = np.mean([c for c, _ in kept], axis=0)
    mean_ap = float(np.mean([a for _, a in kept]))
    return RetrievalResult(cmc, mean_ap, len(kept), skipped)


def _noise_as_singletons(labeling: PseudoLabeling) -> np.ndarray:
    labels = labeling.labels.copy()
    noise = np.flatnonzero(labels == NOISE)
    labels[noise] = labeling.num_clusters + np.arange(noise.size)
    return labels


def clustering_quality(labeling: PseudoLabeling, meta: SampleMeta) -> ClusterQuality:
    """Pairwise precision/recall/F1 over co-membership and ARI vs. identities.

    Noise samples count as singleton clusters.  ``cluster_count`` counts the
    real clusters only, not the noise singletons.
    """
    if labeling.n != meta.n:
        raise ValueError(f"labeling length {labeling.n} != meta length {meta.n}")
    pred = _noise_as_singletons(labeling)
    truth = meta.identity
    iu, ju = np.triu_indices(labeling.n, k=1)
    same_pred = pred[iu] == pred[ju]
    same_true = truth[iu] == truth[ju]
    tp = int(np.count_nonzero(same_pred & same_true))
    pred_pairs = int(np.count_nonzero(same_pred))
    true_pairs = int(np.count_nonzero(same_true))
    precision = tp / pred_pairs if pred_pairs else 1.0
    recall = tp / true_pairs if true_pairs else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    ari = float(adjusted_rand_score(truth, pred))
    return ClusterQuality(precision, recall, f1, ari, labeling.num_clusters)
