"""Curriculum person clustering over embedding vectors.

Clusters unlabeled embeddings with DBSCAN, trains a small encoder against
cluster prototypes with a temperature-scaled contrastive loss, and relaxes
the clustering radius whenever the clusters look confidently tight, so the
partition walks from outfit granularity toward identity granularity.
"""

from .bank import ClusterBank, init_bank
from .curriculum import (
    CurriculumRecord,
    CurriculumState,
    center_similarity,
    relaxing_index,
    scheduler_delta,
    update_psi,
    write_ri_history,
)
from .dbscan import NOISE, ClusterParams, PseudoLabeling, dbscan, relabel_compact
from .encoder import EncoderParams, contrastive_loss, encoder_forward, loss_gradient
from .evaluation import (
    PROTOCOLS,
    ClusterQuality,
    RetrievalResult,
    clustering_quality,
    evaluate_retrieval,
)
from .store import (
    FeatureMatrix,
    FormatError,
    SampleMeta,
    l2_normalize,
    load_embeddings,
    pairwise_distances,
    save_embeddings,
)
from .synth import SynthConfig, generate, split_query_gallery
from .trainer import EpochStats, RunResult, TrainConfig, run_baseline, run_cpc

__version__ = "0.1.0"

__all__ = [
    "NOISE",
    "PROTOCOLS",
    "ClusterBank",
    "ClusterParams",
    "ClusterQuality",
    "CurriculumRecord",
    "CurriculumState",
    "EncoderParams",
    "EpochStats",
    "FeatureMatrix",
    "FormatError",
    "PseudoLabeling",
    "RetrievalResult",
    "RunResult",
    "SampleMeta",
    "SynthConfig",
    "TrainConfig",
    "center_similarity",
    "clustering_quality",
    "contrastive_loss",
    "dbscan",
    "encoder_forward",
    "evaluate_retrieval",
    "generate",
    "init_bank",
    "l2_normalize",
    "load_embeddings",
    "loss_gradient",
    "pairwise_distances",
    "relabel_compact",
    "relaxing_index",
    "run_baseline",
    "run_cpc",
    "save_embeddings",
    "scheduler_delta",
    "split_query_gallery",
    "update_psi",
    "write_ri_history",
    "__version__",
]
