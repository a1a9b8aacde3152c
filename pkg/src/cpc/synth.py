"""Synthetic clothes-change benchmark: nested identity -> outfit -> sample geometry.

Identity centers sit on the unit sphere with a minimum pairwise separation;
each outfit is a sub-center pushed a fixed offset away from its identity
center, and each sample is its outfit sub-center plus isotropic noise,
re-normalized.  With noise << offset << separation, small-radius clustering
finds outfits and relaxed clustering finds identities, which is exactly the
regime the curriculum is meant to traverse.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .rng import stream
from .store import FeatureMatrix, SampleMeta

logger = logging.getLogger(__name__)

_MAX_REJECTS = 1000  # per identity center


@dataclass(frozen=True)
class SynthConfig:
    num_identities: int = 20
    clothes_per_identity: int = 3
    samples_per_clothes: int = 25
    dim: int = 16
    identity_separation: float = 1.2
    clothes_offset: float = 0.5
    noise_sigma: float = 0.05
    cameras: int = 4
    seed: int = 0
    # 0 means isotropic outfit offsets; k > 0 confines them to a shared
    # random k-dimensional subspace (appearance axes all outfits vary along,
    # which a trained encoder can learn to discount)
    clothes_subspace_dim: int = 6

    def __post_init__(self):
        if min(self.num_identities, self.clothes_per_identity, self.samples_per_clothes) < 1:
            raise ValueError("counts must be >= 1")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.cameras < 1:
            raise ValueError("cameras must be >= 1")
        if not 0 <= self.noise_sigma < self.clothes_offset < self.identity_separation:
            raise ValueError(
                "need noise_sigma < clothes_offset < identity_separation "
                f"(got {self.noise_sigma}, {self.clothes_offset}, {self.identity_separation})"
            )
        if not 0 <= self.clothes_subspace_dim <= self.dim:
            raise ValueError("clothes_subspace_dim must be in [0, dim]")

    @property
    def total_samples(self) -> int:
        return self.num_identities * self.clothes_per_identity * self.samples_per_clothes


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _identity_centers(config: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    centers = np.empty((config.num_identities, config.dim))
    for i in range(config.num_identities):
        for _ in range(_MAX_REJECTS):
            c = _unit(rng.standard_normal(config.dim))
            if i == 0 or np.linalg.norm(centers[:i] - c, axis=1).min() >= config.identity_separation:
                centers[i] = c
                break
        else:
            raise ValueError(
                f"could not place {config.num_identities} centers at separation "
                f"{config.identity_separation} in dimension {config.dim}"
            )
    return centers


def generate(config: SynthConfig) -> tuple[FeatureMatrix, SampleMeta]:
    """Draw the benchmark dataset; fully determined by the config seed.

    Cameras are assigned round-robin over samples and timestamps increase
    globally, so every outfit is seen by every camera at distinct times.
    """
    rng = stream(config.seed, "synth")
    centers = _identity_centers(config, rng)
    k = config.clothes_subspace_dim
    basis = None
    if 0 < k < config.dim:
        q, r = np.linalg.qr(rng.standard_normal((config.dim, k)))
        basis = q * np.sign(np.diagonal(r))
    n = config.total_samples
    data = np.empty((n, config.dim))
    identity = np.empty(n, dtype=np.int64)
    clothes = np.empty(n, dtype=np.int64)
    i = 0
    for ident in range(config.num_identities):
        for c in range(config.clothes_per_identity):
            direction = _unit(rng.standard_normal(k)) if basis is not None else None
            offset = basis @ direction if basis is not None else _unit(rng.standard_normal(config.dim))
            sub = _unit(centers[ident] + config.clothes_offset * offset)
            for _ in range(config.samples_per_clothes):
                data[i] = _unit(sub + rng.normal(0.0, config.noise_sigma, config.dim))
                identity[i] = ident
                clothes[i] = ident * config.clothes_per_identity + c
                i += 1
    meta = SampleMeta(
        identity=identity,
        clothes=clothes,
        camera=np.arange(n, dtype=np.int64) % config.cameras,
        timestamp=np.arange(n, dtype=np.int64),
    )
    return FeatureMatrix(data), meta


def split_query_gallery(
    f: FeatureMatrix,
    meta: SampleMeta,
    ratio: float = 0.5,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Stratified query/gallery index split.

    Stratifies per (identity, clothes) group so both sides keep every outfit
    and camera mix; guarantees each multi-sample identity appears on both
    sides.  Identities with a single sample go to the gallery (with a
    warning).  Returns (query_indices, gallery_indices), each sorted.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    if f.n != meta.n:
        raise ValueError("feature/meta length mismatch")
    rng = stream(seed, "split")
    query: list[int] = []
    gallery: list[int] = []
    for ident in np.unique(meta.identity):
        idx = np.flatnonzero(meta.identity == ident)
        if idx.size == 1:
            logger.warning("identity %d has a single sample; gallery only", int(ident))
            gallery.append(int(idx[0]))
            continue
        id_query: list[int] = []
        id_gallery: list[int] = []
        for cloth in np.unique(meta.clothes[idx]):
            group = rng.permutation(idx[meta.clothes[idx] == cloth])
            k = int(round(ratio * group.size))
            id_query.extend(int(v) for v in group[:k])
            id_gallery.extend(int(v) for v in group[k:])
        if not id_query:
            id_query.append(id_gallery.pop(0))
        if not id_gallery:
            id_gallery.append(id_query.pop(0))
        query.extend(id_query)
        gallery.extend(id_gallery)
    return np.asarray(sorted(query), dtype=np.int64), np.asarray(sorted(gallery), dtype=np.int64)
