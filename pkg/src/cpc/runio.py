"""Run-directory artifacts: config snapshots, manifests, CSV/JSON outputs.

Every artifact is written deterministically (floats via repr, sorted JSON
keys), so two runs with the same manifest produce byte-identical files.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path
from typing import Any

import numpy as np

from .dbscan import PseudoLabeling
from .encoder import EncoderParams
from .evaluation import ClusterQuality, RetrievalResult
from .store import FeatureMatrix, load_embeddings, save_embeddings
from .trainer import EpochStats


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_config_snapshot(config: Any, path: str | Path, extra: dict[str, Any] | None = None) -> None:
    """Flat ``key = value`` snapshot of a (dataclass) config, loadable back as a config file."""
    items = dict(dataclasses.asdict(config)) if dataclasses.is_dataclass(config) else dict(config)
    if extra:
        items.update(extra)
    lines = [f"{k} = {_fmt(v)}" for k, v in sorted(items.items())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_config_file(path: str | Path) -> dict[str, str]:
    """Parse flat ``key = value`` text; '#' starts a comment, blank lines skipped."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def coerce_config_value(raw: str, target_type: type) -> Any:
    if target_type is bool:
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return target_type(raw)


def write_manifest(path: str | Path, manifest: dict[str, Any]) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def write_labels_csv(labeling: PseudoLabeling, path: str | Path) -> None:
    """Export ``index,label`` rows; noise is -1."""
    lines = ["index,label"]
    lines.extend(f"{i},{int(lab)}" for i, lab in enumerate(labeling.labels))
    Path(path).write_text("\n".join(lines) + "\n")


def write_train_log(log: list[EpochStats], path: str | Path) -> None:
    lines = ["epoch,eps_used,ri,delta,clusters,clustered,mean_loss"]
    for s in log:
        lines.append(
            f"{s.epoch},{float(s.eps_used)!r},{float(s.ri)!r},{s.delta},"
            f"{s.num_clusters},{s.num_clustered},{float(s.mean_loss)!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def metrics_payload(
    retrieval: RetrievalResult | None = None,
    quality: ClusterQuality | None = None,
) -> dict[str, Any]:
    payload: dict[str, Any] = {}
    if retrieval is not None:
        payload.update(
            cmc=[float(v) for v in retrieval.cmc],
            map=retrieval.mean_ap,
            num_valid_queries=retrieval.num_valid_queries,
            skipped_queries=retrieval.skipped_queries,
        )
    if quality is not None:
        payload.update(
            pairwise_f1=quality.pairwise_f1,
            ari=quality.ari,
            cluster_count=quality.cluster_count,
        )
    return payload


def write_metrics(path: str | Path, **kwargs: Any) -> None:
    Path(path).write_text(json.dumps(metrics_payload(**kwargs), indent=2, sort_keys=True) + "\n")


def save_encoder(params: EncoderParams, path: str | Path) -> None:
    """Store the affine map in the embedding container: W rows, then the bias row."""
    save_embeddings(path, FeatureMatrix(np.vstack([params.weight, params.bias])))


def load_encoder(path: str | Path) -> EncoderParams:
    matrix, _ = load_embeddings(path)
    if matrix.n < 2:
        raise ValueError(f"{path}: encoder file needs at least one weight row plus a bias row")
    return EncoderParams(weight=matrix.data[:-1].copy(), bias=matrix.data[-1].copy())
