"""Command-line entry point: synth, run, eval, and cluster subcommands.

Config precedence is CLI flag > config file > built-in defaults; every
command writes a manifest with the resolved config and input digests so a
run can be reproduced from the manifest alone.  Exit codes: 0 success,
1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

from . import __version__
from .dbscan import ClusterParams, dbscan
from .encoder import encoder_forward
from .evaluation import PROTOCOLS, clustering_quality, evaluate_retrieval
from .runio import (
    coerce_config_value,
    file_digest,
    load_encoder,
    read_config_file,
    save_encoder,
    write_config_snapshot,
    write_labels_csv,
    write_manifest,
    write_metrics,
    write_train_log,
)
from .store import FeatureMatrix, l2_normalize, load_embeddings, pairwise_distances, save_embeddings
from .synth import SynthConfig, generate, split_query_gallery
from .trainer import TrainConfig, run_baseline, run_cpc
from .curriculum import write_ri_history

DATASET_FILENAME = "data.cpce"


def resolve_dataset(path: str | Path) -> Path:
    path = Path(path)
    if path.is_dir():
        path = path / DATASET_FILENAME
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    return path


def resolve_workers(flag_value: int | None) -> int:
    env = os.environ.get("CPC_THREADS")
    if env is not None:
        try:
            workers = int(env)
        except ValueError:
            raise ValueError(f"CPC_THREADS must be an integer, got {env!r}") from None
    else:
        workers = flag_value if flag_value is not None else 1
    if workers < 1:
        raise ValueError(f"worker count must be >= 1, got {workers}")
    return workers


def _train_flag_map() -> dict[str, str]:
    # CLI destination -> TrainConfig field
    return {
        "epochs": "epochs",
        "batch_size": "batch_size",
        "lr": "learning_rate",
        "tau": "tau",
        "alpha": "alpha",
        "threshold": "threshold",
        "step": "step",
        "eps0": "eps0",
        "min_pts": "min_pts",
        "feat_dim": "feat_dim",
        "seed": "seed",
        "optimizer": "optimizer",
        "ri_variant": "ri_variant",
    }


def build_train_config(args: argparse.Namespace) -> TrainConfig:
    values = dataclasses.asdict(TrainConfig())
    if args.config:
        field_types = {f.name: type(getattr(TrainConfig(), f.name)) for f in dataclasses.fields(TrainConfig)}
        for key, raw in read_config_file(args.config).items():
            if key not in field_types:
                raise ValueError(f"unknown config key {key!r} in {args.config}")
            values[key] = coerce_config_value(raw, field_types[key])
    for dest, field_name in _train_flag_map().items():
        flag_value = getattr(args, dest, None)
        if flag_value is not None:
            values[field_name] = flag_value
    if getattr(args, "no_normalize", False):
        values["normalize"] = False
    if getattr(args, "balanced", False):
        values["balanced_sampling"] = True
    return TrainConfig(**values)


def add_synth_parser(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("synth", help="generate a synthetic clothes-change dataset")
    p.add_argument("--ids", type=int, default=20, help="number of identities")
    p.add_argument("--clothes", type=int, default=3, help="outfits per identity")
    p.add_argument("--per", type=int, default=25, help="samples per outfit")
    p.add_argument("--dim", type=int, default=16, help="embedding dimension")
    p.add_argument("--separation", type=float, default=1.2, help="min identity center distance")
    p.add_argument("--offset", type=float, default=0.5, help="outfit sub-center offset")
    p.add_argument("--noise", type=float, default=0.05, help="per-sample noise sigma")
    p.add_argument("--subspace", type=int, default=6,
                   help="shared outfit-offset subspace dimension (0 = isotropic)")
    p.add_argument("--cameras", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")


def add_run_parser(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("run", help="train on a dataset and write a run directory")
    p.add_argument("--data", required=True, help="dataset file or directory")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--eps0", type=float)
    p.add_argument("--min-pts", dest="min_pts", type=int)
    p.add_argument("--feat-dim", dest="feat_dim", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--optimizer", choices=("sgd", "adam"))
    p.add_argument("--ri-variant", dest="ri_variant", choices=("pearson", "raw", "cosine"))
    p.add_argument("--balanced", action="store_true", help="pseudo-label-balanced batches")
    p.add_argument("--no-normalize", action="store_true", help="skip feature normalization")
    p.add_argument("--no-curriculum", action="store_true", help="freeze the radius (baseline)")
    p.add_argument("--protocol", choices=PROTOCOLS, default="long_term")
    p.add_argument("--ratio", type=float, default=0.5, help="query share of the eval split")
    p.add_argument("--max-rank", dest="max_rank", type=int, default=20)
    p.add_argument("--threads", type=int, help="eval worker threads (CPC_THREADS overrides)")
    p.add_argument("--no-plots", action="store_true", help="skip figure rendering")


def add_eval_parser(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("eval", help="evaluate a saved encoder on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--encoder", required=True, help="encoder.bin from a run directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--protocol", choices=PROTOCOLS, default="long_term")
    p.add_argument("--ratio", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0, help="split seed")
    p.add_argument("--max-rank", dest="max_rank", type=int, default=20)
    p.add_argument("--eps", type=float, help="also cluster at this radius and score it")
    p.add_argument("--min-pts", dest="min_pts", type=int, default=4)
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument("--threads", type=int)
    p.add_argument("--no-plots", action="store_true")


def add_cluster_parser(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("cluster", help="one-shot DBSCAN over an embedding file")
    p.add_argument("--data", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--min-pts", dest="min_pts", type=int, default=4)
    p.add_argument("--out", required=True, help="labels CSV path")
    p.add_argument("--no-normalize", action="store_true")


def cmd_synth(args: argparse.Namespace) -> int:
    config = SynthConfig(
        num_identities=args.ids,
        clothes_per_identity=args.clothes,
        samples_per_clothes=args.per,
        dim=args.dim,
        identity_separation=args.separation,
        clothes_offset=args.offset,
        noise_sigma=args.noise,
        clothes_subspace_dim=args.subspace,
        cameras=args.cameras,
        seed=args.seed,
    )
    features, meta = generate(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data_path = out / DATASET_FILENAME
    save_embeddings(data_path, features, meta)
    write_config_snapshot(config, out / "config.snapshot")
    write_manifest(
        out / "manifest.json",
        {
            "command": "synth",
            "tool": "cpc",
            "version": __version__,
            "seed": config.seed,
            "config": dataclasses.asdict(config),
            "outputs": {DATASET_FILENAME: file_digest(data_path)},
        },
    )
    print(f"wrote {data_path} ({features.n} samples, dim {features.d})")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    data_path = resolve_dataset(args.data)
    features, meta = load_embeddings(data_path)
    config = build_train_config(args)
    workers = resolve_workers(args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    runner = run_baseline if args.no_curriculum else run_cpc
    result = runner(features.data, config)

    write_config_snapshot(
        config, out / "config.snapshot",
        extra={"curriculum": not args.no_curriculum, "protocol": args.protocol, "ratio": args.ratio},
    )
    write_ri_history(result.curriculum.history, out / "ri_history.csv")
    write_train_log(result.log, out / "train_log.csv")
    for labeling, stats in zip(result.epoch_labelings, result.log):
        write_labels_csv(labeling, out / f"labels_epoch_{stats.epoch}.csv")
    save_encoder(result.encoder, out / "encoder.bin")

    metrics_written = False
    retrieval = quality = None
    if meta is not None and result.labeling is not None:
        final_feats = result.features(features.data, config.normalize)
        q_idx, g_idx = split_query_gallery(features, meta, ratio=args.ratio, seed=config.seed)
        retrieval = evaluate_retrieval(
            FeatureMatrix(final_feats.data[q_idx]), meta.take(q_idx),
            FeatureMatrix(final_feats.data[g_idx]), meta.take(g_idx),
            protocol=args.protocol, max_rank=args.max_rank, workers=workers,
        )
        quality = clustering_quality(result.labeling, meta)
        write_metrics(out / "metrics.json", retrieval=retrieval, quality=quality)
        metrics_written = True
    else:
        print("dataset has no metadata; skipping metrics.json", file=sys.stderr)

    if not args.no_plots:
        from . import report

        figures = out / "figures"
        figures.mkdir(exist_ok=True)
        report.save_curriculum_figure(result.log, config.threshold, figures / "curriculum.png")
        report.save_cluster_figure(result.log, figures / "clusters.png")
        report.save_loss_figure(result.log, figures / "loss.png")
        if retrieval is not None:
            report.save_cmc_figure(retrieval.cmc, figures / "cmc.png")

    write_manifest(
        out / "manifest.json",
        {
            "command": "run",
            "tool": "cpc",
            "version": __version__,
            "seed": config.seed,
            "config": dataclasses.asdict(config),
            "curriculum": not args.no_curriculum,
            "protocol": args.protocol,
            "ratio": args.ratio,
            "max_rank": args.max_rank,
            "threads": workers,
            "inputs": {"data": {"path": str(data_path), "sha256": file_digest(data_path)}},
        },
    )
    last = result.log[-1] if result.log else None
    if last is not None:
        print(
            f"finished {config.epochs} epochs: eps {config.eps0:.4g} -> {result.curriculum.eps:.4g}, "
            f"{last.num_clusters} clusters ({last.num_clustered}/{features.n} clustered)"
        )
    if metrics_written:
        print(f"metrics: map={retrieval.mean_ap:.4f} rank1={retrieval.cmc[0]:.4f} f1={quality.pairwise_f1:.4f}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    data_path = resolve_dataset(args.data)
    features, meta = load_embeddings(data_path)
    if meta is None:
        raise ValueError(f"{data_path}: evaluation needs a dataset with metadata")
    encoder_path = Path(args.encoder)
    if not encoder_path.exists():
        raise FileNotFoundError(f"encoder file not found: {encoder_path}")
    params = load_encoder(encoder_path)
    workers = resolve_workers(args.threads)
    normalize = not args.no_normalize
    encoded = FeatureMatrix(encoder_forward(params, features.data, normalize))
    q_idx, g_idx = split_query_gallery(features, meta, ratio=args.ratio, seed=args.seed)
    retrieval = evaluate_retrieval(
        FeatureMatrix(encoded.data[q_idx]), meta.take(q_idx),
        FeatureMatrix(encoded.data[g_idx]), meta.take(g_idx),
        protocol=args.protocol, max_rank=args.max_rank, workers=workers,
    )
    quality = None
    if args.eps is not None:
        labeling = dbscan(pairwise_distances(encoded), ClusterParams(args.eps, args.min_pts))
        quality = clustering_quality(labeling, meta)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics(out / "metrics.json", retrieval=retrieval, quality=quality)
    if not args.no_plots:
        from . import report

        report.save_cmc_figure(retrieval.cmc, out / "cmc.png")
    write_manifest(
        out / "manifest.json",
        {
            "command": "eval",
            "tool": "cpc",
            "version": __version__,
            "seed": args.seed,
            "protocol": args.protocol,
            "ratio": args.ratio,
            "max_rank": args.max_rank,
            "threads": workers,
            "normalize": normalize,
            "cluster_eps": args.eps,
            "cluster_min_pts": args.min_pts if args.eps is not None else None,
            "inputs": {
                "data": {"path": str(data_path), "sha256": file_digest(data_path)},
                "encoder": {"path": str(encoder_path), "sha256": file_digest(encoder_path)},
            },
        },
    )
    print(
        f"protocol={args.protocol}: map={retrieval.mean_ap:.4f} rank1={retrieval.cmc[0]:.4f} "
        f"valid={retrieval.num_valid_queries} skipped={retrieval.skipped_queries}"
    )
    return 0


def cmd_cluster(args: argparse.Namespace) -> int:
    data_path = resolve_dataset(args.data)
    features, _ = load_embeddings(data_path)
    if not args.no_normalize:
        features = l2_normalize(features)
    labeling = dbscan(pairwise_distances(features), ClusterParams(args.eps, args.min_pts))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_labels_csv(labeling, out)
    noise = labeling.n - labeling.num_clustered
    print(f"{labeling.num_clusters} clusters, {labeling.num_clustered} clustered, {noise} noise -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cpc",
        description="curriculum person clustering: train, cluster, and evaluate embedding sets",
    )
    parser.add_argument("--version", action="version", version=f"cpc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    add_synth_parser(sub)
    add_run_parser(sub)
    add_eval_parser(sub)
    add_cluster_parser(sub)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"synth": cmd_synth, "run": cmd_run, "eval": cmd_eval, "cluster": cmd_cluster}
    try:
        return handlers[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
