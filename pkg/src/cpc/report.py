"""Figure rendering for run and evaluation reports.

Every figure lands next to the delimited output it visualizes, so a run
directory is self-describing: CSV for machines, PNG for people.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .trainer import EpochStats


def save_curriculum_figure(log: list[EpochStats], threshold: float, path: str | Path) -> Path:
    """Relaxing-index trace over the gate threshold, with the radius trajectory below."""
    epochs = [s.epoch for s in log]
    ri = [s.ri for s in log]
    eps = [s.eps_used for s in log]
    relaxed = [s.epoch for s in log if s.delta == 1]
    fig, (ax_ri, ax_eps) = plt.subplots(2, 1, sharex=True, figsize=(7, 5.5))
    ax_ri.plot(epochs, ri, marker=".", color="tab:blue", label="relaxing index")
    ax_ri.axhline(threshold, color="tab:red", linestyle="--", linewidth=1, label="threshold")
    if relaxed:
        ax_ri.plot(
            relaxed,
            [s.ri for s in log if s.delta == 1],
            linestyle="none", marker="o", markersize=3.5,
            color="tab:green", label="radius relaxed",
        )
    ax_ri.set_ylabel("relaxing index")
    ax_ri.legend(loc="best", fontsize=8)
    ax_ri.grid(alpha=0.3)
    ax_eps.step(epochs, eps, where="post", color="tab:purple")
    ax_eps.set_xlabel("epoch")
    ax_eps.set_ylabel("clustering radius")
    ax_eps.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_cluster_figure(log: list[EpochStats], path: str | Path) -> Path:
    """Cluster count and clustered-sample count per epoch."""
    epochs = [s.epoch for s in log]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(epochs, [s.num_clusters for s in log], marker=".", color="tab:blue")
    ax.set_xlabel("epoch")
    ax.set_ylabel("clusters", color="tab:blue")
    ax.grid(alpha=0.3)
    twin = ax.twinx()
    twin.plot(epochs, [s.num_clustered for s in log], marker=".", color="tab:orange")
    twin.set_ylabel("clustered samples", color="tab:orange")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_loss_figure(log: list[EpochStats], path: str | Path) -> Path:
    epochs = [s.epoch for s in log]
    losses = [s.mean_loss for s in log]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(epochs, losses, marker=".", color="tab:red")
    if all(not math.isnan(v) and v > 0 for v in losses):
        ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean training loss")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_cmc_figure(cmc: np.ndarray, path: str | Path) -> Path:
    ranks = np.arange(1, len(cmc) + 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ranks, cmc, marker="o", markersize=3.5, color="tab:blue")
    ax.set_xlabel("rank")
    ax.set_ylabel("matching rate")
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
