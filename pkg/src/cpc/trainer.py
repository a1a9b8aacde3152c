"""The epoch loop: cluster, build the bank, train the encoder, relax the radius.

Each epoch re-clusters the current features, rebuilds the center bank from
cluster means, runs SGD over shuffled batches of the clustered samples
(noise is excluded from training), blends each sample into its center, then
lets the curriculum decide whether to widen the radius for the next epoch.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .bank import ClusterBank, init_bank
from .curriculum import (
    RI_VARIANTS,
    CurriculumState,
    relaxing_index,
    scheduler_delta,
    update_psi,
)
from .dbscan import NOISE, PseudoLabeling, dbscan
from .encoder import EncoderParams, batch_loss_and_grad, encoder_forward
from .rng import stream
from .store import FeatureMatrix, pairwise_distances

logger = logging.getLogger(__name__)

OPTIMIZERS = ("sgd", "adam")


@dataclass(frozen=True)
class TrainConfig:
    """All knobs of a run; defaults follow the reference hyperparameters.

    Desk-scale geometry: inputs d_in ~ 16-32, features 16, N in the hundreds
    to low thousands.
    """

    epochs: int = 50
    batch_size: int = 128
    learning_rate: float = 3.5e-4
    lr_decay: float = 0.1
    lr_decay_every: int = 20
    tau: float = 0.05
    alpha: float = 0.2
    threshold: float = 0.8
    step: float = 0.01
    eps0: float = 0.26
    min_pts: int = 4
    feat_dim: int = 16
    seed: int = 0
    normalize: bool = True
    ri_variant: str = "pearson"
    optimizer: str = "sgd"
    balanced_sampling: bool = False

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1 or self.min_pts < 1 or self.feat_dim < 1:
            raise ValueError("batch_size, min_pts and feat_dim must be >= 1")
        if not (self.learning_rate > 0 and self.tau > 0 and self.eps0 > 0 and self.step >= 0):
            raise ValueError("learning_rate, tau, eps0 must be > 0 and step >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.ri_variant not in RI_VARIANTS:
            raise ValueError(f"ri_variant must be one of {RI_VARIANTS}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")


@dataclass(frozen=True)
class EpochStats:
    """Per-epoch log row; ``eps_used`` is the radius the epoch clustered at."""

    epoch: int
    eps_used: float
    ri: float
    delta: int
    num_clusters: int
    num_clustered: int
    mean_loss: float


@dataclass
class RunResult:
    encoder: EncoderParams
    curriculum: CurriculumState
    labeling: PseudoLabeling | None
    log: list[EpochStats] = field(default_factory=list)
    epoch_labelings: list[PseudoLabeling] = field(default_factory=list)

    def features(self, raw: np.ndarray, normalize: bool = True) -> FeatureMatrix:
        return FeatureMatrix(encoder_forward(self.encoder, raw, normalize))


class _Adam:
    def __init__(self, shapes, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0

    def step(self, grads, lr):
        self.t += 1
        out = []
        for i, g in enumerate(grads):
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            mhat = self.m[i] / (1 - self.beta1**self.t)
            vhat = self.v[i] / (1 - self.beta2**self.t)
            out.append(lr * mhat / (np.sqrt(vhat) + self.eps))
        return out


def init_encoder(d_in: int, d_out: int, rng: np.random.Generator) -> EncoderParams:
    """Identity map when square, otherwise a seeded orthonormal projection.

    Starting near an isometry keeps the initial feature geometry equal to the
    input geometry, so the initial radius can be calibrated on raw data.
    """
    if d_in == d_out:
        return EncoderParams(np.eye(d_in), np.zeros(d_out))
    if d_in > d_out:
        q, r = np.linalg.qr(rng.standard_normal((d_in, d_out)))
        q *= np.sign(np.diagonal(r))
        return EncoderParams(q, np.zeros(d_out))
    q, r = np.linalg.qr(rng.standard_normal((d_out, d_in)))
    q *= np.sign(np.diagonal(r))
    return EncoderParams(q.T, np.zeros(d_out))


def _epoch_order(labeling: PseudoLabeling, rng: np.random.Generator, balanced: bool) -> np.ndarray:
    clustered = np.flatnonzero(labeling.labels != NOISE)
    if not balanced:
        return rng.permutation(clustered)
    # round-robin across clusters so every batch sees a spread of pseudo labels
    groups = [rng.permutation(clustered[labeling.labels[clustered] == c])
              for c in range(labeling.num_clusters)]
    order: list[int] = []
    pos = 0
    while any(pos < len(g) for g in groups):
        for g in groups:
            if pos < len(g):
                order.append(int(g[pos]))
        pos += 1
    return np.asarray(order, dtype=np.int64)


def _train_epoch(
    params: EncoderParams,
    raw: np.ndarray,
    labeling: PseudoLabeling,
    bank: ClusterBank,
    config: TrainConfig,
    lr: float,
    rng: np.random.Generator,
    adam: _Adam | None,
) -> float:
    order = _epoch_order(labeling, rng, config.balanced_sampling)
    total = 0.0
    for start in range(0, order.size, config.batch_size):
        batch = order[start : start + config.batch_size]
        labels = labeling.labels[batch]
        loss, d_w, d_b, feats = batch_loss_and_grad(
            params, raw[batch], labels, bank.centers, config.tau, config.normalize
        )
        # memory update first, with the forward features, in batch order
        for j in range(batch.size):
            bank.ema_update(int(labels[j]), feats[j])
        if adam is not None:
            dw_step, db_step = adam.step([d_w, d_b], lr)
            params.weight -= dw_step
            params.bias -= db_step
        else:
            params.weight -= lr * d_w
            params.bias -= lr * d_b
        total += loss * batch.size
    return total / order.size if order.size else float("nan")


def _run(raw: np.ndarray, config: TrainConfig, curriculum_on: bool) -> RunResult:
    raw = np.ascontiguousarray(np.atleast_2d(raw), dtype=np.float64)
    n = raw.shape[0]
    if n < config.min_pts:
        raise ValueError(f"need at least min_pts={config.min_pts} samples, got {n}")
    params = init_encoder(raw.shape[1], config.feat_dim, stream(config.seed, "init"))
    shuffle_rng = stream(config.seed, "shuffle")
    state = CurriculumState(
        eps=config.eps0,
        min_pts=config.min_pts,
        threshold=config.threshold,
        step=config.step if curriculum_on else 0.0,
    )
    adam = _Adam([params.weight.shape, params.bias.shape]) if config.optimizer == "adam" else None
    labeling: PseudoLabeling | None = None
    log: list[EpochStats] = []
    epoch_labelings: list[PseudoLabeling] = []
    for epoch in range(1, config.epochs + 1):
        lr = config.learning_rate * config.lr_decay ** ((epoch - 1) // config.lr_decay_every)
        feats = FeatureMatrix(encoder_forward(params, raw, config.normalize))
        eps_used = state.eps
        labeling = dbscan(pairwise_distances(feats), state.psi)
        epoch_labelings.append(labeling)
        if labeling.num_clustered == 0:
            logger.warning(
                "epoch %d: nothing clustered at eps=%.4f; relaxing once and skipping training",
                epoch, eps_used,
            )
            update_psi(state, 1, epoch, float("nan"))
            log.append(EpochStats(epoch, eps_used, float("nan"), 1, 0, 0, float("nan")))
            continue
        bank = init_bank(feats, labeling, config.alpha, config.normalize)
        # index over the fresh bank, before training churns it
        ri = relaxing_index(feats, labeling, bank, config.ri_variant)
        mean_loss = _train_epoch(params, raw, labeling, bank, config, lr, shuffle_rng, adam)
        delta = scheduler_delta(ri, config.threshold) if curriculum_on else 0
        update_psi(state, delta, epoch, ri)
        log.append(
            EpochStats(
                epoch, eps_used, ri, delta,
                labeling.num_clusters, labeling.num_clustered, mean_loss,
            )
        )
    return RunResult(
        encoder=params,
        curriculum=state,
        labeling=labeling,
        log=log,
        epoch_labelings=epoch_labelings,
    )


def run_cpc(raw: np.ndarray, config: TrainConfig) -> RunResult:
    """Full curriculum run: the radius relaxes whenever the index clears the threshold."""
    return _run(raw, config, curriculum_on=True)


def run_baseline(raw: np.ndarray, config: TrainConfig) -> RunResult:
    """Curriculum disabled: the radius stays at eps0 for the whole run.

    The scheduler is pinned to delta=0 and the relaxation step to zero, so a
    baseline run is bitwise-identical to a curriculum run whose threshold is
    unreachable.
    """
    return _run(raw, config, curriculum_on=False)
