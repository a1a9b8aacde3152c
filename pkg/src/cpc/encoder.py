"""Toy differentiable encoder: one affine map, optionally length-normalized.

Stands in for a deep backbone at desk scale.  The loss is softmax
cross-entropy of temperature-scaled inner products against the cluster
centers, and its gradient is exact, including the normalization Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bank import ClusterBank


@dataclass
class EncoderParams:
    """Affine map weights: ``weight`` is (d_in, d_out), ``bias`` is (d_out,)."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weight = np.ascontiguousarray(self.weight, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.ndim != 1:
            raise ValueError("weight must be 2-D and bias 1-D")
        if self.weight.shape[1] != self.bias.shape[0]:
            raise ValueError(
                f"bias length {self.bias.shape[0]} != output dim {self.weight.shape[1]}"
            )
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ValueError("encoder parameters contain non-finite values")

    @property
    def d_in(self) -> int:
        return self.weight.shape[0]

    @property
    def d_out(self) -> int:
        return self.weight.shape[1]

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.weight.copy(), self.bias.copy())


def encoder_forward(params: EncoderParams, x: np.ndarray, normalize: bool = True) -> np.ndarray:
    """Map inputs to features: f = W^T x + b, unit-normalized when requested.

    Accepts a single vector or a batch of rows; the output matches.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    batch = np.atleast_2d(x)
    if batch.shape[1] != params.d_in:
        raise ValueError(f"input dimension {batch.shape[1]} != encoder d_in {params.d_in}")
    z = batch @ params.weight + params.bias
    if normalize:
        norms = np.linalg.norm(z, axis=1)
        if np.any(norms == 0.0):
            bad = int(np.flatnonzero(norms == 0.0)[0])
            raise ValueError(f"encoded row {bad} has zero norm; cannot normalize")
        z = z / norms[:, None]
    return z[0] if single else z


def contrastive_loss(f: np.ndarray, label: int, bank: ClusterBank, tau: float) -> float:
    """Cross-entropy of the temperature-scaled center logits at ``label``.

    Computed with max-logit subtraction; always >= 0 and -> 0 as the correct
    logit dominates.
    """
    if not 0 <= label < bank.num_clusters:
        raise ValueError(f"label {label} out of range [0, {bank.num_clusters})")
    logits = bank.logits(f, tau)
    m = logits.max()
    return float(m + np.log(np.exp(logits - m).sum()) - logits[label])


def loss_gradient(
    params: EncoderParams,
    x: np.ndarray,
    label: int,
    bank: ClusterBank,
    tau: float,
    normalize: bool = True,
) -> EncoderParams:
    """Exact gradient of contrastive_loss(encoder_forward(x)) w.r.t. W and b."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if not 0 <= label < bank.num_clusters:
        raise ValueError(f"label {label} out of range [0, {bank.num_clusters})")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    z = x @ params.weight + params.bias
    if normalize:
        norm = np.linalg.norm(z)
        if norm == 0.0:
            raise ValueError("encoded vector has zero norm; gradient undefined")
        f = z / norm
    else:
        f = z
    logits = bank.centers @ f / tau
    shifted = logits - logits.max()
    p = np.exp(shifted)
    p /= p.sum()
    p[label] -= 1.0
    g_f = bank.centers.T @ p / tau
    if normalize:
        g_z = (g_f - (f @ g_f) * f) / norm
    else:
        g_z = g_f
    return EncoderParams(weight=np.outer(x, g_z), bias=g_z)


def batch_loss_and_grad(
    params: EncoderParams,
    x: np.ndarray,
    labels: np.ndarray,
    centers: np.ndarray,
    tau: float,
    normalize: bool = True,
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Mean loss over a batch, its gradient, and the forward features.

    Returns (loss, dW, db, features); the gradient is of the batch-mean loss.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    b = x.shape[0]
    z = x @ params.weight + params.bias
    if normalize:
        norms = np.linalg.norm(z, axis=1)
        if np.any(norms == 0.0):
            raise ValueError("encoded row has zero norm; cannot normalize")
        f = z / norms[:, None]
    else:
        f = z
    u = f @ centers.T / tau
    shifted = u - u.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)
    rows = np.arange(b)
    losses = np.log(e.sum(axis=1)) - shifted[rows, labels]
    resid = p
    resid[rows, labels] -= 1.0
    g_f = resid @ centers / tau
    if normalize:
        g_z = (g_f - np.einsum("ij,ij->i", f, g_f)[:, None] * f) / norms[:, None]
    else:
        g_z = g_f
    d_w = x.T @ g_z / b
    d_b = g_z.mean(axis=0)
    return float(losses.mean()), d_w, d_b, f
