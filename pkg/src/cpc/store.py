"""Embedding storage: feature matrices, per-sample metadata, distances, file I/O.

The on-disk container is a little-endian binary file: magic ``CPCE``,
``version`` u32 (=1), ``n`` u64, ``d`` u64, ``meta_flag`` u8, then ``n*d``
float64 values row-major, then (iff meta_flag) ``n`` records of
(identity u32, clothes u32, camera u32, timestamp u64).  A CSV import with
header ``id,clothes,camera,timestamp,f0..f{d-1}`` is accepted as well,
dispatched on the ``.csv`` suffix.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"CPCE"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sIQQB")  # magic, version, n, d, meta_flag
_META_RECORD = struct.Struct("<IIIQ")  # identity, clothes, camera, timestamp


class FormatError(ValueError):
    """An embedding file violates the on-disk contract.

    ``code`` is a stable machine-readable tag: one of ``bad_magic``,
    ``bad_version``, ``truncated``, ``empty_dataset``, ``non_finite``,
    ``bad_csv``.
    """

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class FeatureMatrix:
    """N x D matrix of embedding vectors, one sample per row, float64."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"feature matrix must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"feature matrix must be at least 1x1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature matrix contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class SampleMeta:
    """Ground-truth annotations for N samples, parallel to a FeatureMatrix.

    Never visible to the training loop; used only by synthesis, evaluation,
    and the retrieval protocols.
    """

    identity: np.ndarray
    clothes: np.ndarray
    camera: np.ndarray
    timestamp: np.ndarray

    def __post_init__(self):
        for name in ("identity", "clothes", "camera", "timestamp"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.int64)
            if arr.ndim != 1:
                raise ValueError(f"meta field {name} must be 1-D")
            object.__setattr__(self, name, arr)
        n = self.identity.shape[0]
        if any(getattr(self, f).shape[0] != n for f in ("clothes", "camera", "timestamp")):
            raise ValueError("meta fields must have equal length")
        for name in ("identity", "clothes", "camera"):
            if np.any(getattr(self, name) < 0):
                raise ValueError(f"meta field {name} must be non-negative")
        # a clothes id belongs to exactly one identity
        owners: dict[int, int] = {}
        for ident, cloth in zip(self.identity.tolist(), self.clothes.tolist()):
            if owners.setdefault(cloth, ident) != ident:
                raise ValueError(f"clothes id {cloth} appears under multiple identities")

    @property
    def n(self) -> int:
        return self.identity.shape[0]

    def take(self, indices: np.ndarray) -> "SampleMeta":
        """Row-subset of the metadata (used by query/gallery splits)."""
        return SampleMeta(
            identity=self.identity[indices],
            clothes=self.clothes[indices],
            camera=self.camera[indices],
            timestamp=self.timestamp[indices],
        )


def l2_normalize(f: FeatureMatrix) -> FeatureMatrix:
    """Scale every row to unit Euclidean norm.

    Raises ValueError naming the first offending row if any row has zero norm.
    """
    norms = np.linalg.norm(f.data, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValueError(f"zero-norm row at index {int(zero[0])}: cannot normalize")
    return FeatureMatrix(f.data / norms[:, None])


def normalize_rows(x: np.ndarray) -> np.ndarray:
    """Row-normalize a raw array; zero rows raise as in :func:`l2_normalize`."""
    return l2_normalize(FeatureMatrix(np.atleast_2d(x))).data


def pairwise_distances(f: FeatureMatrix) -> np.ndarray:
    """Full N x N Euclidean distance matrix.

    Uses the Gram-matrix expansion for speed, then recomputes near-zero
    entries from explicit row differences: the expansion loses precision
    exactly where distances vanish, and duplicates must come out as exact
    zeros.  The lower triangle mirrors the upper, so the result is bitwise
    symmetric with an exactly zero diagonal.
    """
    x = f.data
    g = x @ x.T
    sq = np.diagonal(g)
    d2 = sq[:, None] + sq[None, :] - 2.0 * g
    np.maximum(d2, 0.0, out=d2)
    d2 = np.triu(d2, 1)
    ii, jj = np.nonzero((d2 < 1e-12) & np.triu(np.ones_like(d2, dtype=bool), 1))
    for start in range(0, ii.size, 65536):
        i = ii[start : start + 65536]
        j = jj[start : start + 65536]
        diff = x[i] - x[j]
        d2[i, j] = np.einsum("ij,ij->i", diff, diff)
    d2 = d2 + d2.T
    return np.sqrt(d2)


def save_embeddings(path: str | Path, f: FeatureMatrix, meta: SampleMeta | None = None) -> None:
    """Write the binary embedding container (meta block iff ``meta`` given)."""
    path = Path(path)
    if meta is not None and meta.n != f.n:
        raise ValueError(f"meta length {meta.n} does not match sample count {f.n}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, f.n, f.d, 1 if meta is not None else 0))
        fh.write(np.ascontiguousarray(f.data, dtype="<f8").tobytes())
        if meta is not None:
            for i in range(meta.n):
                fh.write(
                    _META_RECORD.pack(
                        int(meta.identity[i]),
                        int(meta.clothes[i]),
                        int(meta.camera[i]),
                        int(meta.timestamp[i]),
                    )
                )


def load_embeddings(path: str | Path) -> tuple[FeatureMatrix, SampleMeta | None]:
    """Load an embedding file (binary container, or CSV when suffixed .csv)."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return _load_csv(path)
    return _load_binary(path)


def _load_binary(path: Path) -> tuple[FeatureMatrix, SampleMeta | None]:
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError("truncated", f"{path}: file shorter than header")
    magic, version, n, d, meta_flag = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError("bad_magic", f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError("bad_version", f"{path}: unsupported version {version}")
    if n == 0 or d == 0:
        raise FormatError("empty_dataset", f"{path}: empty dataset (n={n}, d={d})")
    if meta_flag not in (0, 1):
        raise FormatError("truncated", f"{path}: invalid meta flag {meta_flag}")
    offset = _HEADER.size
    payload = n * d * 8
    expected = offset + payload + (n * _META_RECORD.size if meta_flag else 0)
    if len(raw) < expected:
        raise FormatError("truncated", f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8", count=n * d, offset=offset).reshape(n, d)
    if not np.all(np.isfinite(data)):
        raise FormatError("non_finite", f"{path}: payload contains non-finite values")
    meta = None
    if meta_flag:
        records = np.frombuffer(
            raw,
            dtype=np.dtype([("id", "<u4"), ("clothes", "<u4"), ("camera", "<u4"), ("ts", "<u8")]),
            count=n,
            offset=offset + payload,
        )
        meta = SampleMeta(
            identity=records["id"].astype(np.int64),
            clothes=records["clothes"].astype(np.int64),
            camera=records["camera"].astype(np.int64),
            timestamp=records["ts"].astype(np.int64),
        )
    return FeatureMatrix(data.copy()), meta


def _load_csv(path: Path) -> tuple[FeatureMatrix, SampleMeta]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError("empty_dataset", f"{path}: empty CSV") from None
        fixed = ["id", "clothes", "camera", "timestamp"]
        if header[: len(fixed)] != fixed:
            raise FormatError("bad_csv", f"{path}: header must start with {','.join(fixed)}")
        d = len(header) - len(fixed)
        if d < 1 or header[len(fixed) :] != [f"f{j}" for j in range(d)]:
            raise FormatError("bad_csv", f"{path}: feature columns must be f0..f{{d-1}}")
        ids, clothes, cameras, stamps, rows = [], [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError("bad_csv", f"{path}:{lineno}: expected {len(header)} fields")
            try:
                ids.append(int(row[0]))
                clothes.append(int(row[1]))
                cameras.append(int(row[2]))
                stamps.append(int(row[3]))
                rows.append([float(v) for v in row[4:]])
            except ValueError as exc:
                raise FormatError("bad_csv", f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise FormatError("empty_dataset", f"{path}: no data rows")
    data = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(data)):
        raise FormatError("non_finite", f"{path}: CSV contains non-finite values")
    meta = SampleMeta(
        identity=np.asarray(ids), clothes=np.asarray(clothes),
        camera=np.asarray(cameras), timestamp=np.asarray(stamps),
    )
    return FeatureMatrix(data), meta
