"""Labeled datasets: synthetic unions of subspaces, file I/O, splitting."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import SubspaceBasis, check_independence

CSV = "csv"
RAW_F64 = "raw-f64"
FORMATS = (CSV, RAW_F64)


class ParseError(ValueError):
    """Malformed dataset file. ``line`` is 1-based when known."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


@dataclass
class LabeledDataset:
    """``N`` samples in R^n stored as rows, with integer class labels in 1..K."""

    vectors: np.ndarray
    labels: np.ndarray
    bases: list | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.vectors.ndim != 2:
            raise ValueError(f"vectors must be an N x n matrix, got shape {self.vectors.shape}")
        if self.vectors.shape[0] != self.labels.shape[0]:
            raise ValueError(f"{self.vectors.shape[0]} vectors but {self.labels.shape[0]} labels")
        if self.labels.size and self.labels.min() < 1:
            raise ValueError("class labels must be positive integers")

    @property
    def size(self):
        return self.vectors.shape[0]

    @property
    def dim(self):
        return self.vectors.shape[1]

    @property
    def classes(self):
        return np.unique(self.labels)

    @property
    def n_classes(self):
        return int(self.labels.max()) if self.labels.size else 0

    def class_vectors(self, label):
        return self.vectors[self.labels == label]

    def subset(self, index):
        index = np.asarray(index)
        return LabeledDataset(self.vectors[index], self.labels[index], bases=self.bases,
                              provenance=dict(self.provenance))

    def __len__(self):
        return self.size


def generate_union(n, K, dims, counts, seed=0, coeff_scale=1.0, orthogonal=False):
    """Sample a K-class dataset from a union of independent linear subspaces.

    Each basis ``B_i`` is an orthonormalized Gaussian ``n x d_i`` block; each
    sample is ``B_i @ w`` with ``w ~ N(0, coeff_scale^2 I)``. With
    ``orthogonal=True`` all bases come from one QR factorization and are
    mutually orthogonal.

    Parameters
    ----------
    dims, counts : int or sequence of int
        Per-class subspace dimension and sample count; a scalar is broadcast.
    """
    dims = [int(d) for d in np.broadcast_to(dims, (K,))]
    counts = [int(c) for c in np.broadcast_to(counts, (K,))]
    if K < 1:
        raise ValueError("K must be positive")
    if min(dims) < 1:
        raise ValueError("subspace dimensions must be positive")
    if sum(dims) > n:
        raise ValueError(f"sum of subspace dimensions {sum(dims)} exceeds ambient dimension {n}")
    if any(c < d for c, d in zip(counts, dims)):
        raise ValueError("each class needs at least d_i samples to be in general position")
    if coeff_scale <= 0:
        raise ValueError("coeff_scale must be positive")

    rng = np.random.default_rng(seed)
    if orthogonal:
        Q, _ = np.linalg.qr(rng.standard_normal((n, sum(dims))))
        edges = np.cumsum([0] + dims)
        bases = [Q[:, a:b] for a, b in zip(edges[:-1], edges[1:])]
    else:
        bases = [np.linalg.qr(rng.standard_normal((n, d)))[0] for d in dims]
    blocks, labels = [], []
    for i, (B, c) in enumerate(zip(bases, counts)):
        W = coeff_scale * rng.standard_normal((B.shape[1], c))
        blocks.append((B @ W).T)
        labels.append(np.full(c, i + 1))
    provenance = {"generator": "union", "n": n, "K": K, "dims": dims, "counts": counts,
                  "seed": int(seed), "coeff_scale": float(coeff_scale), "orthogonal": bool(orthogonal)}
    X = LabeledDataset(np.vstack(blocks), np.concatenate(labels), bases=bases, provenance=provenance)
    if not check_independence([SubspaceBasis(B) for B in bases]):
        raise RuntimeError("generated subspaces are not independent")
    return X


def split(X, train_fraction, seed=0):
    """Stratified train/test split; each class keeps ``round(f * N_c)`` for training."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in X.classes:
        idx = np.flatnonzero(X.labels == c)
        if idx.size < 2:
            raise ValueError(f"class {c} has fewer than 2 samples and cannot be split")
        k = int(np.floor(train_fraction * idx.size + 0.5))
        k = min(max(k, 1), idx.size - 1)
        perm = rng.permutation(idx)
        train.append(np.sort(perm[:k]))
        test.append(np.sort(perm[k:]))
    return X.subset(np.concatenate(train)), X.subset(np.concatenate(test))


def _float(token, line, path):
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"not a number: {token!r}", line, path) from None


def _label(token, line, path):
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"label is not an integer: {token!r}", line, path) from None
    if value != int(value) or value < 1:
        raise ParseError(f"labels must be integers >= 1, got {token!r}", line, path)
    return int(value)


def _load_csv(path):
    rows, labels = [], []
    width = None
    with open(path, newline="") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record or all(not t.strip() for t in record):
                continue
            if lineno == 1 and not rows:
                try:
                    [float(t) for t in record]
                except ValueError:
                    continue  # header
            if len(record) < 2:
                raise ParseError("expected at least one feature and a label", lineno, path)
            if width is None:
                width = len(record)
            elif len(record) != width:
                raise ParseError(f"ragged row: {len(record)} fields, expected {width}", lineno, path)
            rows.append([_float(t, lineno, path) for t in record[:-1]])
            labels.append(_label(record[-1], lineno, path))
    if not rows:
        raise ParseError("no data rows", path=path)
    return np.array(rows, dtype=np.float64), np.array(labels, dtype=np.int64)


_HEADER = struct.Struct("<qqq")


def _load_raw(path):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ParseError("file too short for header", path=path)
    N, n, K = _HEADER.unpack_from(data)
    if N < 1 or n < 1 or K < 1:
        raise ParseError(f"invalid header N={N} n={n} K={K}", path=path)
    expected = _HEADER.size + 8 * N * n + 8 * N
    if len(data) != expected:
        raise ParseError(f"expected {expected} bytes for N={N} n={n}, found {len(data)}", path=path)
    vectors = np.frombuffer(data, dtype="<f8", count=N * n, offset=_HEADER.size).reshape(N, n)
    labels = np.frombuffer(data, dtype="<i8", count=N, offset=_HEADER.size + 8 * N * n)
    bad = np.flatnonzero((labels < 1) | (labels > K))
    if bad.size:
        raise ParseError(f"label {labels[bad[0]]} of sample {bad[0] + 1} outside 1..{K}", path=path)
    return vectors.astype(np.float64), labels.astype(np.int64)


def load_matrix(path, format=None):
    """Read a dataset written as CSV or raw little-endian float64.

    CSV: comma separated, optional header row, final column an integer
    label. raw-f64: three int64 ``(N, n, K)``, then ``N*n`` float64 values
    row-major, then ``N`` int64 labels. No scaling is applied.
    """
    path = Path(path)
    if format is None:
        format = RAW_F64 if path.suffix in (".f64", ".bin", ".raw") else CSV
    if format == CSV:
        vectors, labels = _load_csv(path)
    elif format == RAW_F64:
        vectors, labels = _load_raw(path)
    else:
        raise ValueError(f"unknown format {format!r}")
    return LabeledDataset(vectors, labels, provenance={"source": str(path), "format": format})


def save_matrix(X, path, format=None):
    path = Path(path)
    if format is None:
        format = RAW_F64 if path.suffix in (".f64", ".bin", ".raw") else CSV
    if format == CSV:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for row, label in zip(X.vectors, X.labels):
                w.writerow([repr(float(v)) for v in row] + [int(label)])
    elif format == RAW_F64:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(X.size, X.dim, X.n_classes))
            fh.write(np.ascontiguousarray(X.vectors, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(X.labels, dtype="<i8").tobytes())
    else:
        raise ValueError(f"unknown format {format!r}")
