"""Cosines, subspace margins and dataset margins."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np


def _rank_tol(s, shape):
    if s.size == 0:
        return 0.0
    return max(shape) * np.finfo(np.float64).eps * s[0]


def numerical_rank(A):
    """Rank with singular values below ``max(shape) * eps * s_max`` dropped."""
    A = np.asarray(A, dtype=np.float64)
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s > _rank_tol(s, A.shape)))


def cosine(x, y):
    """Cosine of the angle between two nonzero vectors, clamped to [-1, 1]."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    nx = np.linalg.norm(x)
    ny = np.linalg.norm(y)
    if nx == 0 or ny == 0:
        raise ValueError("cosine is undefined for a zero vector")
    return float(np.clip(np.dot(x / nx, y / ny), -1.0, 1.0))


class SubspaceBasis:
    """Columns spanning a linear subspace of R^n.

    Parameters
    ----------
    columns : array-like, shape (n, d)
        Must have full column rank. A 1-D array is read as a single column.
    """

    def __init__(self, columns):
        B = np.array(columns, dtype=np.float64)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if B.ndim != 2 or 0 in B.shape:
            raise ValueError(f"basis must be a non-empty n x d matrix, got shape {B.shape}")
        if numerical_rank(B) != B.shape[1]:
            raise ValueError("basis columns are linearly dependent")
        B.setflags(write=False)
        self.columns = B

    @property
    def ambient(self):
        return self.columns.shape[0]

    @property
    def dim(self):
        return self.columns.shape[1]

    @cached_property
    def orthonormal(self):
        U, _, _ = np.linalg.svd(self.columns, full_matrices=False)
        U.setflags(write=False)
        return U

    def residual(self, x):
        """Distance from ``x`` to the subspace."""
        x = np.asarray(x, dtype=np.float64)
        U = self.orthonormal
        return float(np.linalg.norm(x - U @ (U.T @ x)))

    def __repr__(self):
        return f"SubspaceBasis(n={self.ambient}, d={self.dim})"


def _as_basis(A):
    return A if isinstance(A, SubspaceBasis) else SubspaceBasis(A)


def subspace_margin(A, B):
    """Largest cosine between unit vectors of two subspaces.

    Returns
    -------
    gamma : float
        Cosine of the smallest principal angle, in [0, 1].
    u, v : ndarray
        Unit principal vectors, ``u`` in span(A), ``v`` in span(B), with
        ``<u, v> = gamma``.
    """
    A = _as_basis(A)
    B = _as_basis(B)
    if A.ambient != B.ambient:
        raise ValueError(f"ambient dimensions differ: {A.ambient} vs {B.ambient}")
    Ua, Ub = A.orthonormal, B.orthonormal
    P, s, Qt = np.linalg.svd(Ua.T @ Ub)
    gamma = float(np.clip(s[0], 0.0, 1.0))
    u = Ua @ P[:, 0]
    v = Ub @ Qt[0]
    return gamma, u, v


def check_independence(bases):
    """True iff the sum of the subspaces is direct.

    Equivalent to the concatenated bases having rank ``sum(d_i)``.
    """
    bases = [_as_basis(B) for B in bases]
    if not bases:
        return True
    n = bases[0].ambient
    if any(B.ambient != n for B in bases):
        raise ValueError("bases do not share an ambient dimension")
    total = sum(B.dim for B in bases)
    if total > n:
        return False
    return numerical_rank(np.hstack([B.orthonormal for B in bases])) == total


def _unit_rows(V):
    norms = np.linalg.norm(V, axis=1)
    if np.any(norms == 0):
        raise ValueError("dataset contains a zero vector")
    return V / norms[:, None]


def dataset_margin(X, label):
    """Maximum cosine between class ``label`` and every other sample.

    A result of exactly 1 (a direction shared across classes) is returned
    with a ``RuntimeWarning`` rather than raised.
    """
    mask = X.labels == label
    if not mask.any():
        raise ValueError(f"class {label} is empty")
    if mask.all():
        raise ValueError(f"class {label} has no other class to be separated from")
    inside = _unit_rows(X.vectors[mask])
    outside = _unit_rows(X.vectors[~mask])
    gamma = float(np.clip((inside @ outside.T).max(), -1.0, 1.0))
    if gamma >= 1.0:
        warnings.warn(f"class {label} shares a direction with another class (margin 1)", RuntimeWarning)
    return gamma


@dataclass
class MarginReport:
    """Pairwise subspace margins and per-class dataset margins."""

    classes: list
    pairwise: np.ndarray
    principal_vectors: dict = field(default_factory=dict)
    dataset_margins: dict = field(default_factory=dict)
    degenerate: bool = False

    @property
    def angles(self):
        return np.arccos(np.clip(self.pairwise, -1.0, 1.0))

    def to_dict(self):
        return {
            "classes": [int(c) for c in self.classes],
            "pairwise_margins": self.pairwise.tolist(),
            "principal_angles": self.angles.tolist(),
            "dataset_margins": {str(k): v for k, v in self.dataset_margins.items()},
            "degenerate": self.degenerate,
        }


def margin_report(bases=None, dataset=None, classes=None):
    """Collect margins for a list of bases and/or a labeled dataset.

    ``bases[k]`` is taken to belong to ``classes[k]`` (default ``1..K``).
    """
    if bases is None and dataset is not None:
        bases = dataset.bases
    K = len(bases) if bases is not None else 0
    if classes is None:
        classes = list(range(1, K + 1)) if bases is not None else sorted(np.unique(dataset.labels).tolist())
    pairwise = np.eye(K)
    vectors = {}
    if bases is not None:
        bases = [_as_basis(B) for B in bases]
        for i, j in combinations(range(K), 2):
            g, u, v = subspace_margin(bases[i], bases[j])
            pairwise[i, j] = pairwise[j, i] = g
            vectors[(classes[i], classes[j])] = (u, v)
    margins = {}
    degenerate = False
    if dataset is not None:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            for c in np.unique(dataset.labels):
                margins[int(c)] = dataset_margin(dataset, c)
        degenerate = any(issubclass(w.category, RuntimeWarning) for w in caught)
    return MarginReport(classes=list(classes), pairwise=pairwise, principal_vectors=vectors,
                        dataset_margins=margins, degenerate=degenerate)
