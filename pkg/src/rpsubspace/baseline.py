"""PCA reducer used as the comparison baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class PcaModel:
    """Mean, top-k principal directions (as columns) and their variances."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    @property
    def k(self):
        return self.components.shape[1]

    def project(self, x):
        return pca_project(self, x)

    def reconstruct(self, z):
        return np.asarray(z) @ self.components.T + self.mean


def pca_fit(X, k):
    """Fit PCA by thin SVD of the mean-centered data.

    Each component is sign-fixed so its largest-magnitude entry is positive.
    Directions beyond the data rank carry zero variance.

    Parameters
    ----------
    X : LabeledDataset or array-like, shape (N, n)
    k : int
        Number of components, ``1 <= k <= min(n, N)``.
    """
    V = np.asarray(getattr(X, "vectors", X), dtype=np.float64)
    N, n = V.shape
    if not 1 <= k <= min(n, N):
        raise ValueError(f"k must lie in [1, {min(n, N)}], got {k}")
    mean = V.mean(axis=0)
    _, s, Vt = np.linalg.svd(V - mean, full_matrices=False)
    comps = Vt[:k].T.copy()
    pivot = np.argmax(np.abs(comps), axis=0)
    comps *= np.sign(comps[pivot, np.arange(k)])
    var = s[:k] ** 2 / max(N - 1, 1)
    tol = max(N, n) * np.finfo(np.float64).eps * (s[0] if s.size else 0.0)
    var[s[:k] <= tol] = 0.0
    for a in (mean, comps, var):
        a.setflags(write=False)
    return PcaModel(mean=mean, components=comps, explained_variance=var)


def pca_project(model, x):
    """``components.T @ (x - mean)``; accepts one vector or rows of a matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.mean.shape[0]:
        raise ValueError(f"expected vectors of length {model.mean.shape[0]}, got shape {x.shape}")
    return (x - model.mean) @ model.components
