"""Basis pursuit, sparse-representation classification and SSC support checks.

The solver is ADMM on ``min |w|_1  s.t.  D w = y`` (or ``|D w - y| <= sigma``)
with penalty ``rho = 1`` and no over-relaxation. A column stops when both
ADMM residuals fall below ``tol`` or when a dual certificate bounds its
suboptimality by ``tol``. Right-hand sides are
normalized to unit length before solving and the solution is rescaled, so
tolerances are relative to ``|y|``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import qr
from scipy.optimize import nnls

CONVERGED = "converged"
MAX_ITER = "max-iter"
INFEASIBLE = "infeasible"

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 5000
RHO = 1.0
SUPPORT_REL_TOL = 1e-4
GAP_CHECK_EVERY = 10
CERTIFY_EVERY = 50
NEAR_ACTIVE = 0.05
COMPLETE_TRIES = 5
CROSSOVER_PIVOTS_PER_ROW = 10
CROSSOVER_AFTER = 200


class SolverError(RuntimeError):
    """Raised by classifiers when basis pursuit does not produce a usable code."""

    def __init__(self, message, code=None):
        super().__init__(message)
        self.code = code


class Dictionary:
    """Training samples as unit-norm columns with their class labels.

    Parameters
    ----------
    columns : array-like, shape (m, T)
    labels : array-like, shape (T,)
    """

    def __init__(self, columns, labels):
        D = np.array(columns, dtype=np.float64)
        if D.ndim != 2 or 0 in D.shape:
            raise ValueError(f"dictionary must be a non-empty m x T matrix, got shape {D.shape}")
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if labels.shape[0] != D.shape[1]:
            raise ValueError(f"{D.shape[1]} columns but {labels.shape[0]} labels")
        norms = np.linalg.norm(D, axis=0)
        if np.any(norms == 0):
            raise ValueError("dictionary has a zero column")
        D /= norms
        D.setflags(write=False)
        self.columns = D
        self.labels = labels
        self.classes = np.unique(labels)

    @classmethod
    def from_dataset(cls, X):
        return cls(X.vectors.T, X.labels)

    @property
    def shape(self):
        return self.columns.shape

    @cached_property
    def _svd(self):
        U, s, Vt = np.linalg.svd(self.columns, full_matrices=False)
        r = int(np.sum(s > max(self.columns.shape) * np.finfo(float).eps * s[0]))
        return U[:, :r], s[:r], Vt[:r].T

    @cached_property
    def _gram_factor(self):
        D = self.columns
        return np.linalg.cholesky(np.eye(D.shape[1]) + D.T @ D)

    def least_norm(self, Y):
        """Minimum-norm least-squares solution of ``D W = Y``."""
        U, s, V = self._svd
        return V @ ((U.T @ Y) / s[:, None]) if Y.ndim == 2 else V @ ((U.T @ Y) / s)


@dataclass
class SparseCode:
    """Coefficients over dictionary columns plus solver diagnostics."""

    w: np.ndarray
    residuals: dict = field(default_factory=dict)
    iterations: int = 0
    gap: float = 0.0
    status: str = CONVERGED

    @property
    def objective(self):
        return float(np.abs(self.w).sum())

    @property
    def converged(self):
        return self.status == CONVERGED

    def support(self, support_tol=None):
        if support_tol is None:
            support_tol = SUPPORT_REL_TOL * np.abs(self.w).max(initial=0.0)
        return np.flatnonzero(np.abs(self.w) > support_tol)


def restrict(w, labels, label):
    """Zero every coefficient outside class ``label``."""
    return np.where(labels == label, w, 0.0)


def class_residuals(D, y, w):
    return {int(c): float(np.linalg.norm(y - D.columns @ restrict(w, D.labels, c))) for c in D.classes}


def _soft(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _duality_gap(V, w0, x, u):
    """Certified gap |x|_1 - y'lam for feasible x.

    ``RHO * u`` is a subgradient of |z|_1; its row-space component, scaled
    into the unit infinity ball, is ``D' lam`` for a dual-feasible ``lam``,
    and ``y' lam = w0' D' lam`` since ``y = D w0``.
    """
    g = V @ (V.T @ (RHO * u))
    g /= np.maximum(1.0, np.abs(g).max(axis=0))
    return np.abs(x).sum(axis=0) - (w0 * g).sum(axis=0)


def _purify(A, S, w):
    """Move ``w`` (with ``A_S w = y``) to a vertex without increasing |w|_1.

    Steps along null-space directions of ``A_S`` until a coordinate hits
    zero, dropping it, until the remaining columns are independent.
    """
    while S.size:
        # thin SVD suffices unless there are more columns than rows
        _, sv, Vt = np.linalg.svd(A[:, S], full_matrices=S.size > A.shape[0])
        rank = int(np.sum(sv > max(A.shape[0], S.size) * np.finfo(float).eps * sv[0]))
        if rank == S.size:
            break
        d = Vt[-1]
        if np.sign(w) @ d > 0:
            d = -d
        hit = w * d < 0
        if not hit.any():
            d, hit = -d, w * d > 0
        t = -w[hit] / d[hit]
        w = w + t.min() * d
        keep = np.ones(S.size, dtype=bool)
        keep[np.flatnonzero(hit)[np.argmin(t)]] = False
        S, w = S[keep], w[keep]
    return S, w


def _vertex_candidates(A, y, z, u, tol):
    """Feasible vertices guessed from the current ADMM state.

    First the support of ``z`` corrected onto ``A_S w_S = y``, or, when that
    is infeasible, completed by a column whose component orthogonal to
    ``A_S`` best matches the unexplained part of ``y``; then the
    support of ``z`` plus every nearly active multiplier
    (``|RHO u_j| >= 1 - NEAR_ACTIVE``) solved by sign-constrained NNLS.
    Each candidate is purified to a vertex; sign-inconsistent or infeasible
    guesses are skipped.
    """
    S = np.flatnonzero(z)
    ru = RHO * u
    if S.size:
        As = A[:, S]
        w = z[S] + np.linalg.lstsq(As, y - As @ z[S], rcond=None)[0]
        if np.linalg.norm(As @ w - y) <= tol * 1e-3 and np.all(np.sign(w) == np.sign(z[S])):
            yield _purify(A, S, w)
        elif S.size < A.shape[0]:
            # an optimal coefficient may be too small to survive soft-thresholding;
            # the missing column is the one whose part off span(A_S) best explains y's
            Q = np.linalg.qr(As)[0]
            r = y - Q @ (Q.T @ y)
            perp = A - Q @ (Q.T @ A)
            score = np.abs(perp.T @ r) / np.maximum(np.linalg.norm(perp, axis=0), 1e-300)
            score[S] = -1.0
            for j in np.argsort(-score, kind="stable")[:COMPLETE_TRIES]:
                Sj = np.append(S, j)
                w = np.linalg.lstsq(A[:, Sj], y, rcond=None)[0]
                if np.linalg.norm(A[:, Sj] @ w - y) <= tol * 1e-3:
                    yield _purify(A, Sj, w)
    S = np.flatnonzero((z != 0) | (np.abs(ru) >= 1.0 - NEAR_ACTIVE))
    if S.size:
        sgn = np.where(z[S] != 0, np.sign(z[S]), np.sign(ru[S]))
        As = A[:, S] * sgn
        v = nnls(As, y)[0]
        # recompute: some scipy releases report a zero residual for inexact fits
        if np.linalg.norm(As @ v - y) <= tol * 1e-3:
            keep = v > 0
            yield _purify(A, S[keep], (sgn * v)[keep])


def _certified_gap(D, y, S, ws, u):
    """Gap between |w|_1 and a dual point built from the ADMM multiplier.

    The multiplier estimate ``lam_u`` (least squares for ``D' lam = RHO u``)
    is corrected so that ``D_S' lam = sign(w_S)`` exactly, then scaled into
    the dual-feasible set.
    """
    U, sv, V = D._svd
    A = D.columns
    lam = U @ ((V.T @ (RHO * u)) / sv)
    lam += np.linalg.lstsq(A[:, S].T, np.sign(ws) - A[:, S].T @ lam, rcond=None)[0]
    lam /= max(1.0, np.abs(A.T @ lam).max())
    return np.abs(ws).sum() - y @ lam


def _crossover(D, y, S, ws, max_pivots):
    """Primal simplex pivots from the feasible vertex ``(S, ws)``.

    Works on the LP ``min 1'(p + q)`` with ``A (p - q) = y`` in the row-space
    coordinates of the dictionary, with basic columns signed by their
    coefficients. Degenerate vertices are padded with zero-level columns.
    Returns ``(S, ws, gap)`` where ``gap`` is certified by the basis dual
    scaled into the feasible set.
    """
    U = D._svd[0]
    A, yr = U.T @ D.columns, U.T @ y
    r, T = A.shape
    basis, sgn, val = list(S), list(np.sign(ws)), list(np.abs(ws))
    if len(basis) > r:
        return S, ws, np.inf
    if len(basis) < r:
        Q = np.linalg.qr(A[:, basis])[0] if basis else np.zeros((r, 0))
        rest = np.setdiff1d(np.arange(T), basis)
        piv = qr(A[:, rest] - Q @ (Q.T @ A[:, rest]), mode="r", pivoting=True)[1]
        extra = rest[piv[:r - len(basis)]]
        basis += list(extra)
        sgn += [1.0] * extra.size
        val += [0.0] * extra.size
    basis, sgn, val = np.array(basis), np.array(sgn), np.array(val)
    lam = None
    for _ in range(max_pivots):
        Bm = A[:, basis] * sgn
        try:
            lam = np.linalg.solve(Bm.T, np.ones(r))
        except np.linalg.LinAlgError:
            return S, ws, np.inf
        g = A.T @ lam
        g[basis] = 0.0
        j = int(np.argmax(np.abs(g)))
        if abs(g[j]) <= 1.0 + 1e-12:
            break
        d = np.linalg.solve(Bm, np.sign(g[j]) * A[:, j])
        pos = d > 1e-12
        if not pos.any():
            return S, ws, np.inf
        t = np.full(r, np.inf)
        t[pos] = val[pos] / d[pos]
        leave = int(np.argmin(t))
        val = np.maximum(val - t[leave] * d, 0.0)
        basis[leave], sgn[leave], val[leave] = j, np.sign(g[j]), t[leave]
    else:
        return S, ws, np.inf
    keep = val > 0
    S, ws = basis[keep], (sgn * val)[keep]
    if np.linalg.norm(A[:, S] @ ws - yr) > 1e-9 * max(1.0, np.linalg.norm(yr)):
        return S, ws, np.inf
    lam = lam / max(1.0, np.abs(A.T @ lam).max())
    return S, ws, np.abs(ws).sum() - yr @ lam


def _admm_equality(D, Y, tol, max_iter):
    """Column-batched ADMM for ``min |w|_1 s.t. D w = y``; columns of Y are unit.

    Returns the feasible iterates ``x``, the sparse iterates ``z``, per-column
    iteration counts and convergence flags, and any certified vertices.
    """
    _, _, V = D._svd
    A = D.columns
    w0 = D.least_norm(Y)
    T, B = w0.shape
    z = np.zeros((T, B))
    u = np.zeros((T, B))
    x = w0.copy()
    iters = np.full(B, max_iter)
    done = np.zeros(B, dtype=bool)
    certified = {}
    active = np.arange(B)
    for k in range(1, max_iter + 1):
        za, ua = z[:, active], u[:, active]
        v = za - ua
        xa = v - V @ (V.T @ v) + w0[:, active]
        zn = _soft(xa + ua, 1.0 / RHO)
        ua = ua + xa - zn
        r = np.linalg.norm(xa - zn, axis=0)
        s = RHO * np.linalg.norm(zn - za, axis=0)
        x[:, active], z[:, active], u[:, active] = xa, zn, ua
        fin = (r <= tol) & (s <= tol)
        if k % GAP_CHECK_EVERY == 0:
            fin |= _duality_gap(V, w0[:, active], xa, ua) <= tol
        if k % CERTIFY_EVERY == 0:
            for j in np.flatnonzero(~fin):
                c = active[j]
                for S, ws in _vertex_candidates(A, Y[:, c], zn[:, j], ua[:, j], tol):
                    if not S.size:
                        continue
                    if _certified_gap(D, Y[:, c], S, ws, ua[:, j]) > tol:
                        if k < CROSSOVER_AFTER:
                            continue
                        S, ws, gap = _crossover(D, Y[:, c], S, ws, CROSSOVER_PIVOTS_PER_ROW * V.shape[1] + 50)
                        if gap > tol:
                            continue
                    certified[c] = np.zeros(T)
                    certified[c][S] = ws
                    fin[j] = True
                    break
        if fin.any():
            iters[active[fin]] = k
            done[active[fin]] = True
            active = active[~fin]
            if active.size == 0:
                break
    return x, z, u, iters, done, certified


def _polish(D, y, z, u, x, tol):
    """Best vertex guessed from ``(z, u)``, kept only if no worse than the feasible ``x``."""
    best = None
    for S, ws in _vertex_candidates(D.columns, y, z, u, tol):
        if S.size and (best is None or np.abs(ws).sum() < np.abs(best[1]).sum()):
            best = (S, ws)
    if best is None or np.abs(best[1]).sum() > np.abs(x).sum() + tol:
        return None
    w = np.zeros_like(z)
    w[best[0]] = best[1]
    return w


def _project_ball(v, center, radius):
    d = v - center
    nd = np.linalg.norm(d, axis=0)
    scale = np.where(nd > radius, radius / np.maximum(nd, 1e-300), 1.0)
    return center + d * scale


def _admm_ball(D, Y, sigma, tol, max_iter):
    """ADMM for ``min |w|_1 s.t. |D w - y| <= sigma`` with splitting w = z1, D w = z2."""
    A = D.columns
    L = D._gram_factor
    T, B = A.shape[1], Y.shape[1]
    w = np.zeros((T, B))
    z1 = np.zeros((T, B))
    z2 = _project_ball(np.zeros_like(Y), Y, sigma)
    u1 = np.zeros((T, B))
    u2 = np.zeros_like(Y)
    iters = np.full(B, max_iter)
    done = np.zeros(B, dtype=bool)
    active = np.arange(B)
    for k in range(1, max_iter + 1):
        a = active
        rhs = z1[:, a] - u1[:, a] + A.T @ (z2[:, a] - u2[:, a])
        wa = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
        Dw = A @ wa
        z1n = _soft(wa + u1[:, a], 1.0 / RHO)
        z2n = _project_ball(Dw + u2[:, a], Y[:, a], sigma[a])
        r = np.sqrt(np.linalg.norm(wa - z1n, axis=0) ** 2 + np.linalg.norm(Dw - z2n, axis=0) ** 2)
        s = RHO * np.sqrt(np.linalg.norm(z1n - z1[:, a], axis=0) ** 2
                          + np.linalg.norm(A.T @ (z2n - z2[:, a]), axis=0) ** 2)
        u1[:, a] += wa - z1n
        u2[:, a] += Dw - z2n
        w[:, a], z1[:, a], z2[:, a] = wa, z1n, z2n
        fin = (r <= tol) & (s <= tol)
        if fin.any():
            iters[a[fin]] = k
            done[a[fin]] = True
            active = a[~fin]
            if active.size == 0:
                break
    return z1, iters, done


def basis_pursuit_batch(D, Y, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, sigma=0.0):
    """Solve basis pursuit for each column of ``Y``; returns a list of :class:`SparseCode`.

    ``sigma > 0`` relaxes ``D w = y`` to ``|D w - y| <= sigma``.
    """
    if not isinstance(D, Dictionary):
        raise TypeError("D must be a Dictionary")
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    m, T = D.shape
    if Y.shape[0] != m:
        raise ValueError(f"measurements have length {Y.shape[0]}, dictionary rows {m}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be positive")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")

    scale = np.linalg.norm(Y, axis=0)
    nz = scale > 0
    Yn = np.zeros_like(Y)
    Yn[:, nz] = Y[:, nz] / scale[nz]
    B = Y.shape[1]
    W = np.zeros((T, B))
    iters = np.zeros(B, dtype=int)
    status = [CONVERGED] * B
    cols = np.flatnonzero(nz)

    if sigma == 0.0 and cols.size:
        lsq = D.least_norm(Yn[:, cols])
        miss = np.linalg.norm(D.columns @ lsq - Yn[:, cols], axis=0)
        bad = miss > tol
        for j, c in enumerate(cols):
            if bad[j]:
                W[:, c] = lsq[:, j]
                status[c] = INFEASIBLE
        cols = cols[~bad]
        if cols.size:
            x, z, u, it, done, certified = _admm_equality(D, Yn[:, cols], tol, max_iter)
            for j, c in enumerate(cols):
                polished = certified.get(j)
                if polished is None:
                    polished = _polish(D, Yn[:, c], z[:, j], u[:, j], x[:, j], tol)
                W[:, c] = polished if polished is not None else x[:, j]
                iters[c] = it[j]
                if not done[j]:
                    status[c] = MAX_ITER
    elif cols.size:
        radius = np.where(nz, sigma / np.where(nz, scale, 1.0), 0.0)[cols]
        z, it, done = _admm_ball(D, Yn[:, cols], radius, tol, max_iter)
        for j, c in enumerate(cols):
            W[:, c] = z[:, j]
            iters[c] = it[j]
            if not done[j]:
                status[c] = MAX_ITER

    codes = []
    for c in range(B):
        w = W[:, c] * scale[c]
        y = Y[:, c]
        gap = float(np.linalg.norm(y - D.columns @ w))
        if sigma > 0:
            gap = max(0.0, gap - sigma)
        codes.append(SparseCode(w=w, residuals=class_residuals(D, y, w), iterations=int(iters[c]),
                                gap=gap, status=status[c]))
    return codes


def basis_pursuit(D, y, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, sigma=0.0):
    """Minimum-l1 representation of ``y`` over the dictionary columns.

    Never raises on non-convergence; inspect ``code.status`` instead. The
    best iterate is returned in every case.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError("y must be a vector")
    return basis_pursuit_batch(D, y, tol, max_iter, sigma)[0]


def ssc_support_check(code, labels, true_class, support_tol=None):
    """True iff every coefficient above ``support_tol`` belongs to ``true_class``.

    ``support_tol`` defaults to ``1e-4 * max|w|``.
    """
    labels = np.asarray(labels)
    return bool(np.all(labels[code.support(support_tol)] == true_class))


def _decide(code):
    if code.status != CONVERGED:
        raise SolverError(f"basis pursuit {code.status} after {code.iterations} iterations", code)
    classes = sorted(code.residuals)
    r = np.array([code.residuals[c] for c in classes])
    return classes[int(np.argmin(r))]


def src_classify(D, y, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, sigma=0.0):
    """Assign ``y`` to the class whose restricted code reconstructs it best.

    Returns ``(label, residuals, code)``. Exact residual ties go to the
    smallest class id. Raises :class:`SolverError` if the code is not
    converged.
    """
    code = basis_pursuit(D, y, tol, max_iter, sigma)
    return _decide(code), code.residuals, code


def src_classify_batch(D, Y, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, sigma=0.0, chunk=256):
    """Classify the rows of ``Y``; returns ``(labels, codes)``."""
    Y = np.asarray(Y, dtype=np.float64)
    codes = []
    for start in range(0, Y.shape[0], chunk):
        codes.extend(basis_pursuit_batch(D, Y[start:start + chunk].T, tol, max_iter, sigma))
    return np.array([_decide(c) for c in codes], dtype=np.int64), codes
