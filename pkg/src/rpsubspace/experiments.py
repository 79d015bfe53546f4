"""Experiment runners: rejection curves, RP-vs-PCA benchmarks, margin
preservation and the pseudo-inverse attack.

Every random draw is seeded from ``derive_seed(master_seed, ...)`` so results
do not depend on the order in which cells are computed.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import bounds
from .baseline import pca_fit, pca_project
from .data import split
from .geometry import dataset_margin
from .randproj import DENSE, entry_scale, generate, project_dataset, standard_entries
from .sparserep import DEFAULT_MAX_ITER, DEFAULT_TOL, Dictionary, src_classify_batch

log = logging.getLogger(__name__)

COSINE = "cosine"
INNER = "inner"
MODES = (COSINE, INNER)

ACUTE_TARGETS = (0.019021, 0.37161, 0.67809, 0.92349)
OBTUSE_TARGETS = (-0.036831, -0.45916, -0.65797, -0.92704)
DEFAULT_M_GRID = tuple(range(30, 301, 30))

# stream tags keep the derived seeds of different purposes apart
_PAIR, _TRIAL, _BENCH, _MARGIN, _ATTACK = 1, 2, 3, 4, 5


def derive_seed(*parts):
    """Deterministic 64-bit seed from non-negative integer parts."""
    state = np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)
    return int(state[0])


def parallel_map(fn, items, workers):
    """``[fn(i) for i in items]``, on a thread pool when ``workers > 1``."""
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


@dataclass
class ExperimentReport:
    """Rows of measurements plus the configuration that produced them."""

    kind: str
    config: dict
    rows: list
    metadata: dict = field(default_factory=dict)

    @property
    def config_hash(self):
        blob = json.dumps(self.config, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def columns(self):
        cols = []
        for row in self.rows:
            cols.extend(k for k in row if k not in cols)
        return cols

    def to_json(self):
        doc = {"kind": self.kind, "config": self.config, "config_hash": self.config_hash,
               "metadata": self.metadata, "rows": self.rows}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_csv(self):
        buf = io.StringIO()
        buf.write(f"# kind: {self.kind}\n# config_hash: {self.config_hash}\n")
        for key in sorted(self.metadata):
            buf.write(f"# {key}: {json.dumps(self.metadata[key], sort_keys=True)}\n")
        w = csv.DictWriter(buf, fieldnames=self.columns, lineterminator="\n")
        w.writeheader()
        for row in self.rows:
            w.writerow({k: ("" if v is None else v) for k, v in row.items()})
        return buf.getvalue()

    def render(self, format="csv"):
        if format == "json":
            return self.to_json()
        if format == "csv":
            return self.to_csv()
        raise ValueError(f"unknown report format {format!r}")

    def column(self, name, **where):
        return [r[name] for r in self.rows if all(r.get(k) == v for k, v in where.items())]


def make_pair_with_cosine(n, gamma, length_x, length_y, seed):
    """Random pair ``(x, y)`` in R^n with ``cos(x, y) = gamma`` and given lengths."""
    if not -1.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [-1, 1], got {gamma}")
    if length_x <= 0 or length_y <= 0:
        raise ValueError("lengths must be positive")
    if n < 2 and abs(gamma) != 1.0:
        raise ValueError("n >= 2 is needed for a cosine other than +/-1")
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(n)
    u /= np.linalg.norm(u)
    if n == 1:
        return length_x * u, length_y * gamma * u
    w = rng.standard_normal(n)
    w -= (w @ u) * u
    w -= (w @ u) * u
    w /= np.linalg.norm(w)
    y = gamma * u + np.sqrt(max(0.0, 1.0 - gamma**2)) * w
    y /= np.linalg.norm(y)
    return length_x * u, length_y * y


@dataclass
class RejectionConfig:
    """Settings of a rejection-probability sweep.

    ``eps`` may hold several tolerances; they share the same projections.
    Vector lengths are drawn uniformly from ``length_range`` per target.
    """

    n: int = 300
    m_grid: tuple = DEFAULT_M_GRID
    trials: int = 2000
    eps: tuple = (0.1, 0.3)
    gamma_targets: tuple = ACUTE_TARGETS + OBTUSE_TARGETS
    mode: str = COSINE
    master_seed: int = 0
    length_range: tuple = (1.0, 10.0)
    recipe: str = DENSE

    def __post_init__(self):
        self.m_grid = tuple(int(m) for m in np.atleast_1d(self.m_grid))
        self.eps = tuple(float(e) for e in np.atleast_1d(self.eps))
        self.gamma_targets = tuple(float(g) for g in np.atleast_1d(self.gamma_targets))
        self.length_range = tuple(float(v) for v in self.length_range)
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.m_grid or min(self.m_grid) < 1:
            raise ValueError("m_grid must be a non-empty list of positive integers")
        if not self.eps or any(not 0.0 < e < 1.0 for e in self.eps):
            raise ValueError("eps values must lie in (0, 1)")
        if not self.gamma_targets or any(not -1.0 <= g <= 1.0 for g in self.gamma_targets):
            raise ValueError("gamma targets must lie in [-1, 1]")
        if any(g == 0.0 for g in self.gamma_targets):
            raise ValueError("gamma = 0 is not allowed: the rejection ratio divides by <x, y>, "
                             "which vanishes for orthogonal pairs")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        lo, hi = self.length_range
        if not 0 < lo <= hi:
            raise ValueError("length_range must satisfy 0 < lo <= hi")


def _binomial_se(p, trials):
    return float(np.sqrt(p * (1.0 - p) / trials))


def _rejection_cell(config, gi):
    """All (eps, m) statistics for gamma target ``gi``."""
    gamma = config.gamma_targets[gi]
    pair_seed = derive_seed(config.master_seed, _PAIR, gi)
    lo, hi = config.length_range
    lx, ly = np.random.default_rng(pair_seed).uniform(lo, hi, size=2)
    x, y = make_pair_with_cosine(config.n, gamma, lx, ly, pair_seed)
    xy = float(x @ y)
    nx, ny = float(np.linalg.norm(x)), float(np.linalg.norm(y))

    ms = np.array(config.m_grid)
    m_max = int(ms.max())
    eps = np.array(config.eps)
    accepted = np.zeros((eps.size, ms.size), dtype=np.int64)
    outside = np.zeros((eps.size, ms.size), dtype=np.int64)
    for t in range(config.trials):
        G = standard_entries(config.n, m_max, config.recipe, derive_seed(config.master_seed, _TRIAL, gi, t))
        gx, gy = G @ x, G @ y
        # R_m is the first m rows of G scaled by entry_scale(m); the scale cancels in cosines
        cxy = np.cumsum(gx * gy)[ms - 1]
        if config.mode == COSINE:
            cxx = np.cumsum(gx * gx)[ms - 1]
            cyy = np.cumsum(gy * gy)[ms - 1]
            proj_cos = cxy / np.sqrt(cxx * cyy)
            ratio = proj_cos * nx * ny / xy
            for e, ev in enumerate(eps):
                if ev < 0.5:
                    iv = bounds.cosine_interval(gamma, ev)
                    outside[e] += (proj_cos < iv.lo) | (proj_cos > iv.hi)
        else:
            scale2 = np.array([entry_scale(int(m), config.recipe) ** 2 for m in ms])
            ratio = scale2 * cxy / xy
        accepted += ((1.0 - eps)[:, None] <= ratio) & (ratio <= (1.0 + eps)[:, None])

    rows = []
    for e, ev in enumerate(config.eps):
        for k, m in enumerate(config.m_grid):
            rejected = int(config.trials - accepted[e, k])
            p = rejected / config.trials
            row = {"mode": config.mode, "eps": ev, "gamma": gamma, "m": m, "trials": config.trials,
                   "rejected": rejected, "p_hat": p, "se": _binomial_se(p, config.trials)}
            if config.mode == COSINE and ev < 0.5:
                row["interval_violation"] = outside[e, k] / config.trials
                row["failure_bound"] = min(1.0, bounds.cosine_failure_bound(m, ev))
            else:
                row["interval_violation"] = None
                row["failure_bound"] = None
            row["length_x"] = float(lx)
            row["length_y"] = float(ly)
            rows.append(row)
    return rows


def rejection_curve(config, workers=1):
    """Empirical rejection probability over the ``(gamma, m, eps)`` grid.

    For each trial ``t`` and target ``gamma_i`` one base draw is made with
    seed ``derive_seed(master_seed, ., i, t)``; the ``m``-row projection is
    its first ``m`` rows, i.e. exactly ``generate(n, m, recipe, seed)``. A
    trial is accepted when the preservation ratio lies in ``[1-eps, 1+eps]``.
    """
    started = time.perf_counter()
    cells = parallel_map(lambda gi: _rejection_cell(config, gi), range(len(config.gamma_targets)), workers)
    rows = sorted((r for cell in cells for r in cell), key=lambda r: (r["gamma"], r["m"], r["eps"]))
    log.info("rejection curve: %d rows in %.2fs", len(rows), time.perf_counter() - started)
    cfg = asdict(config)
    return ExperimentReport("rejection", cfg, rows, {"master_seed": config.master_seed})


def jl_violation_frequency(n, m, eps, trials, master_seed=0, recipe=DENSE):
    """Fraction of fresh projections violating the norm band for one random x."""
    x = np.random.default_rng(derive_seed(master_seed, _PAIR)).standard_normal(n)
    nx2 = x @ x
    bad = 0
    for t in range(trials):
        Rx = generate(n, m, recipe, derive_seed(master_seed, _TRIAL, t)).entries @ x
        r2 = Rx @ Rx
        bad += not ((1 - eps) * nx2 <= r2 <= (1 + eps) * nx2)
    return bad / trials


def _median_ms(fn, repeats):
    fn()  # warm-up, not timed
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        fn()
        times.append((time.perf_counter_ns() - t0) / 1e6)
    return statistics.median(times)


def _src_accuracy(train_vectors, train_labels, test_vectors, test_labels, tol, max_iter, sigma, workers):
    D = Dictionary(train_vectors.T, train_labels)
    chunks = [test_vectors[i:i + 64] for i in range(0, test_vectors.shape[0], 64)]
    results = parallel_map(lambda Y: src_classify_batch(D, Y, tol, max_iter, sigma)[0], chunks, workers)
    pred = np.concatenate(results) if results else np.zeros(0, dtype=np.int64)
    return float(np.mean(pred == test_labels)) if pred.size else float("nan")


def _reducer(method, dim, train, test, seed, recipe):
    """Closure building the reduction and applying it to both splits."""
    if method == "rp":
        rp_seed = derive_seed(seed, _BENCH, dim)

        def reduce():
            R = generate(train.dim, dim, recipe, rp_seed)
            return project_dataset(R, train), project_dataset(R, test)
    elif method == "pca":
        if dim > min(train.size, train.dim):
            raise ValueError(f"PCA dimension {dim} exceeds the training set size {train.size}")

        def reduce():
            model = pca_fit(train, dim)
            return pca_project(model, train.vectors), pca_project(model, test.vectors)
    else:
        raise ValueError(f"unknown method {method!r}")
    return reduce


def reduction_time(X, dim, method, split_fraction=0.5, seed=0, recipe=DENSE, repeats=5):
    """Median milliseconds to build one reduction and apply it to all of ``X``."""
    train, test = split(X, split_fraction, seed)
    return _median_ms(_reducer(method, int(dim), train, test, seed, recipe), repeats)


def structure_benchmark(X, dims, methods=("rp", "pca"), split_fraction=0.5, seed=0, recipe=DENSE,
                        repeats=5, timing=True, full_dimension=True, tol=DEFAULT_TOL,
                        max_iter=DEFAULT_MAX_ITER, sigma=0.0, workers=1):
    """Reduction time and SRC accuracy per (method, dimension).

    Reduction time covers building the projection (drawing ``R`` or fitting
    PCA on the training split) plus projecting the whole dataset; it is the
    median of ``repeats`` runs after one untimed warm-up. ``full_dimension``
    adds a ``method="none"`` row classifying in the original space.
    """
    dims = [int(d) for d in dims]
    if any(d < 1 or d > X.dim for d in dims):
        raise ValueError(f"dimensions must lie in [1, {X.dim}]")
    for m in methods:
        if m not in ("rp", "pca"):
            raise ValueError(f"unknown method {m!r}")
    train, test = split(X, split_fraction, seed)
    rows = []

    def add(method, dim, ms, tr, te):
        acc = _src_accuracy(tr, train.labels, te, test.labels, tol, max_iter, sigma, workers)
        row = {"method": method, "dim": dim}
        if timing:
            row["time_ms"] = ms
        row["accuracy"] = acc
        row["n_train"] = train.size
        row["n_test"] = test.size
        rows.append(row)

    if full_dimension:
        add("none", X.dim, 0.0 if timing else None, train.vectors, test.vectors)
    for method in methods:
        for dim in dims:
            reduce = _reducer(method, dim, train, test, seed, recipe)
            ms = _median_ms(reduce, repeats) if timing else None
            tr, te = reduce()
            tr = getattr(tr, "vectors", tr)
            te = getattr(te, "vectors", te)
            add(method, dim, ms, tr, te)
    cfg = {"dims": dims, "methods": list(methods), "split_fraction": split_fraction, "seed": seed,
           "recipe": recipe, "repeats": repeats, "timing": timing, "tol": tol, "max_iter": max_iter,
           "sigma": sigma, "dataset": X.provenance}
    return ExperimentReport("benchmark", json.loads(json.dumps(cfg, default=str)), rows, {"seed": seed})


def margin_preservation(X, eps, m, seed=0, recipe=DENSE):
    """Measured class margins before and after one projection to dimension ``m``.

    Returns rows with ``gamma``, ``projected_gamma``, the theoretical bound
    and whether it held.
    """
    R = generate(X.dim, m, recipe, seed)
    P = project_dataset(R, X)
    rows = []
    for c in X.classes:
        g = dataset_margin(X, c)
        pg = dataset_margin(P, c)
        bound = bounds.projected_margin_bound(max(g, 0.0), eps)
        rows.append({"class": int(c), "gamma": g, "projected_gamma": pg, "bound": bound, "holds": pg <= bound})
    return rows


def inversion_attack(R, templates, originals=None, basis=None):
    """Least-squares preimages of templates through the pseudo-inverse of ``R``.

    Parameters
    ----------
    R : ProjectionMatrix
    templates : array-like, shape (count, m)
    originals : array-like, shape (count, n), optional
        Ground truth; enables ``rel_error`` and the ``row_space_floor``
        (share of ``x`` outside the row space of ``R``, which the plain
        pseudo-inverse cannot recover).
    basis : array-like, shape (n, d), optional
        Attacker's knowledge that originals lie in ``span(basis)``; the
        preimage is then ``basis @ pinv(R @ basis) @ template``.
    """
    Y = np.atleast_2d(np.asarray(templates, dtype=np.float64))
    if Y.shape[1] != R.rows:
        raise ValueError(f"templates must have length {R.rows}")
    pinv = np.linalg.pinv(R.entries)
    if basis is None:
        Xhat = Y @ pinv.T
    else:
        B = np.asarray(basis, dtype=np.float64)
        Xhat = Y @ (B @ np.linalg.pinv(R.entries @ B)).T
    rows = []
    for i, xh in enumerate(Xhat):
        row = {"index": i, "template_norm": float(np.linalg.norm(Y[i])),
               "reconstruction_norm": float(np.linalg.norm(xh))}
        if originals is not None:
            x = np.asarray(originals[i], dtype=np.float64)
            nx = np.linalg.norm(x)
            row["rel_error"] = float(np.linalg.norm(xh - x) / nx)
            row["row_space_floor"] = float(np.linalg.norm(x - pinv @ (R.entries @ x)) / nx)
        rows.append(row)
    cfg = {"m": R.rows, "n": R.cols, "recipe": R.recipe, "seed": R.seed, "subspace_aware": basis is not None}
    return ExperimentReport("attack", cfg, rows, {"seed": R.seed})


def attack_demo(n, m, count, seed=0, subspace_dim=None, recipe=DENSE):
    """Inversion attack on random originals, generic or confined to a subspace.

    With ``subspace_dim`` the attacker is assumed to know the subspace, which
    makes inversion exact once ``m >= subspace_dim``.
    """
    rng = np.random.default_rng(derive_seed(seed, _ATTACK))
    B = None
    if subspace_dim:
        B = np.linalg.qr(rng.standard_normal((n, subspace_dim)))[0]
        originals = (B @ rng.standard_normal((subspace_dim, count))).T
    else:
        originals = rng.standard_normal((count, n))
    R = generate(n, m, recipe, seed)
    report = inversion_attack(R, originals @ R.entries.T, originals, basis=B)
    report.config["subspace_dim"] = subspace_dim
    report.config["count"] = count
    return report
