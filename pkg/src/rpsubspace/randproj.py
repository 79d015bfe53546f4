"""Random projection matrices and cancelable templates.

A projection matrix ``R`` is ``m x n`` and is always applied as ``R @ x``.
Entries come from a Philox stream keyed by ``(seed, recipe)`` and are filled
row-major, so the first ``k`` rows of any draw depend only on the seed and
not on ``m``. Rescaling those rows by the ``m``-dependent factor gives the
``k``-row matrix for the same seed exactly; :func:`standard_entries` exposes
the unscaled stream for callers that sweep ``m``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import cosine

DENSE = "dense-gaussian"
SPARSE = "sparse-achlioptas"
RECIPES = (DENSE, SPARSE)

_RECIPE_TAG = {DENSE: 0, SPARSE: 1}
_UINT64_MAX = 2**64 - 1


def _check_seed(seed):
    seed = int(seed)
    if not 0 <= seed <= _UINT64_MAX:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def _check_recipe(recipe):
    if recipe not in _RECIPE_TAG:
        raise ValueError(f"unknown recipe {recipe!r}; expected one of {RECIPES}")
    return recipe


def entry_scale(m, recipe=DENSE):
    """Multiplier turning unit-variance draws into an ``m``-row projection."""
    _check_recipe(recipe)
    if recipe == DENSE:
        return 1.0 / np.sqrt(m)
    return np.sqrt(3.0 / m)


def standard_entries(n, rows, recipe=DENSE, seed=0):
    """Unscaled entries of the first ``rows`` rows for ``(recipe, seed)``.

    Dense draws are standard normal; sparse draws take values in
    ``{+1, 0, -1}`` with probabilities ``{1/6, 2/3, 1/6}``.
    """
    if n < 1 or rows < 1:
        raise ValueError(f"dimensions must be positive, got n={n}, rows={rows}")
    seed = _check_seed(seed)
    rng = np.random.Generator(np.random.Philox(key=[seed, _RECIPE_TAG[_check_recipe(recipe)]]))
    if recipe == DENSE:
        return rng.standard_normal((rows, n))
    u = rng.random((rows, n))
    return (u < 1.0 / 6.0).astype(np.float64) - (u >= 5.0 / 6.0)


@dataclass(frozen=True, eq=False)
class ProjectionMatrix:
    """An ``m x n`` random matrix together with the recipe that produced it."""

    entries: np.ndarray
    recipe: str
    seed: int | None = None

    def __post_init__(self):
        entries = np.array(self.entries, dtype=np.float64)
        if entries.ndim != 2 or 0 in entries.shape:
            raise ValueError(f"projection entries must be a non-empty 2-D array, got shape {entries.shape}")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def rows(self):
        return self.entries.shape[0]

    @property
    def cols(self):
        return self.entries.shape[1]

    m = rows
    n = cols

    @classmethod
    def from_array(cls, entries, recipe="custom"):
        """Wrap an explicit matrix (e.g. the identity) as a projection."""
        return cls(entries=entries, recipe=recipe, seed=None)

    def __matmul__(self, other):
        return self.entries @ other


def generate(n, m, recipe=DENSE, seed=0):
    """Draw an ``m x n`` projection matrix.

    Parameters
    ----------
    n : int
        Ambient dimension.
    m : int
        Target dimension.
    recipe : {"dense-gaussian", "sparse-achlioptas"}
        Dense entries are ``N(0, 1/m)``; sparse entries are
        ``sqrt(3/m) * s`` with ``s`` in ``{+1, 0, -1}`` w.p. ``{1/6, 2/3, 1/6}``.
    seed : int
        Unsigned 64-bit seed. Identical arguments give bit-identical entries.
    """
    if n < 1 or m < 1:
        raise ValueError(f"dimensions must be positive, got n={n}, m={m}")
    entries = standard_entries(n, m, recipe, seed) * entry_scale(m, recipe)
    return ProjectionMatrix(entries=entries, recipe=recipe, seed=_check_seed(seed))


def project(R, x):
    """Return ``R @ x`` for a single length-``n`` vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != R.cols:
        raise ValueError(f"expected a length-{R.cols} vector, got shape {x.shape}")
    return R.entries @ x


def project_dataset(R, X):
    """Project every sample of a :class:`~rpsubspace.data.LabeledDataset`.

    Labels are kept; ground-truth bases ``B_i`` (if attached) are mapped to
    ``R @ B_i`` so the projected dataset still describes its own subspaces.
    """
    from .data import LabeledDataset

    if X.dim != R.cols:
        raise ValueError(f"dataset has ambient dimension {X.dim}, projection expects {R.cols}")
    vectors = X.vectors @ R.entries.T
    bases = None if X.bases is None else [R.entries @ B for B in X.bases]
    provenance = dict(X.provenance)
    provenance["projection"] = {"recipe": R.recipe, "seed": R.seed, "m": R.rows}
    return LabeledDataset(vectors.reshape(X.size, R.rows), X.labels.copy(), bases=bases, provenance=provenance)


@dataclass(frozen=True, eq=False)
class CancelableTemplate:
    """A projected feature vector plus what is needed to regenerate ``R``."""

    vector: np.ndarray
    seed: int
    subject: str
    n: int
    recipe: str = DENSE
    history: tuple = field(default=())

    @property
    def m(self):
        return self.vector.shape[0]

    def matrix(self):
        return generate(self.n, self.m, self.recipe, self.seed)

    def to_dict(self):
        return {
            "subject": self.subject,
            "seed": self.seed,
            "recipe": self.recipe,
            "n": self.n,
            "m": self.m,
            "revoked_seeds": list(self.history),
            "vector": [float(v) for v in self.vector],
        }

    @classmethod
    def from_dict(cls, d):
        vector = np.asarray(d["vector"], dtype=np.float64)
        return cls(vector=vector, seed=int(d["seed"]), subject=str(d["subject"]), n=int(d["n"]),
                   recipe=d.get("recipe", DENSE), history=tuple(d.get("revoked_seeds", ())))


def issue_template(x, subject, seed, m, recipe=DENSE):
    """Issue ``R(seed) @ x`` as a revocable template for ``subject``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("template source must be a 1-D feature vector")
    if m < 1:
        raise ValueError(f"m must be positive, got {m}")
    if not np.any(x):
        raise ValueError("cannot issue a template for the zero vector: cosine matching is undefined")
    R = generate(x.shape[0], m, recipe, seed)
    vector = R.entries @ x
    vector.setflags(write=False)
    return CancelableTemplate(vector=vector, seed=R.seed, subject=str(subject), n=x.shape[0], recipe=recipe)


def reissue_template(x, subject, new_seed, m, recipe=DENSE, previous=None):
    """Replace a compromised template with one drawn under ``new_seed``.

    Nothing links the new template to the old one: ``R(new_seed)`` is an
    independent draw, so the old template is not expected to match it.
    """
    template = issue_template(x, subject, new_seed, m, recipe)
    if previous is None:
        return template
    if _check_seed(new_seed) == previous.seed:
        raise ValueError("reissue requires a seed different from the revoked one")
    history = previous.history + (previous.seed,)
    return CancelableTemplate(vector=template.vector, seed=template.seed, subject=template.subject,
                              n=template.n, recipe=template.recipe, history=history)


def match_template(template, probe):
    """Cosine between a stored template and a probe projected under its seed."""
    probe = np.asarray(probe, dtype=np.float64)
    if probe.shape != (template.n,):
        raise ValueError(f"probe must have length {template.n}, got shape {probe.shape}")
    return cosine(template.vector, template.matrix().entries @ probe)
