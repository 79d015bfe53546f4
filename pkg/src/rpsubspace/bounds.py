"""Closed-form probability bounds for Gaussian random projections.

All probabilities are clamped to [0, 1]; the raw expressions go negative
when ``m`` is small.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

PAPER_LITERAL = "paper-literal"
EXACT_INVERSION = "exact-inversion"


def _check_eps(eps):
    if not 0.0 < eps < 0.5:
        raise ValueError(f"eps must lie in (0, 1/2), got {eps}")


def _check_m(m):
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m}")


def _check_delta(delta):
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def _tail(m, eps):
    return math.exp(-(m / 4.0) * (eps**2 - eps**3))


def _clamp(p):
    return min(1.0, max(0.0, p))


def jl_success_prob(m, eps):
    """Lower bound on P((1-eps)|x|^2 <= |Rx|^2 <= (1+eps)|x|^2)."""
    _check_m(m)
    _check_eps(eps)
    return _clamp(1.0 - 2.0 * _tail(m, eps))


def jl_failure_bound(m, eps):
    """``2 exp(-(m/4)(eps^2 - eps^3))``, unclamped."""
    _check_m(m)
    _check_eps(eps)
    return 2.0 * _tail(m, eps)


def cosine_failure_bound(m, eps):
    """``8 exp(-(m/4)(eps^2 - eps^3))``, unclamped."""
    _check_m(m)
    _check_eps(eps)
    return 8.0 * _tail(m, eps)


@dataclass(frozen=True)
class CosineInterval:
    lo: float
    hi: float
    case: str
    success_prob: float | None = None

    def __contains__(self, value):
        return self.lo <= value <= self.hi


def cosine_interval(gamma, eps, m=None):
    """Interval expected to contain the projected cosine.

    Case ``"negative"`` applies for ``gamma < -eps``, ``"near-zero"`` for
    ``-eps <= gamma < eps`` and ``"positive"`` otherwise. When ``m`` is given
    the interval's success probability ``1 - 8 exp(...)`` is attached.
    """
    if not -1.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [-1, 1], got {gamma}")
    _check_eps(eps)
    if gamma < -eps:
        lo, hi, case = (gamma - eps) / (1 - eps), (gamma + eps) / (1 + eps), "negative"
    elif gamma < eps:
        lo, hi, case = (gamma - eps) / (1 - eps), (gamma + eps) / (1 - eps), "near-zero"
    else:
        lo, hi, case = (gamma - eps) / (1 + eps), (gamma + eps) / (1 - eps), "positive"
    prob = None
    if m is not None:
        _check_m(m)
        prob = _clamp(1.0 - 8.0 * _tail(m, eps))
    return CosineInterval(lo, hi, case, prob)


def inner_product_interval(x_norm, y_norm, inner, eps):
    """``inner -/+ eps * |x| * |y|``; the width grows with the vector lengths."""
    if x_norm <= 0 or y_norm <= 0:
        raise ValueError("norms must be positive")
    if abs(inner) > x_norm * y_norm * (1 + 1e-12):
        raise ValueError("inner product exceeds the Cauchy-Schwarz bound")
    _check_eps(eps)
    half = eps * x_norm * y_norm
    return inner - half, inner + half


def projected_margin_bound(gamma, eps):
    """Upper bound on a class margin after projection: (gamma + eps) / (1 - eps)."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"margin must lie in [0, 1), got {gamma}")
    _check_eps(eps)
    return gamma / (1 - eps) + eps / (1 - eps)


def multiclass_success_prob(N, m, eps):
    """Lower bound on every class margin obeying :func:`projected_margin_bound`."""
    if N < 1:
        raise ValueError(f"N must be positive, got {N}")
    _check_m(m)
    _check_eps(eps)
    return _clamp(1.0 - 6.0 * N**2 * _tail(m, eps))


def min_projection_dim(N, eps, delta=0.95, mode=EXACT_INVERSION):
    """Smallest ``m`` for which the multiclass bound reaches ``delta``.

    ``"paper-literal"`` evaluates ``8/(e^2-e^3) ln(sqrt(6) N / (1-delta))``
    as published. ``"exact-inversion"`` solves
    ``1 - 6 N^2 exp(-(m/4)(e^2-e^3)) >= delta`` for ``m``, which gives
    ``4/(e^2-e^3) ln(6 N^2 / (1-delta))``. Only the latter is guaranteed to
    satisfy :func:`multiclass_success_prob` ``>= delta``.
    """
    if N < 1:
        raise ValueError(f"N must be positive, got {N}")
    _check_eps(eps)
    _check_delta(delta)
    c = eps**2 - eps**3
    if mode == PAPER_LITERAL:
        m = 8.0 / c * math.log(math.sqrt(6.0) * N / (1.0 - delta))
    elif mode == EXACT_INVERSION:
        m = 4.0 / c * math.log(6.0 * N**2 / (1.0 - delta))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    m = max(1, math.ceil(m))
    if mode == EXACT_INVERSION:
        # guard against ceil landing one short through rounding
        while multiclass_success_prob(N, m, eps) < delta:
            m += 1
    return m


def recommended_dim_for_subspace(d, c=4.0):
    """``ceil(c * d * ln(max(d, 2)))`` projections for data on a d-dim subspace."""
    if int(d) != d or d < 1:
        raise ValueError(f"d must be a positive integer, got {d}")
    if c <= 0:
        raise ValueError(f"c must be positive, got {c}")
    return math.ceil(c * d * math.log(max(d, 2)))
