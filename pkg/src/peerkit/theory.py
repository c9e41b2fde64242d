"""Analytic model of how extra reviews move acceptance probabilities.

Each item i has an unknown per-review support probability ``p_i`` (items
are indexed best-first, so ``p_1 >= p_2 >= ...``). With m independent
reviews the vote share is approximately normal with mean ``p_i`` and
standard deviation ``sqrt(p_i (1 - p_i) / m)``, and an item is accepted
when its share clears a fixed threshold t. The module evaluates:

* ``accept_probability``: the normal-approximation acceptance probability
  after m reviews,
* ``delta_p``: the gain from x additional reviews, both as the exact CDF
  difference and as the labeled midpoint closed form,
* ``argmax_gain``: which item gains most, with the first-order condition
  ``(p - t)/sqrt(p(1-p)) = 2/(sqrt(m+x) + sqrt(m))`` as a cross-check,
* ``mc_accept_probability``: a binomial Monte Carlo oracle for the same
  quantity, free of the normal approximation.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "accept_probability",
    "delta_p",
    "argmax_gain",
    "mc_accept_probability",
    "default_threshold",
    "DeltaP",
    "GainLocation",
]

_SQRT2 = math.sqrt(2.0)


def _norm_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / _SQRT2))


def _norm_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _check_threshold(t: float) -> float:
    if not 0.0 < t < 1.0:
        raise InvalidInputError(f"threshold must lie strictly in (0, 1), got {t!r}")
    return float(t)


def _check_p(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise InvalidInputError(f"support probability must lie in [0, 1], got {p!r}")
    return float(p)


def accept_probability(p: float, t: float, m: int) -> float:
    """P(vote share >= t) after m reviews, by normal approximation.

    Degenerate items (p of exactly 0 or 1) get their exact probability.
    """
    p = _check_p(p)
    t = _check_threshold(t)
    if m < 1:
        raise InvalidInputError("m must be >= 1")
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0
    b = math.sqrt(p * (1.0 - p))
    return 1.0 - _norm_cdf((t - p) * math.sqrt(m) / b)


class DeltaP(NamedTuple):
    """Gain from extra reviews: exact CDF difference and the midpoint
    closed-form approximation of it."""

    exact: float
    midpoint: float


def delta_p(p: float, t: float, m: int, x: int) -> DeltaP:
    """Change in acceptance probability from m to m + x reviews."""
    p = _check_p(p)
    t = _check_threshold(t)
    if m < 1:
        raise InvalidInputError("m must be >= 1")
    if x < 1:
        raise InvalidInputError("x must be >= 1")
    if p in (0.0, 1.0):
        return DeltaP(exact=0.0, midpoint=0.0)
    b = math.sqrt(p * (1.0 - p))
    ratio = (p - t) / b
    z_now = ratio * math.sqrt(m)
    z_more = ratio * math.sqrt(m + x)
    exact = _norm_cdf(z_more) - _norm_cdf(z_now)
    # Mean-value form with the evaluation point taken at the interval
    # midpoint; a labeled approximation, never substituted for `exact`.
    spread = math.sqrt(m + x) - math.sqrt(m)
    mid = ratio * (math.sqrt(m + x) + math.sqrt(m)) / 2.0
    midpoint = spread * ratio * _norm_pdf(mid)
    return DeltaP(exact=exact, midpoint=midpoint)


class GainLocation(NamedTuple):
    """Index gaining most from extra reviews: by exact gain, and by
    closeness to the first-order condition."""

    by_delta: int
    by_condition: int


def argmax_gain(ps: Sequence[float], t: float, m: int, x: int) -> GainLocation:
    """Which item (0-based index into the sorted profile) gains most."""
    probs = [_check_p(p) for p in ps]
    if not probs:
        raise InvalidInputError("item profile must be non-empty")
    if any(a < b for a, b in zip(probs, probs[1:])):
        raise InvalidInputError("item profile must be sorted non-increasing")
    t = _check_threshold(t)
    best_idx, best_gain = 0, -math.inf
    cond_idx, cond_err = 0, math.inf
    target = 2.0 / (math.sqrt(m + x) + math.sqrt(m))
    for i, p in enumerate(probs):
        gain = delta_p(p, t, m, x).exact
        if gain > best_gain:
            best_idx, best_gain = i, gain
        if 0.0 < p < 1.0:
            ratio = (p - t) / math.sqrt(p * (1.0 - p))
            err = abs(ratio - target)
            if err < cond_err:
                cond_idx, cond_err = i, err
    return GainLocation(by_delta=best_idx, by_condition=cond_idx)


def mc_accept_probability(
    p: float, t: float, m: int, trials: int, rng: np.random.Generator
) -> float:
    """Binomial Monte Carlo oracle for :func:`accept_probability`."""
    p = _check_p(p)
    t = _check_threshold(t)
    if m < 1:
        raise InvalidInputError("m must be >= 1")
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    votes = rng.binomial(m, p, size=trials)
    return float(np.mean(votes / m >= t))


def default_threshold(ps: Sequence[float], k: int) -> float:
    """Midpoint of the boundary items' support probabilities.

    The model treats the threshold as given; when only the selection size
    k is known, the midpoint between the k-th and (k+1)-th items is the
    natural stand-in.
    """
    if not 1 <= k < len(ps):
        raise InvalidInputError("need 1 <= k < number of items")
    return (float(ps[k - 1]) + float(ps[k])) / 2.0
