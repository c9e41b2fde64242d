"""Outcome-quality metrics against the ground-truth ranking.

Ground truth is always the identity: agent ``j`` is the true ``(j+1)``-th
best, so the ideal selection of size k is ``{0, ..., k-1}``. All metrics
are 1.0 exactly on the ideal selection.
"""

from __future__ import annotations

from typing import Iterable, Mapping

from .errors import InvalidInputError

__all__ = [
    "precision_at_k",
    "positive_borda",
    "negative_borda",
    "selection_frequency",
    "gain_curve",
]


def _as_selected(selected: Iterable[int], k: int) -> set[int]:
    sel = {int(j) for j in selected}
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    if len(sel) != k:
        raise InvalidInputError(f"selection has {len(sel)} agents, expected k={k}")
    if any(j < 0 for j in sel):
        raise InvalidInputError("agent indices must be non-negative")
    return sel


def precision_at_k(selected: Iterable[int], k: int) -> float:
    """Fraction of the true top-k present in the selection."""
    sel = _as_selected(selected, k)
    return sum(1 for j in sel if j < k) / k


def positive_borda(selected: Iterable[int], k: int) -> float:
    """Rank-weighted credit for correct picks, relative to the optimum.

    The true best agent is worth k points, the true k-th agent 1 point,
    everyone below zero; the score is the selection's total divided by the
    best achievable total k*(k+1)/2.
    """
    sel = _as_selected(selected, k)
    achieved = sum(k - j for j in sel if j < k)
    return achieved / (k * (k + 1) // 2)


def negative_borda(selected: Iterable[int], k: int, n: int) -> float:
    """Rank-weighted penalty for wrong picks, mapped so 1.0 is clean.

    A selected agent with true rank j >= k (0-based) costs ``j - k + 1``
    points, so picking the true worst agent costs most. The result is
    ``1 - penalty / worst`` where ``worst`` is the cost of selecting the
    bottom k agents outright: 1.0 means no wrong selections, 0.0 the worst
    possible selection.
    """
    sel = _as_selected(selected, k)
    if k >= n:
        raise InvalidInputError("negative_borda requires k < n")
    if any(j >= n for j in sel):
        raise InvalidInputError("agent index outside 0..n-1")
    penalty = sum(j - k + 1 for j in sel if j >= k)
    # bottom-k selection; when k > n/2 it unavoidably includes correct picks,
    # which cost nothing
    worst = sum(j - k + 1 for j in range(max(k, n - k), n))
    return 1.0 - penalty / worst


def _selected_set(result: object) -> set[int]:
    selected = getattr(result, "selected", result)
    return {int(j) for j in selected}


def selection_frequency(results: Iterable[object], n: int) -> dict[int, float]:
    """Per-agent fraction of runs in which the agent was selected.

    Accepts SelectionResult objects or bare selected sets.
    """
    counts = [0] * n
    runs = 0
    for result in results:
        runs += 1
        for j in _selected_set(result):
            counts[j] += 1
    if runs == 0:
        raise InvalidInputError("results must be non-empty")
    return {i: counts[i] / runs for i in range(n)}


def gain_curve(
    freq_a: Mapping[int, float], freq_b: Mapping[int, float]
) -> dict[int, float]:
    """Per-agent selection-probability difference, configuration b minus a."""
    if set(freq_a) != set(freq_b):
        raise InvalidInputError("frequency tables cover different agents")
    return {i: float(freq_b[i]) - float(freq_a[i]) for i in freq_a}
