"""Selection mechanisms and their shared grading machinery.

Three mechanisms select ``k`` of ``n`` agents from peer-assigned grades:

* ``vanilla``: sum the grades each candidate received, take the k highest.
  Simple and accurate under truthful reports, but manipulable.
* ``partition``: agents are clustered and review only other clusters; each
  cluster gets a fixed seat quota. A reviewer can never influence its own
  cluster's internal order, which makes the rule impartial.
* ``edp`` (exact dollar partition): every reviewer's grades are normalized
  to spend one point in total, cluster seat quotas are the clusters'
  normalized point shares, and an expectation-preserving randomized
  rounding turns the fractional shares into integer quotas.

Grades, profiles, and quota vectors are plain dicts so the operations stay
easy to compose and test; the heavier array paths used by the simulation
pipeline route through the same helpers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .assign import Clustering
from .errors import InfeasibilityError, InvalidInputError
from .noise import as_ranking

__all__ = [
    "SelectionResult",
    "grades_from_ranking",
    "vanilla_select",
    "partition_select",
    "normalize_profile",
    "cluster_shares",
    "randomized_round",
    "randomized_round_batch",
    "edp_select",
    "split_evenly",
]

# reviewer -> (candidate -> grade); the domain is exactly the review pairs
# of an assignment.
GradeProfile = dict[int, dict[int, float]]

_SUM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class SelectionResult:
    """Outcome of one selection: the chosen set plus supporting detail."""

    selected: frozenset[int]
    scores: dict[int, float]
    per_cluster: dict[int, frozenset[int]] | None = None
    quotas: dict[int, int] | None = None
    repairs: tuple[str, ...] = ()


def rank_by_score(ids: object, scores: object) -> np.ndarray:
    """Ids ordered by descending score; ties go to the lower id."""
    ids_arr = np.asarray(ids, dtype=np.int64)
    sc = np.asarray(scores, dtype=float)
    order = np.lexsort((ids_arr, -sc))
    return ids_arr[order]


def grades_from_ranking(full_ranking: object, reviewees: object) -> dict[int, float]:
    """Borda-style grades for ``reviewees`` read off a full ranking.

    The agent at position p (0-based) of the ranking is worth ``n - p``
    points, so the best-ranked agent always grades ``n``. Restricting to
    the reviewee set preserves the reviewer's relative order.
    """
    ranking = as_ranking(full_ranking, "full_ranking")
    n = ranking.size
    pos = np.empty(n, dtype=np.int64)
    pos[ranking] = np.arange(n)
    grades: dict[int, float] = {}
    for j in reviewees:
        j = int(j)
        if not 0 <= j < n:
            raise InvalidInputError(f"candidate {j} does not appear in the ranking")
        grades[j] = float(n - pos[j])
    return grades


def _candidate_array(candidates: object) -> np.ndarray:
    cands = np.unique(np.asarray(list(candidates), dtype=np.int64))
    if cands.size == 0:
        raise InvalidInputError("candidates must be non-empty")
    return cands


def _received_sums(profile: GradeProfile, candidates: np.ndarray) -> dict[int, float]:
    scores = {int(c): 0.0 for c in candidates}
    for row in profile.values():
        for cand, grade in row.items():
            if cand in scores:
                scores[cand] += float(grade)
    return scores


def vanilla_select(profile: GradeProfile, candidates: object, k: int) -> SelectionResult:
    """Top-k by total received grade; ties broken toward lower indices."""
    cands = _candidate_array(candidates)
    if not 0 <= k <= cands.size:
        raise InvalidInputError(f"k={k} must lie in 0..{cands.size}")
    scores = _received_sums(profile, cands)
    ranked = rank_by_score(cands, [scores[int(c)] for c in cands])
    return SelectionResult(
        selected=frozenset(int(i) for i in ranked[:k]),
        scores=scores,
    )


def split_evenly(total: int, c: int, rng: np.random.Generator) -> np.ndarray:
    """Split ``total`` seats over ``c`` groups; the remainder seats go to a
    seeded-random subset of groups so no group is systematically favored."""
    if total < 0 or c < 1:
        raise InvalidInputError("need total >= 0 and c >= 1")
    base, rem = divmod(int(total), int(c))
    quota = np.full(c, base, dtype=np.int64)
    if rem:
        quota[rng.permutation(c)[:rem]] += 1
    return quota


def _check_cross_cluster(profile: GradeProfile, clustering: Clustering) -> None:
    labels = clustering.cluster_of
    for reviewer, row in profile.items():
        for cand in row:
            if reviewer == cand:
                raise InvalidInputError(f"agent {reviewer} reviews itself")
            if labels[reviewer] == labels[cand]:
                raise InvalidInputError(
                    f"reviewer {reviewer} grades same-cluster candidate {cand}"
                )


def _cluster_groups(
    clustering: Clustering, candidates: np.ndarray
) -> dict[int, np.ndarray]:
    labels = clustering.cluster_of[candidates]
    return {x: candidates[labels == x] for x in range(clustering.c)}


def _select_per_cluster(
    scores: Mapping[int, float],
    groups: Mapping[int, np.ndarray],
    quotas: Mapping[int, int],
) -> dict[int, frozenset[int]]:
    chosen: dict[int, frozenset[int]] = {}
    for x, group in groups.items():
        ranked = rank_by_score(group, [scores[int(c)] for c in group])
        chosen[x] = frozenset(int(i) for i in ranked[: quotas[x]])
    return chosen


def partition_select(
    profile: GradeProfile,
    clustering: Clustering,
    candidates: object,
    k: int,
    rng: np.random.Generator,
) -> SelectionResult:
    """Fixed per-cluster quotas (k/c each, remainder randomized), top scorers
    within each cluster."""
    cands = _candidate_array(candidates)
    _check_cross_cluster(profile, clustering)
    quota_arr = split_evenly(k, clustering.c, rng)
    groups = _cluster_groups(clustering, cands)
    for x, group in groups.items():
        if quota_arr[x] > group.size:
            raise InfeasibilityError(
                f"cluster {x} has {group.size} candidates but quota {int(quota_arr[x])}"
            )
    scores = _received_sums(profile, cands)
    quotas = {x: int(q) for x, q in enumerate(quota_arr)}
    per_cluster = _select_per_cluster(scores, groups, quotas)
    selected = frozenset().union(*per_cluster.values()) if per_cluster else frozenset()
    return SelectionResult(
        selected=selected, scores=scores, per_cluster=per_cluster, quotas=quotas
    )


def normalize_profile(profile: GradeProfile) -> GradeProfile:
    """Rescale every reviewer's grades to spend exactly one point in total.

    A reviewer whose grades sum to zero spreads its point uniformly.
    """
    out: GradeProfile = {}
    for reviewer, row in profile.items():
        total = float(sum(row.values()))
        if row and total <= 0.0:
            share = 1.0 / len(row)
            out[reviewer] = {cand: share for cand in row}
        else:
            out[reviewer] = {cand: float(g) / total for cand, g in row.items()}
    return out


def cluster_shares(
    normalized: GradeProfile,
    clustering: Clustering,
    candidates: object,
    k: int,
) -> dict[int, float]:
    """Each cluster's fractional seat share: k times its slice of the
    total points the candidates received."""
    cands = _candidate_array(candidates)
    cand_set = {int(c) for c in cands}
    labels = clustering.cluster_of
    points = np.zeros(clustering.c, dtype=float)
    for row in normalized.values():
        for cand, grade in row.items():
            if cand in cand_set:
                points[labels[cand]] += float(grade)
    total = points.sum()
    if total <= 0.0:
        return {x: k / clustering.c for x in range(clustering.c)}
    return {x: float(k * points[x] / total) for x in range(clustering.c)}


def _systematic_round(
    values: np.ndarray, rng: np.random.Generator, size: int
) -> np.ndarray:
    """Systematic sampling: floor everything, then hand out the leftover
    seats by dropping an evenly spaced grid on the shuffled fractional
    parts. Marginals are exact and the total never varies."""
    base = np.floor(values)
    frac = values - base
    extra_total = int(round(values.sum() - base.sum()))
    quotas = np.tile(base.astype(np.int64), (size, 1))
    if extra_total == 0:
        return quotas
    c = values.size
    perms = np.argsort(rng.random((size, c)), axis=1)
    cum = np.cumsum(frac[perms], axis=1)
    cum[:, -1] = extra_total  # pin the drift so the grid count is exact
    u = rng.random((size, 1))
    grid_counts = np.ceil(cum - u)
    np.clip(grid_counts, 0.0, float(extra_total), out=grid_counts)
    extras_permuted = np.diff(grid_counts, axis=1, prepend=0.0).astype(np.int64)
    extras = np.zeros((size, c), dtype=np.int64)
    np.put_along_axis(extras, perms, extras_permuted, axis=1)
    quotas += extras
    return quotas


def _validated_share_values(values: object) -> np.ndarray:
    vals = np.asarray(values, dtype=float)
    if vals.ndim != 1 or vals.size == 0:
        raise InvalidInputError("shares must be a non-empty 1-d collection")
    if (vals < 0).any():
        raise InvalidInputError("shares must be non-negative")
    total = vals.sum()
    if abs(total - round(total)) > _SUM_TOLERANCE:
        raise InvalidInputError(f"shares must sum to an integer, got {total!r}")
    return vals


def randomized_round(
    shares: Mapping[int, float], rng: np.random.Generator
) -> dict[int, int]:
    """Round shares to integers: every quota is the floor or ceiling of its
    share, quotas sum to the (integer) share total exactly, and each quota
    equals its share in expectation."""
    keys = sorted(shares)
    vals = _validated_share_values([shares[x] for x in keys])
    quotas = _systematic_round(vals, rng, size=1)[0]
    return {x: int(q) for x, q in zip(keys, quotas)}


def randomized_round_batch(
    values: object, rng: np.random.Generator, size: int
) -> np.ndarray:
    """``size`` independent roundings of one share vector, one per row.

    Same draw-by-draw behavior as repeated :func:`randomized_round` calls;
    intended for Monte Carlo verification of the expectation contract.
    """
    if size < 1:
        raise InvalidInputError("size must be >= 1")
    return _systematic_round(_validated_share_values(values), rng, size)


def fit_caps(
    quota: np.ndarray, caps: np.ndarray, anchors: np.ndarray
) -> tuple[np.ndarray, tuple[str, ...]]:
    """Clamp quotas at their caps and reassign the surplus seats to the
    clusters with the largest fractional remainders (ties to lower ids)."""
    quota = np.asarray(quota, dtype=np.int64).copy()
    caps = np.asarray(caps, dtype=np.int64)
    total = int(quota.sum())
    if total > int(caps.sum()):
        raise InfeasibilityError(
            f"quotas total {total} but only {int(caps.sum())} candidates are available"
        )
    notes: list[str] = []
    over = quota > caps
    if not over.any():
        return quota, ()
    for x in np.flatnonzero(over):
        notes.append(f"cluster {int(x)} quota {int(quota[x])} capped at {int(caps[x])}")
    surplus = int((quota - caps)[over].sum())
    quota = np.minimum(quota, caps)
    frac = np.asarray(anchors, dtype=float) - np.floor(anchors)
    order = np.lexsort((np.arange(quota.size), -frac))
    while surplus > 0:
        placed = False
        for x in order:
            if quota[x] < caps[x]:
                quota[x] += 1
                surplus -= 1
                notes.append(f"surplus seat moved to cluster {int(x)}")
                placed = True
                if surplus == 0:
                    break
        if not placed:  # pragma: no cover - guarded by the total check above
            raise InfeasibilityError("could not place surplus quota")
    return quota, tuple(notes)


def edp_select(
    profile: GradeProfile,
    clustering: Clustering,
    candidates: object,
    k: int,
    rng: np.random.Generator,
    *,
    quotas: Mapping[int, int] | None = None,
) -> SelectionResult:
    """Exact dollar partition: normalize, compute cluster shares, round them
    to integer quotas, then take each cluster's top scorers.

    The normalized (per-reviewer one-point) grades drive the seat quotas;
    the within-cluster order uses the grades as given. Under a one-review
    budget normalization flattens every grade to the same value, so quotas
    stay meaningful but a normalized order would be vacuous; the raw order
    keeps whatever signal the profile carries.

    ``quotas`` replays a previously drawn rounding outcome instead of
    drawing a fresh one; useful for audits and impartiality checks.
    """
    cands = _candidate_array(candidates)
    _check_cross_cluster(profile, clustering)
    normalized = normalize_profile(profile)
    shares = cluster_shares(normalized, clustering, cands, k)
    if quotas is None:
        quotas = randomized_round(shares, rng)
    groups = _cluster_groups(clustering, cands)
    quota_arr = np.array([quotas[x] for x in range(clustering.c)], dtype=np.int64)
    caps = np.array([groups[x].size for x in range(clustering.c)], dtype=np.int64)
    anchors = np.array([shares[x] for x in range(clustering.c)], dtype=float)
    quota_arr, repairs = fit_caps(quota_arr, caps, anchors)
    scores = _received_sums(profile, cands)
    fitted = {x: int(q) for x, q in enumerate(quota_arr)}
    per_cluster = _select_per_cluster(scores, groups, fitted)
    selected = frozenset().union(*per_cluster.values()) if per_cluster else frozenset()
    return SelectionResult(
        selected=selected,
        scores=scores,
        per_cluster=per_cluster,
        quotas=fitted,
        repairs=repairs,
    )
