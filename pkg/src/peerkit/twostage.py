"""Single- and two-stage review pipelines.

A pipeline run takes one full noisy ranking per agent, assigns reviews,
derives grades, and applies a selection mechanism. The two-stage variant
spends ``f`` of each reviewer's ``m`` reviews in a screening round that
accepts ``h`` agents outright and eliminates ``l``, then concentrates the
remaining ``m - f`` reviews per reviewer on the survivors.

Scoring conventions used by the pipeline:

* Grades are Borda-style (``n`` minus the candidate's position in the
  reviewer's full ranking) restricted to the assigned reviewees.
* Received grades are divided by the candidate's review count before
  aggregation. Review loads can differ by one between candidates, and
  averaging removes that arbitrary advantage; with perfectly balanced
  loads this is the plain grade sum up to a constant factor.
* Eliminated agents keep reviewing in the second stage (the per-reviewer
  budget is fixed), and first-round grades of surviving candidates are
  pooled with second-round grades unless ``pool_stage1`` is off.
* Clustered mechanisms accept and eliminate within clusters, never across
  them, so a reviewer's report cannot touch its own stage-1 fate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from . import mechanisms as mech
from .assign import Clustering, assign_reviews, make_clusters
from .errors import InfeasibilityError, InvalidInputError
from .mechanisms import SelectionResult
from .noise import check_phi

__all__ = [
    "MECHANISMS",
    "RankingProfile",
    "TwoStageParams",
    "StageTrace",
    "Stage1Plan",
    "run_single_stage",
    "run_two_stage",
    "stage1_rank",
    "count_normalized",
]

MECHANISMS = ("vanilla", "partition", "edp")


class RankingProfile:
    """One full ranking per agent, with the inverse precomputed.

    Pipeline entry points accept either a plain ``(n, n)`` array of rankings
    or one of these; wrap once when running several mechanisms on the same
    rankings to avoid re-deriving item positions every call.
    """

    __slots__ = ("orders", "positions")

    def __init__(self, orders: object):
        arr = np.asarray(orders, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise InvalidInputError(
                f"rankings must form a square (n, n) array, got {arr.shape}"
            )
        positions = np.argsort(arr, axis=1)
        n = arr.shape[1]
        if not (np.take_along_axis(arr, positions, axis=1) == np.arange(n)).all():
            raise InvalidInputError("every row of rankings must be a permutation of 0..n-1")
        self.orders = arr
        self.positions = positions

    @property
    def n(self) -> int:
        return self.orders.shape[0]


@dataclass(frozen=True)
class TwoStageParams:
    """Parameters of one pipeline run.

    ``f = 0`` means single-stage; otherwise ``f`` of the ``m`` reviews per
    reviewer happen in the screening round. ``c = 1`` means no clustering,
    which reduces every mechanism to the vanilla scoring path.
    """

    n: int
    k: int
    m: int
    phi: float
    f: int = 0
    h: int = 0
    l: int = 0
    c: int = 1

    def validate(self) -> "TwoStageParams":
        if self.n < 2:
            raise InvalidInputError("n must be >= 2")
        if not 1 <= self.k <= self.n:
            raise InvalidInputError(f"need 1 <= k <= n, got k={self.k}")
        if self.m < 1:
            raise InvalidInputError("m must be >= 1")
        check_phi(self.phi)
        if not 1 <= self.c <= self.n:
            raise InvalidInputError(f"need 1 <= c <= n, got c={self.c}")
        if not 0 <= self.f < self.m:
            raise InvalidInputError(f"need 0 <= f < m, got f={self.f}, m={self.m}")
        if not 0 <= self.h <= self.k:
            raise InvalidInputError(f"need 0 <= h <= k, got h={self.h}")
        if not 0 <= self.l <= self.n - self.k:
            raise InvalidInputError(f"need 0 <= l <= n - k, got l={self.l}")
        if self.f == 0 and (self.h or self.l):
            raise InvalidInputError("h and l require a first round (f >= 1)")
        return self


@dataclass(frozen=True)
class StageTrace:
    """What happened at each stage of a two-stage run."""

    stage1_scores: dict[int, float]
    accepted_outright: frozenset[int]
    eliminated: frozenset[int]
    survivors: frozenset[int]
    stage2_selected: frozenset[int]
    quotas: dict[str, dict[int, int]] | None = None


@dataclass(frozen=True)
class Stage1Plan:
    """Screening-round ordering: one global order without clustering, or
    per-cluster orders plus accept/eliminate quotas with one."""

    order: tuple[int, ...] | None
    per_cluster_order: dict[int, tuple[int, ...]] | None
    accept_quota: dict[int, int] | None
    elim_quota: dict[int, int] | None


class _Streams(NamedTuple):
    quota: np.random.Generator
    rounding: np.random.Generator
    assign1: np.random.Generator
    assign2: np.random.Generator
    split: np.random.Generator
    tiebreak: np.random.Generator


def _split_streams(rng: np.random.Generator) -> _Streams:
    return _Streams(*rng.spawn(6))


def _tie_priority(n: int, rng: np.random.Generator) -> np.ndarray:
    """Per-trial tie-break priorities for mechanism-internal selections.

    Agents are numbered by true rank, so breaking score ties by agent index
    would leak the ground truth into the mechanisms (total ties are routine,
    e.g. normalized grades under a one-review budget). A seeded random
    priority keeps runs reproducible without that leak.
    """
    priority = np.empty(n, dtype=np.int64)
    priority[rng.permutation(n)] = np.arange(n)
    return priority


def _check_mechanism(mechanism: str) -> str:
    if mechanism not in MECHANISMS:
        raise InvalidInputError(
            f"unknown mechanism {mechanism!r}; expected one of {MECHANISMS}"
        )
    return mechanism


def _positions_from_rankings(rankings: object, n: int) -> np.ndarray:
    profile = rankings if isinstance(rankings, RankingProfile) else RankingProfile(rankings)
    if profile.n != n:
        raise InvalidInputError(f"rankings cover {profile.n} agents, params expect {n}")
    return profile.positions


def count_normalized(profile: mech.GradeProfile) -> mech.GradeProfile:
    """Divide every grade by how many reviews its candidate received."""
    counts: dict[int, int] = {}
    for row in profile.values():
        for cand in row:
            counts[cand] = counts.get(cand, 0) + 1
    return {
        reviewer: {cand: float(g) / counts[cand] for cand, g in row.items()}
        for reviewer, row in profile.items()
    }


def _grade_values(positions: np.ndarray, rev: np.ndarray, cand: np.ndarray) -> np.ndarray:
    n = positions.shape[1]
    return (n - positions[rev, cand]).astype(float)


def _count_normalize(cand: np.ndarray, values: np.ndarray, n: int) -> np.ndarray:
    counts = np.bincount(cand, minlength=n)
    return values / counts[cand]


def _stage_scores(
    mechanism: str,
    clustered: bool,
    rev: np.ndarray,
    cand: np.ndarray,
    values: np.ndarray,
    n: int,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Per-candidate scores; for clustered edp also the per-pair dollar
    weights (each reviewer's values rescaled to spend one point), which
    drive the cluster seat shares while the scores drive the in-cluster
    order."""
    scores = np.bincount(cand, weights=values, minlength=n)
    if mechanism == "edp" and clustered:
        row_totals = np.bincount(rev, weights=values, minlength=n)
        return scores, values / row_totals[rev]
    return scores, None


def _top(
    scores: np.ndarray, pool: np.ndarray, count: int, priority: np.ndarray
) -> np.ndarray:
    """Best ``count`` of ``pool`` by score; ties go to the lower priority."""
    if count <= 0:
        return pool[:0]
    order = np.lexsort((priority[pool], -scores[pool]))
    return pool[order[:count]]


def _bottom(
    scores: np.ndarray, pool: np.ndarray, count: int, priority: np.ndarray
) -> np.ndarray:
    """Worst ``count`` of ``pool``; on ties the higher priority is dropped
    first, so the lower priority survives."""
    if count <= 0:
        return pool[:0]
    order = np.lexsort((-priority[pool], scores[pool]))
    return pool[order[:count]]


def _scores_dict(scores: np.ndarray, pool: np.ndarray) -> dict[int, float]:
    return {int(i): float(scores[i]) for i in pool}


def _quota_array(
    pinned: Mapping[int, int] | None, c: int, fallback: np.ndarray
) -> np.ndarray:
    if pinned is None:
        return fallback
    return np.array([int(pinned[x]) for x in range(c)], dtype=np.int64)


def _resolve_clustering(
    params: TwoStageParams,
    clustering: Clustering | None,
    rng: np.random.Generator,
) -> Clustering:
    if clustering is None:
        return make_clusters(params.n, params.c, rng)
    if clustering.n != params.n or clustering.c != params.c:
        raise InvalidInputError(
            f"clustering has n={clustering.n}, c={clustering.c}; "
            f"params expect n={params.n}, c={params.c}"
        )
    return clustering


def _clustered_selection(
    mechanism: str,
    scores: np.ndarray,
    dollars_by_cluster: np.ndarray | None,
    groups: dict[int, np.ndarray],
    seats: int,
    partition_quota: np.ndarray | None,
    rounding_rng: np.random.Generator,
    pinned: Mapping[int, int] | None,
    priority: np.ndarray,
) -> tuple[dict[int, frozenset[int]], dict[int, int], tuple[str, ...]]:
    c = len(groups)
    caps = np.array([groups[x].size for x in range(c)], dtype=np.int64)
    if mechanism == "partition":
        quota = _quota_array(pinned, c, partition_quota)
        repairs: tuple[str, ...] = ()
        if (quota > caps).any():
            bad = int(np.flatnonzero(quota > caps)[0])
            raise InfeasibilityError(
                f"cluster {bad} has {int(caps[bad])} candidates but quota "
                f"{int(quota[bad])}"
            )
    else:
        total = dollars_by_cluster.sum()
        if total <= 0:
            shares = np.full(c, seats / c, dtype=float)
        else:
            shares = seats * dollars_by_cluster / total
        drawn = mech.randomized_round_batch(shares, rounding_rng, size=1)[0]
        quota = _quota_array(pinned, c, drawn)
        quota, repairs = mech.fit_caps(quota, caps, shares)
    per_cluster: dict[int, frozenset[int]] = {}
    for x in range(c):
        per_cluster[x] = frozenset(
            int(i) for i in _top(scores, groups[x], int(quota[x]), priority)
        )
    return per_cluster, {x: int(q) for x, q in enumerate(quota)}, repairs


def run_single_stage(
    mechanism: str,
    params: TwoStageParams,
    rankings: object,
    clustering: Clustering | None = None,
    rng: np.random.Generator | None = None,
    *,
    pinned_quotas: Mapping[str, Mapping[int, int]] | None = None,
) -> SelectionResult:
    """One review round with the full per-reviewer budget, then selection."""
    _check_mechanism(mechanism)
    params.validate()
    if rng is None:
        raise InvalidInputError("rng is required")
    n, k = params.n, params.k
    positions = _positions_from_rankings(rankings, n)
    streams = _split_streams(rng)
    clustered = mechanism != "vanilla" and params.c > 1
    agents = np.arange(n)
    priority = _tie_priority(n, streams.tiebreak)

    if clustered:
        clustering = _resolve_clustering(params, clustering, streams.split)
        partition_quota = (
            mech.split_evenly(k, params.c, streams.quota)
            if mechanism == "partition"
            else None
        )
        asg = assign_reviews(agents, agents, params.m, clustering, streams.assign1)
    else:
        partition_quota = None
        asg = assign_reviews(agents, agents, params.m, None, streams.assign1)

    rev, cand = asg.pairs()
    values = _count_normalize(cand, _grade_values(positions, rev, cand), n)
    scores, dollars = _stage_scores(mechanism, clustered, rev, cand, values, n)

    if not clustered:
        selected = _top(scores, agents, k, priority)
        return SelectionResult(
            selected=frozenset(int(i) for i in selected),
            scores=_scores_dict(scores, agents),
        )

    groups = {x: clustering.members(x) for x in range(params.c)}
    dollars_by_cluster = (
        np.bincount(clustering.cluster_of[cand], weights=dollars, minlength=params.c)
        if dollars is not None
        else None
    )
    pins = dict(pinned_quotas or {})
    per_cluster, quotas, repairs = _clustered_selection(
        mechanism,
        scores,
        dollars_by_cluster,
        groups,
        k,
        partition_quota,
        streams.rounding,
        pins.get("select"),
        priority,
    )
    selected = frozenset().union(*per_cluster.values())
    return SelectionResult(
        selected=selected,
        scores=_scores_dict(scores, agents),
        per_cluster=per_cluster,
        quotas=quotas,
        repairs=repairs,
    )


def run_two_stage(
    mechanism: str,
    params: TwoStageParams,
    rankings: object,
    clustering: Clustering | None = None,
    rng: np.random.Generator | None = None,
    *,
    pool_stage1: bool = True,
    pinned_quotas: Mapping[str, Mapping[int, int]] | None = None,
    pinned_stage1: Mapping[str, Iterable[int]] | None = None,
) -> tuple[SelectionResult, StageTrace]:
    """Screening round, outright accepts and eliminations, focused second
    round on the survivors, final selection of the remaining seats.

    ``pinned_quotas`` may fix any of the ``"accept"``, ``"eliminate"``, and
    ``"select"`` per-cluster quota vectors (as recorded in a trace) instead
    of drawing them, which replays one realized rounding outcome exactly.
    ``pinned_stage1`` replays a recorded screening outcome outright: its
    ``"accepted"`` and ``"eliminated"`` sets are used verbatim and only the
    second stage is recomputed.
    """
    _check_mechanism(mechanism)
    params.validate()
    if rng is None:
        raise InvalidInputError("rng is required")
    n, k = params.n, params.k
    if params.f == 0:
        result = run_single_stage(mechanism, params, rankings, clustering, rng)
        trace = StageTrace(
            stage1_scores={},
            accepted_outright=frozenset(),
            eliminated=frozenset(),
            survivors=frozenset(range(n)),
            stage2_selected=result.selected,
            quotas=None,
        )
        return result, trace

    positions = _positions_from_rankings(rankings, n)
    streams = _split_streams(rng)
    clustered = mechanism != "vanilla" and params.c > 1
    agents = np.arange(n)
    pins = dict(pinned_quotas or {})
    priority = _tie_priority(n, streams.tiebreak)

    if clustered:
        clustering = _resolve_clustering(params, clustering, streams.split)
        groups = {x: clustering.members(x) for x in range(params.c)}
        sizes = np.array([groups[x].size for x in range(params.c)], dtype=np.int64)
    else:
        groups = {}
        sizes = None

    # Final per-cluster seat quotas for partition are fixed up front, from
    # the same stream a single-stage run would use; stage-1 accepts are then
    # carved out of them so both stages together fill exactly those seats.
    partition_quota = None
    if clustered and mechanism == "partition":
        partition_quota = mech.split_evenly(k, params.c, streams.quota)
        if (partition_quota > sizes).any():
            bad = int(np.flatnonzero(partition_quota > sizes)[0])
            raise InfeasibilityError(
                f"cluster {bad} has {int(sizes[bad])} members but quota "
                f"{int(partition_quota[bad])}"
            )

    asg1 = assign_reviews(
        agents, agents, params.f, clustering if clustered else None, streams.assign1
    )
    rev1, cand1 = asg1.pairs()
    values1 = _count_normalize(cand1, _grade_values(positions, rev1, cand1), n)
    scores1, dollars1 = _stage_scores(mechanism, clustered, rev1, cand1, values1, n)

    quota_record: dict[str, dict[int, int]] | None = None
    if pinned_stage1 is not None:
        accepted_arr = np.sort(
            np.fromiter((int(i) for i in pinned_stage1["accepted"]), dtype=np.int64)
        )
        eliminated_arr = np.sort(
            np.fromiter((int(i) for i in pinned_stage1["eliminated"]), dtype=np.int64)
        )
        if accepted_arr.size != params.h or eliminated_arr.size != params.l:
            raise InvalidInputError(
                "pinned stage-1 sets must have sizes h and l"
            )
        if clustered:
            quota_record = {
                "accept": {
                    x: int(np.isin(accepted_arr, groups[x]).sum())
                    for x in range(params.c)
                },
                "eliminate": {
                    x: int(np.isin(eliminated_arr, groups[x]).sum())
                    for x in range(params.c)
                },
            }
            if mechanism == "partition":
                accept_quota = np.array(
                    [quota_record["accept"][x] for x in range(params.c)], dtype=np.int64
                )
    elif not clustered:
        accepted_arr = _top(scores1, agents, params.h, priority)
        rest = np.setdiff1d(agents, accepted_arr)
        eliminated_arr = _bottom(scores1, rest, params.l, priority)
    else:
        c = params.c
        if mechanism == "partition":
            accept_base = mech.split_evenly(params.h, c, streams.split)
            accept_quota, _ = mech.fit_caps(
                _quota_array(pins.get("accept"), c, accept_base),
                partition_quota,
                np.zeros(c),
            )
            elim_base = mech.split_evenly(params.l, c, streams.split)
            elim_quota, _ = mech.fit_caps(
                _quota_array(pins.get("eliminate"), c, elim_base),
                sizes - partition_quota,
                np.zeros(c),
            )
        else:
            points1 = np.bincount(
                clustering.cluster_of[cand1], weights=dollars1, minlength=c
            )
            total1 = points1.sum()
            accept_shares = params.h * points1 / total1
            drawn_accept = mech.randomized_round_batch(accept_shares, streams.split, 1)[0]
            accept_quota, _ = mech.fit_caps(
                _quota_array(pins.get("accept"), c, drawn_accept), sizes, accept_shares
            )
            # Eliminations go preferentially to the clusters holding the
            # smallest slice of the points (complement shares).
            elim_shares = params.l * (total1 - points1) / ((c - 1) * total1)
            drawn_elim = mech.randomized_round_batch(elim_shares, streams.split, 1)[0]
            elim_quota, _ = mech.fit_caps(
                _quota_array(pins.get("eliminate"), c, drawn_elim),
                sizes - accept_quota,
                elim_shares,
            )
        accepted_parts = [
            _top(scores1, groups[x], int(accept_quota[x]), priority) for x in range(c)
        ]
        accepted_arr = np.sort(np.concatenate(accepted_parts))
        eliminated_parts = []
        for x in range(c):
            remaining = np.setdiff1d(groups[x], accepted_arr)
            eliminated_parts.append(
                _bottom(scores1, remaining, int(elim_quota[x]), priority)
            )
        eliminated_arr = np.sort(np.concatenate(eliminated_parts))
        quota_record = {
            "accept": {x: int(q) for x, q in enumerate(accept_quota)},
            "eliminate": {x: int(q) for x, q in enumerate(elim_quota)},
        }

    removed = np.union1d(accepted_arr, eliminated_arr)
    survivors_arr = np.setdiff1d(agents, removed)
    seats_left = k - params.h

    stage2_scores_dict: dict[int, float] = {}
    per_cluster = None
    repairs: tuple[str, ...] = ()
    if seats_left > 0:
        asg2 = assign_reviews(
            agents,
            survivors_arr,
            params.m - params.f,
            clustering if clustered else None,
            streams.assign2,
        )
        rev2, cand2 = asg2.pairs()
        if pool_stage1:
            surviving = np.zeros(n, dtype=bool)
            surviving[survivors_arr] = True
            keep = surviving[cand1]
            rev_pool = np.concatenate([rev1[keep], rev2])
            cand_pool = np.concatenate([cand1[keep], cand2])
        else:
            rev_pool, cand_pool = rev2, cand2
        pooled = _count_normalize(
            cand_pool, _grade_values(positions, rev_pool, cand_pool), n
        )
        scores2, dollars2 = _stage_scores(
            mechanism, clustered, rev_pool, cand_pool, pooled, n
        )
        stage2_scores_dict = _scores_dict(scores2, survivors_arr)
        if not clustered:
            stage2_arr = _top(scores2, survivors_arr, seats_left, priority)
        else:
            surv_groups = {
                x: np.intersect1d(groups[x], survivors_arr) for x in range(params.c)
            }
            dollars2_by_cluster = (
                np.bincount(
                    clustering.cluster_of[cand_pool], weights=dollars2, minlength=params.c
                )
                if dollars2 is not None
                else None
            )
            per_cluster, stage2_quotas, repairs = _clustered_selection(
                mechanism,
                scores2,
                dollars2_by_cluster,
                surv_groups,
                seats_left,
                partition_quota - accept_quota if mechanism == "partition" else None,
                streams.rounding,
                pins.get("select"),
                priority,
            )
            quota_record["select"] = stage2_quotas
            stage2_arr = np.sort(
                np.concatenate([np.fromiter(s, dtype=np.int64) for s in per_cluster.values()])
                if any(per_cluster.values())
                else np.empty(0, dtype=np.int64)
            )
    else:
        stage2_arr = np.empty(0, dtype=np.int64)

    accepted = frozenset(int(i) for i in accepted_arr)
    stage2_selected = frozenset(int(i) for i in stage2_arr)
    selected = accepted | stage2_selected
    result = SelectionResult(
        selected=selected,
        scores=stage2_scores_dict,
        per_cluster=per_cluster,
        quotas=quota_record.get("select") if quota_record else None,
        repairs=repairs,
    )
    trace = StageTrace(
        stage1_scores=_scores_dict(scores1, agents),
        accepted_outright=accepted,
        eliminated=frozenset(int(i) for i in eliminated_arr),
        survivors=frozenset(int(i) for i in survivors_arr),
        stage2_selected=stage2_selected,
        quotas=quota_record,
    )
    return result, trace


def stage1_rank(
    mechanism: str,
    profile: mech.GradeProfile,
    clustering: Clustering | None = None,
    *,
    accept: int = 0,
    eliminate: int = 0,
    rng: np.random.Generator | None = None,
) -> Stage1Plan:
    """Order candidates by screening-round scores.

    Without clustering the result is one global order. With clustering no
    global order is meaningful, so the plan holds per-cluster orders plus
    per-cluster accept and eliminate quotas (even split for partition,
    point-share split for edp).
    """
    _check_mechanism(mechanism)
    scored: dict[int, float] = {}
    for row in profile.values():
        for cand, g in row.items():
            scored[cand] = scored.get(cand, 0.0) + float(g)
    if clustering is None or mechanism == "vanilla":
        ids = np.array(sorted(scored), dtype=np.int64)
        ranked = mech.rank_by_score(ids, [scored[int(i)] for i in ids])
        return Stage1Plan(
            order=tuple(int(i) for i in ranked),
            per_cluster_order=None,
            accept_quota=None,
            elim_quota=None,
        )
    if (accept or eliminate) and rng is None:
        raise InvalidInputError("rng is required to split accept/eliminate quotas")
    c = clustering.c
    candidates = np.array(sorted(scored), dtype=np.int64)
    groups = {x: candidates[clustering.cluster_of[candidates] == x] for x in range(c)}
    orders = {
        x: tuple(
            int(i) for i in mech.rank_by_score(groups[x], [scored[int(i)] for i in groups[x]])
        )
        for x in range(c)
    }
    accept_quota = elim_quota = None
    sizes = np.array([groups[x].size for x in range(c)], dtype=np.int64)
    if accept or eliminate:
        if mechanism == "partition":
            accept_arr, _ = mech.fit_caps(
                mech.split_evenly(accept, c, rng), sizes, np.zeros(c)
            )
            elim_arr, _ = mech.fit_caps(
                mech.split_evenly(eliminate, c, rng), sizes - accept_arr, np.zeros(c)
            )
        else:
            normalized = mech.normalize_profile(profile)
            shares = mech.cluster_shares(normalized, clustering, candidates, accept)
            share_arr = np.array([shares[x] for x in range(c)], dtype=float)
            accept_arr, _ = mech.fit_caps(
                mech.randomized_round_batch(share_arr, rng, 1)[0], sizes, share_arr
            )
            inv = mech.cluster_shares(normalized, clustering, candidates, 1)
            inv_arr = np.array([1.0 - inv[x] for x in range(c)], dtype=float)
            inv_arr = eliminate * inv_arr / max(c - 1, 1)
            elim_arr, _ = mech.fit_caps(
                mech.randomized_round_batch(inv_arr, rng, 1)[0],
                sizes - accept_arr,
                inv_arr,
            )
        accept_quota = {x: int(q) for x, q in enumerate(accept_arr)}
        elim_quota = {x: int(q) for x, q in enumerate(elim_arr)}
    return Stage1Plan(
        order=None,
        per_cluster_order=orders,
        accept_quota=accept_quota,
        elim_quota=elim_quota,
    )
