"""Reviewer clustering and balanced review assignment.

Assignments map each reviewer to a fixed-size set of candidates subject to
two hard rules (no self-review, no same-cluster review when a clustering is
in force) and one soft goal: the number of reviews received should differ
by at most one across candidates whenever the instance allows it.

Construction is slot-based: candidates are placed into randomly arranged
slots and reviewers are dealt slots, never candidate identities, so the
reviews a candidate receives depend only on its own cluster's composition.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InfeasibilityError, InvalidInputError

__all__ = ["Clustering", "Assignment", "make_clusters", "assign_reviews"]


@dataclass(frozen=True, eq=False)
class Clustering:
    """Partition of agents ``0..n-1`` into ``c`` near-equal clusters."""

    cluster_of: np.ndarray
    c: int

    @classmethod
    def from_labels(cls, labels: object, c: int | None = None) -> "Clustering":
        arr = np.asarray(labels, dtype=np.int64)
        if arr.ndim != 1 or arr.size == 0:
            raise InvalidInputError("labels must be a non-empty 1-d sequence")
        n_clusters = int(arr.max()) + 1 if c is None else int(c)
        if n_clusters < 1 or ((arr < 0) | (arr >= n_clusters)).any():
            raise InvalidInputError("cluster labels must lie in 0..c-1")
        sizes = np.bincount(arr, minlength=n_clusters)
        if sizes.max() - sizes.min() > 1:
            raise InvalidInputError("cluster sizes must differ by at most 1")
        return cls(cluster_of=arr, c=n_clusters)

    @property
    def n(self) -> int:
        return self.cluster_of.size

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.cluster_of == cluster)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.cluster_of, minlength=self.c)


def make_clusters(n: int, c: int, rng: np.random.Generator) -> Clustering:
    """Uniformly random partition of ``0..n-1`` into near-equal clusters."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    if not 1 <= c <= n:
        raise InvalidInputError(f"need 1 <= c <= n, got c={c} with n={n}")
    perm = rng.permutation(n)
    labels = np.empty(n, dtype=np.int64)
    labels[perm] = np.arange(n) % c
    return Clustering(cluster_of=labels, c=int(c))


@dataclass(frozen=True, eq=False)
class Assignment:
    """Who reviews whom. Row ``i`` of ``reviewee_ids`` belongs to
    ``reviewers[i]``; every row has exactly ``per_reviewer`` entries."""

    reviewers: np.ndarray
    reviewee_ids: np.ndarray
    per_reviewer: int

    @cached_property
    def reviewees_of(self) -> dict[int, tuple[int, ...]]:
        return {
            int(r): tuple(sorted(int(c) for c in row))
            for r, row in zip(self.reviewers, self.reviewee_ids)
        }

    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Flat (reviewer, candidate) index arrays over all review slots."""
        rev = np.repeat(self.reviewers, self.per_reviewer)
        return rev, self.reviewee_ids.ravel()

    def received_counts(self) -> dict[int, int]:
        ids, counts = np.unique(self.reviewee_ids, return_counts=True)
        return {int(i): int(c) for i, c in zip(ids, counts)}


def _circulant_self(agents: np.ndarray, per: int, rng: np.random.Generator) -> np.ndarray:
    # Reviewers are exactly the candidates: put everyone on a random circle
    # and review the next `per` agents clockwise. Every agent is reviewed
    # exactly `per` times and never by itself.
    n = agents.size
    circle = rng.permutation(n)
    pos = np.empty(n, dtype=np.int64)
    pos[circle] = np.arange(n)
    idx = (pos[:, None] + 1 + np.arange(per)[None, :]) % n
    return agents[circle[idx]]


def _fill_passes(
    eligible: np.ndarray, counts: np.ndarray, units: int
) -> np.ndarray:
    """Spread ``units`` review slots over ``eligible`` as evenly as possible.

    Repeats the eligible slots in (current load, slot position) order; the
    leftover units after the full passes land on the least-loaded slots.
    Consecutive blocks of up to ``len(eligible)`` units are always distinct
    slots, so slicing the result into per-reviewer blocks is safe.
    """
    order = eligible[np.lexsort((eligible, counts[eligible]))]
    full, extra = divmod(units, order.size)
    parts = [np.tile(order, full)] if full else []
    if extra:
        parts.append(order[:extra])
    return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)


def _deal_slots(
    revs: np.ndarray,
    cands: np.ndarray,
    per: int,
    clustering: Clustering | None,
    rng: np.random.Generator,
) -> np.ndarray:
    n_slots = cands.size
    if clustering is not None:
        # Random slot layout: arrange the multiset of cluster labels, then
        # fill each cluster's slots with its own candidates in random order.
        # The label arrangement is built from cluster COUNTS and permuted by
        # index, so which slots a cluster owns, and hence who reviews them,
        # is insensitive to the other clusters' membership.
        counts_by_label = np.bincount(clustering.cluster_of[cands], minlength=clustering.c)
        canonical = np.repeat(np.arange(clustering.c), counts_by_label)
        slot_labels = canonical[rng.permutation(n_slots)]
        occupants = np.empty(n_slots, dtype=np.int64)
        for x in range(clustering.c):
            members_x = cands[clustering.cluster_of[cands] == x]
            occupants[np.flatnonzero(slot_labels == x)] = members_x[
                rng.permutation(members_x.size)
            ]
        rev_labels = clustering.cluster_of[revs]
    else:
        slot_labels = None
        occupants = cands[rng.permutation(n_slots)]
        rev_labels = None

    counts = np.zeros(n_slots, dtype=np.int64)
    taken = np.empty((revs.size, per), dtype=np.int64)
    if clustering is not None:
        for x in range(clustering.c):
            rows = np.flatnonzero(rev_labels == x)
            if rows.size == 0:
                continue
            eligible = np.flatnonzero(slot_labels != x)
            units = _fill_passes(eligible, counts, rows.size * per)
            taken[rows] = units.reshape(rows.size, per)
            counts += np.bincount(units, minlength=n_slots)
    else:
        units = _fill_passes(np.arange(n_slots), counts, revs.size * per)
        taken[:] = units.reshape(revs.size, per)
        counts += np.bincount(units, minlength=n_slots)
        _fix_self_slots(taken, revs, occupants)

    _repair_balance(taken, counts, slot_labels, rev_labels, occupants, revs)
    return occupants[taken]


def _fix_self_slots(taken: np.ndarray, revs: np.ndarray, occupants: np.ndarray) -> None:
    """Swap away review slots whose occupant is the reviewer itself.

    Swaps preserve per-slot loads exactly; partners are scanned in a fixed
    order so the result is deterministic.
    """
    self_slot = np.full(revs.size, -1, dtype=np.int64)
    slot_of = {int(occupants[s]): s for s in range(occupants.size)}
    for i, r in enumerate(revs):
        self_slot[i] = slot_of.get(int(r), -1)
    n_rows = taken.shape[0]
    for i in range(n_rows):
        own = self_slot[i]
        if own < 0 or not (taken[i] == own).any():
            continue
        col = int(np.flatnonzero(taken[i] == own)[0])
        done = False
        for j in range(n_rows):
            if j == i or done:
                continue
            row_i = set(taken[i].tolist())
            for col2 in range(taken.shape[1]):
                s2 = taken[j, col2]
                if s2 == own or s2 in row_i or s2 == self_slot[j]:
                    continue
                if (taken[j] == own).any():
                    continue
                taken[i, col] = s2
                taken[j, col2] = own
                done = True
                break
        if not done:  # pragma: no cover - needs a pathologically tiny pool
            raise InfeasibilityError(
                f"cannot place reviewer {int(revs[i])} without a self-review"
            )


def _repair_balance(
    taken: np.ndarray,
    counts: np.ndarray,
    slot_labels: np.ndarray | None,
    rev_labels: np.ndarray | None,
    occupants: np.ndarray,
    revs: np.ndarray,
) -> None:
    """Move single reviews from overloaded to underloaded slots in place."""

    def eligible(row: int, slot: int) -> bool:
        if slot_labels is not None:
            return slot_labels[slot] != rev_labels[row]
        return occupants[slot] != revs[row]

    while counts.max() - counts.min() >= 2:
        moved = False
        hi_order = np.lexsort((np.arange(counts.size), -counts))
        lo_order = np.lexsort((np.arange(counts.size), counts))
        for s_hi in hi_order:
            if moved:
                break
            rows, cols = np.nonzero(taken == s_hi)
            for s_lo in lo_order:
                if counts[s_hi] - counts[s_lo] < 2:
                    break  # remaining pairs are no further apart
                for row, col in zip(rows, cols):
                    if not eligible(row, s_lo) or (taken[row] == s_lo).any():
                        continue
                    taken[row, col] = s_lo
                    counts[s_hi] -= 1
                    counts[s_lo] += 1
                    moved = True
                    break
                if moved:
                    break
        if not moved:
            break  # every remaining imbalance is structural


def assign_reviews(
    reviewers: object,
    candidates: object,
    per_reviewer: int,
    clustering: Clustering | None = None,
    rng: np.random.Generator | None = None,
) -> Assignment:
    """Assign each reviewer ``per_reviewer`` distinct candidates.

    No reviewer is assigned itself, nor (with a clustering) anyone from its
    own cluster. Review load over candidates is balanced to within one
    whenever a legal rebalancing move exists. Deterministic given the
    generator state.
    """
    if rng is None:
        raise InvalidInputError("rng is required")
    revs = np.unique(np.asarray(list(reviewers), dtype=np.int64))
    cands = np.unique(np.asarray(list(candidates), dtype=np.int64))
    per = int(per_reviewer)
    if revs.size == 0 or cands.size == 0:
        raise InvalidInputError("reviewers and candidates must be non-empty")
    if per < 1:
        raise InvalidInputError("per_reviewer must be >= 1")
    if clustering is not None:
        limit = clustering.n
        if revs.max() >= limit or cands.max() >= limit or revs.min() < 0 or cands.min() < 0:
            raise InvalidInputError("agent index outside the clustering")
        cand_sizes = np.bincount(clustering.cluster_of[cands], minlength=clustering.c)
        for r in revs:
            pool = cands.size - cand_sizes[clustering.cluster_of[r]]
            if pool < per:
                raise InfeasibilityError(
                    f"reviewer {int(r)} has only {int(pool)} eligible candidates, "
                    f"needs {per}"
                )
    else:
        in_pool = np.isin(revs, cands)
        for r, self_in in zip(revs, in_pool):
            pool = cands.size - int(self_in)
            if pool < per:
                raise InfeasibilityError(
                    f"reviewer {int(r)} has only {pool} eligible candidates, needs {per}"
                )

    if clustering is None and np.array_equal(revs, cands):
        matrix = _circulant_self(revs, per, rng)
    else:
        matrix = _deal_slots(revs, cands, per, clustering, rng)
    return Assignment(reviewers=revs, reviewee_ids=matrix, per_reviewer=per)
