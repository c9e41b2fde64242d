"""Mallows ranking noise: Kendall-tau distance, exact pmf, and sampling.

A ranking is a permutation of the agent indices ``0..n-1``; position 0 is
the best-ranked agent. The identity ranking serves as the ground truth
throughout the library, so agent ``i`` is the true ``(i+1)``-th best.

The noise model places probability proportional to ``phi ** d(r, sigma)``
on each ranking ``r``, where ``d`` is the Kendall-tau distance to the
reference ranking ``sigma`` and ``phi`` in ``[0, 1]`` is the dispersion:
``phi = 0`` is a point mass on ``sigma``, ``phi = 1`` is uniform.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "kendall_tau",
    "mallows_pmf",
    "sample_mallows",
    "sample_mallows_batch",
]

# Cap on rows*columns touched per decode chunk; keeps working memory small
# while amortizing per-call numpy overhead.
_DECODE_CHUNK_CELLS = 4_000_000


def as_ranking(r: object, name: str = "ranking") -> np.ndarray:
    """Validate that ``r`` is a permutation of ``0..n-1`` and return it."""
    arr = np.asarray(r, dtype=np.int64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty 1-d sequence")
    n = arr.size
    if ((arr < 0) | (arr >= n)).any():
        raise InvalidInputError(f"{name} is not a permutation of 0..{n - 1}")
    seen = np.zeros(n, dtype=bool)
    seen[arr] = True
    if not seen.all():
        raise InvalidInputError(f"{name} is not a permutation of 0..{n - 1}")
    return arr


def check_phi(phi: float) -> float:
    if not 0.0 <= phi <= 1.0:
        raise InvalidInputError(f"dispersion must lie in [0, 1], got {phi!r}")
    return float(phi)


def _merge_count(seq: list[int]) -> tuple[list[int], int]:
    if len(seq) <= 1:
        return seq, 0
    mid = len(seq) // 2
    left, a = _merge_count(seq[:mid])
    right, b = _merge_count(seq[mid:])
    merged: list[int] = []
    count = a + b
    i = j = 0
    while i < len(left) and j < len(right):
        if left[i] <= right[j]:
            merged.append(left[i])
            i += 1
        else:
            merged.append(right[j])
            count += len(left) - i
            j += 1
    merged.extend(left[i:])
    merged.extend(right[j:])
    return merged, count


def kendall_tau(a: object, b: object) -> int:
    """Number of unordered pairs ranked in opposite order by ``a`` and ``b``.

    Computed by inversion counting over the composed permutation
    (merge sort, O(n log n)). Symmetric in its arguments; ranges from 0
    (identical rankings) to ``n*(n-1)/2`` (full reversal).
    """
    ra = as_ranking(a, "a")
    rb = as_ranking(b, "b")
    if ra.size != rb.size:
        raise InvalidInputError(
            f"rankings have different lengths: {ra.size} vs {rb.size}"
        )
    pos_in_a = np.empty(ra.size, dtype=np.int64)
    pos_in_a[ra] = np.arange(ra.size)
    composed = pos_in_a[rb]
    _, inversions = _merge_count(composed.tolist())
    return inversions


def mallows_pmf(r: object, sigma: object, phi: float) -> float:
    """Exact probability of ranking ``r`` under the noise model.

    Returns ``phi**d(r, sigma) / Z`` with the normalizer
    ``Z = prod_{j=1..n} (1 + phi + ... + phi**(j-1))``. Intended for
    enumeration-scale use (small n); sums to 1 over all n! rankings.
    ``phi = 0`` is treated as a point mass on ``sigma``.
    """
    phi = check_phi(phi)
    d = kendall_tau(r, sigma)
    if phi == 0.0:
        return 1.0 if d == 0 else 0.0
    n = as_ranking(r).size
    log_z = 0.0
    for j in range(1, n + 1):
        if phi == 1.0:
            log_z += math.log(j)
        else:
            log_z += math.log((1.0 - phi**j) / (1.0 - phi))
    return math.exp(d * math.log(phi) - log_z) if phi < 1.0 else math.exp(-log_z)


def _insertion_offsets(
    n: int, phi: float, rng: np.random.Generator, rows: int
) -> np.ndarray:
    """Sample the per-item insertion offsets of the repeated-insertion scheme.

    ``off[s, j]`` counts how many of the j better items end up ranked below
    item ``j`` in sample ``s``; it is distributed on ``{0..j}`` with
    probability proportional to ``phi**off``.
    """
    j = np.arange(n)
    if phi == 0.0:
        return np.zeros((rows, n), dtype=np.int32)
    u = rng.random((rows, n))
    if phi == 1.0:
        return np.minimum((u * (j + 1)).astype(np.int32), j.astype(np.int32))
    # Inverse-CDF of the truncated geometric: smallest d with
    # (1 - phi**(d+1)) >= u * (1 - phi**(j+1)).
    tail = phi ** (j + 1.0)
    y = 1.0 - u * (1.0 - tail)
    d = np.ceil(np.log(y) / math.log(phi) - 1.0)
    return np.clip(d, 0, j).astype(np.int32)


def _decode_offsets(off: np.ndarray) -> np.ndarray:
    """Turn insertion offsets into item positions (the inverse permutation)."""
    rows, n = off.shape
    pos = np.zeros((rows, n), dtype=np.int32)
    for j in range(1, n):
        p = (j - off[:, j]).astype(np.int32)
        placed = pos[:, :j]
        placed += placed >= p[:, None]
        pos[:, j] = p
    return pos


def sample_mallows_batch(
    sigma: object, phi: float, rng: np.random.Generator, size: int
) -> np.ndarray:
    """Draw ``size`` independent rankings around ``sigma``.

    Returns an ``(size, n)`` integer array whose rows are rankings
    (row[p] is the agent at position p). Uses the repeated-insertion
    construction, which realizes the target distribution exactly, with
    all draws vectorized across the batch.
    """
    ref = as_ranking(sigma, "sigma")
    phi = check_phi(phi)
    if size < 1:
        raise InvalidInputError("size must be >= 1")
    n = ref.size
    orders = np.empty((size, n), dtype=np.int64)
    chunk = max(1, _DECODE_CHUNK_CELLS // n)
    identity = bool((ref == np.arange(n)).all())
    for lo in range(0, size, chunk):
        hi = min(size, lo + chunk)
        off = _insertion_offsets(n, phi, rng, hi - lo)
        pos = _decode_offsets(off)
        block = np.argsort(pos, axis=1)
        orders[lo:hi] = block if identity else ref[block]
    return orders


def sample_mallows(sigma: object, phi: float, rng: np.random.Generator) -> np.ndarray:
    """Draw one ranking distributed exactly as :func:`mallows_pmf` prescribes."""
    return sample_mallows_batch(sigma, phi, rng, 1)[0]
