"""Acceptance suite: every project criterion at its stated tolerance.

The Monte Carlo criteria run at their full trial counts (10,000 paired
trials where stated), so this module takes substantially longer than the
unit tests; run it with `pytest tests/test_acceptance.py -v -s` to see one
PASS line per criterion as it completes.
"""

from __future__ import annotations

import itertools
import json
import math
import time

import numpy as np
import pytest

from peerkit import (
    Clustering,
    RankingProfile,
    TwoStageParams,
    accept_probability,
    argmax_gain,
    default_threshold,
    kendall_tau,
    load_config,
    make_clusters,
    mallows_pmf,
    mc_accept_probability,
    randomized_round,
    randomized_round_batch,
    run_single_stage,
    run_sweep,
    run_two_stage,
    sample_mallows_batch,
    stream,
)
from peerkit.metrics import precision_at_k

SEED = 20260808


def report(name: str, detail: str) -> None:
    print(f"[acceptance] {name}: PASS ({detail})")


def trial_rankings(n: int, phi: float, trial: int) -> RankingProfile:
    rng = stream(SEED, "rankings", n, phi, trial)
    return RankingProfile(sample_mallows_batch(np.arange(n), phi, rng, size=n))


def test_01_mallows_sampler_matches_exact_pmf():
    """n=4, phi in {0.2, 0.5, 0.8, 0.95}: TV(200k draws, exact pmf) < 0.01,
    under 10 seconds."""
    started = time.perf_counter()
    sigma = [0, 1, 2, 3]
    weights = np.array([64, 16, 4, 1])
    worst = 0.0
    for phi in (0.2, 0.5, 0.8, 0.95):
        orders = sample_mallows_batch(np.arange(4), phi, stream(SEED, "tv", phi), 200_000)
        encoded = orders @ weights
        values, counts = np.unique(encoded, return_counts=True)
        empirical = dict(zip(values.tolist(), (counts / 200_000).tolist()))
        tv = 0.5 * sum(
            abs(empirical.get(int(np.dot(p, weights)), 0.0) - mallows_pmf(list(p), sigma, phi))
            for p in itertools.permutations(range(4))
        )
        worst = max(worst, tv)
        assert tv < 0.01, f"phi={phi}: TV={tv:.5f}"
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0
    report("01 sampler total variation", f"worst TV {worst:.5f}, {elapsed:.1f}s")


def test_02_kendall_tau_equals_brute_force():
    """1,000 random ranking pairs with n <= 50: exact agreement with the
    O(n^2) pair count."""

    def brute(a, b):
        pos_a = {v: i for i, v in enumerate(a)}
        pos_b = {v: i for i, v in enumerate(b)}
        return sum(
            1
            for i in range(len(a))
            for j in range(i + 1, len(a))
            if (pos_a[i] - pos_a[j]) * (pos_b[i] - pos_b[j]) < 0
        )

    rng = stream(SEED, "kendall")
    for _ in range(1000):
        n = int(rng.integers(2, 51))
        a, b = rng.permutation(n), rng.permutation(n)
        assert kendall_tau(a, b) == brute(a.tolist(), b.tolist())
    report("02 kendall-tau oracle equivalence", "1000 pairs, n <= 50, exact")


def test_03_randomized_rounding_contract():
    """50 random share vectors (c <= 10), 100,000 draws each: every draw
    sums exactly, stays within floor/ceil, and matches its share in
    expectation within 0.01."""
    gen = stream(SEED, "rounding")
    worst = 0.0
    for vector in range(50):
        c = int(gen.integers(2, 11))
        raw = gen.random(c) * 3 + 0.01
        k = max(1, int(round(raw.sum())))
        shares = raw * (k / raw.sum())
        quotas = randomized_round_batch(shares, stream(SEED, "rounding", vector), 100_000)
        assert (quotas.sum(axis=1) == k).all()
        assert (quotas >= np.floor(shares)).all()
        assert (quotas <= np.ceil(shares)).all()
        worst = max(worst, float(np.abs(quotas.mean(axis=0) - shares).max()))
        assert worst < 0.01
    # the scalar entry point follows the identical contract
    share_map = {0: 1.3, 1: 0.9, 2: 1.8}
    rng = stream(SEED, "rounding-scalar")
    for _ in range(2000):
        q = randomized_round(share_map, rng)
        assert sum(q.values()) == 4
        assert all(math.floor(share_map[x]) <= q[x] <= math.ceil(share_map[x]) for x in q)
    report("03 randomized rounding", f"50 vectors x 100k draws, worst E-error {worst:.4f}")


def test_04_strategyproofness_search():
    """500 instances x 20 unilateral deviations, rounding draws fixed:
    partition and edp never change the deviator's status (single- and
    two-stage); vanilla must show at least one violation in the same
    search."""
    n, m, phi = 24, 6, 0.5
    f, h, l = 2, 1, 6
    impartial_violations = {"partition1": 0, "partition2": 0, "edp1": 0, "edp2": 0}
    vanilla_violations = 0

    for inst in range(500):
        k = (5, 6, 7)[inst % 3]
        orders = trial_rankings(n, phi, inst)
        cl2 = make_clusters(n, 2, stream(SEED, "sp-cl2", inst))
        cl3 = make_clusters(n, 3, stream(SEED, "sp-cl3", inst))
        p_one = TwoStageParams(n=n, k=k, m=m, phi=phi, c=2)
        p_two = TwoStageParams(n=n, k=k, m=m, phi=phi, c=2, f=f, h=h, l=l)
        e_one = TwoStageParams(n=n, k=k, m=m, phi=phi, c=3)
        e_two = TwoStageParams(n=n, k=k, m=m, phi=phi, c=3, f=f, h=h, l=l)
        v_one = TwoStageParams(n=n, k=k, m=m, phi=phi, c=1)

        base = {
            "partition1": run_single_stage("partition", p_one, orders, cl2, stream(SEED, "sp-p1", inst)),
            "edp1": run_single_stage("edp", e_one, orders, cl3, stream(SEED, "sp-e1", inst)),
            "vanilla": run_single_stage("vanilla", v_one, orders, None, stream(SEED, "sp-v", inst)),
        }
        base["partition2"], _ = run_two_stage(
            "partition", p_two, orders, cl2, stream(SEED, "sp-p2", inst)
        )
        edp_two, edp_trace = run_two_stage(
            "edp", e_two, orders, cl3, stream(SEED, "sp-e2", inst)
        )
        base["edp2"] = edp_two
        edp_one_pins = {"select": base["edp1"].quotas}
        edp_two_pins = dict(edp_trace.quotas)

        dev_rng = stream(SEED, "sp-dev", inst)
        for _ in range(20):
            agent = int(dev_rng.integers(n))
            deviated = orders.orders.copy()
            deviated[agent] = dev_rng.permutation(n)

            reruns = {
                "partition1": run_single_stage(
                    "partition", p_one, deviated, cl2, stream(SEED, "sp-p1", inst)
                ),
                "partition2": run_two_stage(
                    "partition", p_two, deviated, cl2, stream(SEED, "sp-p2", inst)
                )[0],
                "edp1": run_single_stage(
                    "edp", e_one, deviated, cl3, stream(SEED, "sp-e1", inst),
                    pinned_quotas=edp_one_pins,
                ),
                "edp2": run_two_stage(
                    "edp", e_two, deviated, cl3, stream(SEED, "sp-e2", inst),
                    pinned_quotas=edp_two_pins,
                )[0],
            }
            for key, rerun in reruns.items():
                if (agent in rerun.selected) != (agent in base[key].selected):
                    impartial_violations[key] += 1
            vanilla_rerun = run_single_stage(
                "vanilla", v_one, deviated, None, stream(SEED, "sp-v", inst)
            )
            if (agent in vanilla_rerun.selected) != (agent in base["vanilla"].selected):
                vanilla_violations += 1

    assert impartial_violations == {
        "partition1": 0, "partition2": 0, "edp1": 0, "edp2": 0,
    }, impartial_violations
    assert vanilla_violations >= 1
    report(
        "04 strategyproofness",
        f"0 violations over 10,000 deviated runs per impartial variant; "
        f"vanilla violated {vanilla_violations} times",
    )


def test_05_noiseless_recovery():
    """phi=0: every mechanism on the no-clustering path recovers the exact
    top-k; partition with half the top-k in each of two clusters does too."""
    checked = 0
    for trial in range(50):
        n, k, m = 30, 6, 5
        orders = trial_rankings(n, 0.0, trial)
        for mech in ("vanilla", "partition", "edp"):
            params = TwoStageParams(n=n, k=k, m=m, phi=0.0, c=1)
            result = run_single_stage(mech, params, orders, None, stream(SEED, "nr", trial))
            assert result.selected == frozenset(range(k))
            assert precision_at_k(result.selected, k) == 1.0
            checked += 1
        # exactly half the top-k in each cluster
        labels = np.zeros(n, dtype=int)
        labels[1::2] = 1
        clustering = Clustering.from_labels(labels)
        params = TwoStageParams(n=n, k=k, m=m, phi=0.0, c=2)
        result = run_single_stage(
            "partition", params, orders, clustering, stream(SEED, "nr2", trial)
        )
        assert precision_at_k(result.selected, k) == 1.0
        checked += 1
    report("05 noiseless recovery", f"{checked} runs, precision exactly 1.0")


@pytest.fixture(scope="module")
def vanilla_gain():
    """Selection-frequency gain curves for the vanilla mechanism,
    n=100, 1 vs 20 reviews, 10,000 paired trials."""
    n, k_small, k_large, trials = 100, 20, 80, 10_000
    started = time.perf_counter()
    counts = {
        (phi, m, k): np.zeros(n)
        for phi in (0.2, 0.95)
        for m in (1, 20)
        for k in ((k_small, k_large) if phi == 0.2 else (k_small,))
    }
    for trial in range(trials):
        for phi in (0.2, 0.95):
            orders = trial_rankings(n, phi, trial)
            for m in (1, 20):
                run_rng = stream(SEED, "vg", phi, m, trial)
                params = TwoStageParams(n=n, k=k_small, m=m, phi=phi)
                result = run_single_stage("vanilla", params, orders, None, run_rng)
                counts[(phi, m, k_small)][list(result.selected)] += 1
                if phi == 0.2:
                    params80 = TwoStageParams(n=n, k=k_large, m=m, phi=phi)
                    run80 = stream(SEED, "vg80", m, trial)
                    result80 = run_single_stage("vanilla", params80, orders, None, run80)
                    counts[(phi, m, k_large)][list(result80.selected)] += 1
    deltas = {
        (phi, k): (counts[(phi, 20, k)] - counts[(phi, 1, k)]) / trials
        for phi, k in ((0.2, k_small), (0.95, k_small), (0.2, k_large))
    }
    return {"deltas": deltas, "elapsed": time.perf_counter() - started, "trials": trials}


def test_06_gain_curve_shape(vanilla_gain):
    """Low noise: the items just at the cut gain and lose most (argmax in
    16..19, argmin in 20..23, 0-based); high noise moves the peak strictly
    toward the top. Under five minutes."""
    delta_low = vanilla_gain["deltas"][(0.2, 20)]
    delta_high = vanilla_gain["deltas"][(0.95, 20)]
    argmax_low = int(np.argmax(delta_low))
    argmin_low = int(np.argmin(delta_low))
    argmax_high = int(np.argmax(delta_high))
    assert argmax_low in {16, 17, 18, 19}, argmax_low
    assert argmin_low in {20, 21, 22, 23}, argmin_low
    assert argmax_high < argmax_low, (argmax_high, argmax_low)
    assert vanilla_gain["elapsed"] < 300.0
    report(
        "06 gain-curve shape",
        f"phi=0.2 argmax {argmax_low}, argmin {argmin_low}; phi=0.95 argmax "
        f"{argmax_high}; computed in {vanilla_gain['elapsed']:.0f}s",
    )


def test_07_mirror_symmetry(vanilla_gain):
    """Gains and losses around the cut mirror each other at phi=0.2:
    |delta[k-1-d] + delta[k+d]| < 0.02 for d in {0, 1, 2}."""
    delta = vanilla_gain["deltas"][(0.2, 20)]
    k = 20
    worst = 0.0
    for d in (0, 1, 2):
        gap = abs(delta[k - 1 - d] + delta[k + d])
        worst = max(worst, gap)
        assert gap < 0.02, (d, gap)
    report("07 mirror symmetry", f"worst |sum| {worst:.4f} < 0.02")


def test_08_selection_size_insensitivity(vanilla_gain):
    """Selecting the top 20 or the top 80 produces essentially the same
    curve once the larger selection is mirrored and sign-flipped
    (selecting 80 is rejecting the bottom 20): correlation > 0.9."""
    d20 = vanilla_gain["deltas"][(0.2, 20)]
    d80 = vanilla_gain["deltas"][(0.2, 80)]
    correlation = float(np.corrcoef(d20, -d80[::-1])[0, 1])
    assert correlation > 0.9, correlation
    report("08 selection-size insensitivity", f"correlation {correlation:.4f} > 0.9")


@pytest.fixture(scope="module")
def cluster_gain():
    """Gain curves across cluster counts, n=200, k=50, phi=0.2, 1 vs 20
    reviews, 10,000 paired trials."""
    n, k, phi, trials = 200, 50, 0.2, 10_000
    configs = [("partition", 3), ("partition", 50), ("edp", 3), ("edp", 20)]
    counts = {(mech, c, m): np.zeros(n) for mech, c in configs for m in (1, 20)}
    for trial in range(trials):
        orders = trial_rankings(n, phi, trial)
        clusterings = {
            c: make_clusters(n, c, stream(SEED, "cg-cl", c, trial)) for c in (3, 20, 50)
        }
        for mech, c in configs:
            for m in (1, 20):
                params = TwoStageParams(n=n, k=k, m=m, phi=phi, c=c)
                run_rng = stream(SEED, "cg", c, m, trial)
                result = run_single_stage(mech, params, orders, clusterings[c], run_rng)
                counts[(mech, c, m)][list(result.selected)] += 1
    return {
        (mech, c): (counts[(mech, c, 20)] - counts[(mech, c, 1)]) / trials
        for mech, c in configs
    }


def test_09_cluster_count_trends(cluster_gain):
    """More clusters drain partition's benefit from extra reviews toward
    noise (peak at c=50 below half the c=3 peak) while exact dollar
    partition's benefit grows (peak at c=20 above the c=3 peak).

    Known-red (partition leg): at phi=0.2 a single review already places
    80% of items exactly, so partition's true peak gains are ~0.004 (c=3)
    and ~0.003 (c=50) — both at the 10,000-trial noise floor, where the
    max-over-agents statistic cannot show a 2x separation. The check is
    kept at its stated strength rather than loosened; the edp leg and the
    qualitative "c=50 looks like noise" behavior do hold.
    """
    peak = {key: float(curve.max()) for key, curve in cluster_gain.items()}
    detail = (
        f"partition peaks c3 {peak[('partition', 3)]:.4f} vs c50 "
        f"{peak[('partition', 50)]:.4f}; edp peaks c3 {peak[('edp', 3)]:.4f} "
        f"vs c20 {peak[('edp', 20)]:.4f}"
    )
    edp_ok = peak[("edp", 20)] > peak[("edp", 3)]
    partition_ok = peak[("partition", 50)] < 0.5 * peak[("partition", 3)]
    status = f"edp leg {'PASS' if edp_ok else 'FAIL'}, partition leg " \
             f"{'PASS' if partition_ok else 'FAIL'}"
    print(f"[acceptance] 09 cluster-count trends: {status} ({detail})")
    assert edp_ok, detail
    assert partition_ok, detail


def test_10_two_stage_beats_single_stage():
    """n=200, k=10, m=7, phi=0.95, h=0, l=150: for every mechanism and
    every f in {1,2,3}, the paired two-minus-single precision difference
    is positive at two standard errors. 10,000 trials."""
    n, k, m, phi, trials = 200, 10, 7, 0.95, 10_000
    mechs = [("vanilla", 1), ("partition", 2), ("edp", 3)]
    diff_sum = {(mech, f): 0.0 for mech, _ in mechs for f in (1, 2, 3)}
    diff_sumsq = {(mech, f): 0.0 for mech, _ in mechs for f in (1, 2, 3)}
    for trial in range(trials):
        orders = trial_rankings(n, phi, trial)
        clusterings = {
            c: make_clusters(n, c, stream(SEED, "ts-cl", c, trial)) for c in (2, 3)
        }
        for mech, c in mechs:
            clustering = clusterings.get(c)
            single_params = TwoStageParams(n=n, k=k, m=m, phi=phi, c=c)
            single = run_single_stage(
                mech, single_params, orders, clustering, stream(SEED, "ts", c, trial)
            )
            base = precision_at_k(single.selected, k)
            for f in (1, 2, 3):
                staged_params = TwoStageParams(
                    n=n, k=k, m=m, phi=phi, c=c, f=f, h=0, l=150
                )
                staged, _ = run_two_stage(
                    mech, staged_params, orders, clustering, stream(SEED, "ts", c, trial)
                )
                diff = precision_at_k(staged.selected, k) - base
                diff_sum[(mech, f)] += diff
                diff_sumsq[(mech, f)] += diff * diff
    lines = []
    for mech, _ in mechs:
        for f in (1, 2, 3):
            mean = diff_sum[(mech, f)] / trials
            var = (diff_sumsq[(mech, f)] - trials * mean * mean) / (trials - 1)
            stderr = math.sqrt(max(var, 0.0) / trials)
            assert mean > 2 * stderr, (mech, f, mean, stderr)
            lines.append(f"{mech}/f={f}: +{mean:.4f} ({mean / stderr:.0f} se)")
    report("10 two-stage beats single-stage", "; ".join(lines))


def test_11_outright_acceptance_harm():
    """n=200, k=10, m=7, f=3, l=100, phi=0.95: accepting even one agent
    after the first round does not improve precision (paired trials)."""
    n, k, m, f, l, phi, trials = 200, 10, 7, 3, 100, 0.95, 10_000
    mechs = [("vanilla", 1), ("partition", 2), ("edp", 3)]
    totals = {(mech, h): 0.0 for mech, _ in mechs for h in (0, 1)}
    for trial in range(trials):
        orders = trial_rankings(n, phi, trial)
        clusterings = {
            c: make_clusters(n, c, stream(SEED, "oa-cl", c, trial)) for c in (2, 3)
        }
        for mech, c in mechs:
            clustering = clusterings.get(c)
            for h in (0, 1):
                params = TwoStageParams(n=n, k=k, m=m, phi=phi, c=c, f=f, h=h, l=l)
                result, _ = run_two_stage(
                    mech, params, orders, clustering, stream(SEED, "oa", c, trial)
                )
                totals[(mech, h)] += precision_at_k(result.selected, k)
    lines = []
    for mech, _ in mechs:
        h0 = totals[(mech, 0)] / trials
        h1 = totals[(mech, 1)] / trials
        assert h1 <= h0, (mech, h0, h1)
        lines.append(f"{mech}: h0 {h0:.4f} >= h1 {h1:.4f}")
    report("11 outright-acceptance harm", "; ".join(lines))


def test_12_analytic_model():
    """Analytic acceptance probabilities within 0.015 of a million-draw
    binomial oracle on the m >= 30 grid; the gain-maximizing item sits at
    the cut under low noise, at the top under high noise, and moves
    monotonically between the two regimes."""
    worst = 0.0
    for m in (30, 50, 100):
        t = (math.floor(0.5 * m) + 0.5) / m  # off the estimator's lattice
        for p in (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8):
            analytic = accept_probability(p, t, m)
            oracle = mc_accept_probability(p, t, m, 1_000_000, stream(SEED, "th", m, p))
            worst = max(worst, abs(analytic - oracle))
            assert worst < 0.015, (m, p, worst)

    n, k = 40, 10
    low = [1 / (1 + math.exp((i - (k - 0.5)) / 0.8)) for i in range(n)]
    high = [0.51 - 0.02 * i / (n - 1) for i in range(n)]
    low_argmax = argmax_gain(low, default_threshold(low, k), 20, 20).by_delta
    high_argmax = argmax_gain(high, default_threshold(high, k), 20, 20).by_delta
    assert low_argmax in {k - 3, k - 2, k - 1}, low_argmax
    assert high_argmax == 0, high_argmax
    path = []
    for step in range(20):
        lam = step / 19
        profile = [(1 - lam) * a + lam * b for a, b in zip(low, high)]
        path.append(argmax_gain(profile, default_threshold(profile, k), 20, 20).by_delta)
    assert all(a >= b for a, b in zip(path, path[1:])), path
    report(
        "12 analytic model",
        f"worst oracle gap {worst:.4f}; argmax low {low_argmax}, high {high_argmax}, "
        f"path monotone",
    )


def test_13_reproducibility(tmp_path):
    """A sweep rerun with the same config and seed is byte-identical,
    serial or parallel."""
    config_path = tmp_path / "sweep.json"
    config_path.write_text(json.dumps({
        "n": 24,
        "k": [4, 6],
        "m": [3],
        "phi": [0.5, 0.9],
        "c": [2],
        "mechanisms": ["vanilla", "partition", "edp"],
        "trials": 60,
        "seed": SEED,
    }))
    config = load_config(config_path)
    paths = [tmp_path / name for name in ("a.csv", "b.csv", "c.csv")]
    run_sweep(config, threads=1, out=paths[0])
    run_sweep(config, threads=1, out=paths[1])
    run_sweep(config, threads=3, out=paths[2])
    first = paths[0].read_bytes()
    assert paths[1].read_bytes() == first
    assert paths[2].read_bytes() == first
    assert len(first.splitlines()) == 1 + 4 * 3
    report("13 reproducibility", "serial rerun and 3-process run byte-identical")
