"""Tests for the analytic review-gain model and its binomial oracle."""

from __future__ import annotations

import math

import pytest

from peerkit import (
    InvalidInputError,
    accept_probability,
    argmax_gain,
    default_threshold,
    delta_p,
    mc_accept_probability,
    stream,
)


def low_noise_profile(n: int = 40, k: int = 10, width: float = 0.8) -> list[float]:
    """Support probabilities near 1 above the cut, near 0 below, smooth
    only around the boundary."""
    return [1 / (1 + math.exp((i - (k - 0.5)) / width)) for i in range(n)]


def high_noise_profile(n: int = 40, spread: float = 0.02) -> list[float]:
    return [0.51 - spread * i / (n - 1) for i in range(n)]


class TestAcceptProbability:
    def test_at_threshold(self):
        for m in (1, 10, 100):
            assert accept_probability(0.5, 0.5, m) == pytest.approx(0.5)

    def test_monotone_limit_above_threshold(self):
        values = [accept_probability(0.6, 0.5, m) for m in (10, 100, 1000, 100_000)]
        assert all(a < b for a, b in zip(values, values[1:]))
        assert values[-1] > 0.999

    def test_monotone_decreasing_below_threshold(self):
        values = [accept_probability(0.4, 0.5, m) for m in (10, 100, 1000)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_monotone_in_p(self):
        probs = [accept_probability(p, 0.5, 30) for p in (0.2, 0.4, 0.6, 0.8)]
        assert all(a < b for a, b in zip(probs, probs[1:]))

    def test_degenerate_items(self):
        assert accept_probability(1.0, 0.7, 5) == 1.0
        assert accept_probability(0.0, 0.3, 5) == 0.0

    def test_against_binomial_oracle(self):
        # p=0.6, t=0.5, m=100: analytic within 0.01 of a large Monte Carlo
        analytic = accept_probability(0.6, 0.5, 100)
        oracle = mc_accept_probability(0.6, 0.5, 100, 1_000_000, stream(200))
        assert abs(analytic - oracle) < 0.01


class TestDeltaP:
    def test_zero_at_threshold(self):
        result = delta_p(0.5, 0.5, 20, 20)
        assert result.exact == 0.0
        assert result.midpoint == 0.0

    def test_sign_matches_side_of_threshold(self):
        assert delta_p(0.6, 0.5, 20, 20).exact > 0
        assert delta_p(0.4, 0.5, 20, 20).exact < 0

    def test_midpoint_close_to_exact_for_moderate_z(self):
        # within 10% relative error while |z| <= 2
        m, x = 20, 20
        for t in (0.4, 0.5, 0.6):
            for p in [t + d for d in (-0.2, -0.1, -0.05, 0.05, 0.1, 0.2)]:
                if not 0 < p < 1:
                    continue
                b = math.sqrt(p * (1 - p))
                if abs((p - t) / b) * math.sqrt(m + x) > 2:
                    continue
                result = delta_p(p, t, m, x)
                assert result.midpoint == pytest.approx(result.exact, rel=0.10)

    def test_requires_positive_x(self):
        with pytest.raises(InvalidInputError):
            delta_p(0.6, 0.5, 20, 0)


class TestArgmaxGain:
    def test_low_noise_points_near_the_cut(self):
        profile = low_noise_profile()
        t = default_threshold(profile, 10)
        where = argmax_gain(profile, t, 20, 20)
        assert where.by_delta in {7, 8, 9}  # at or just below the 10th item
        assert where.by_condition in {7, 8, 9}

    def test_high_noise_points_at_the_top(self):
        profile = high_noise_profile()
        t = default_threshold(profile, 10)
        where = argmax_gain(profile, t, 20, 20)
        assert where.by_delta == 0
        assert where.by_condition == 0

    def test_tie_prefers_lower_index(self):
        # two identical items tie exactly
        profile = [0.7, 0.7, 0.2]
        where = argmax_gain(profile, 0.5, 10, 10)
        assert where.by_delta == 0

    def test_requires_sorted_profile(self):
        with pytest.raises(InvalidInputError):
            argmax_gain([0.2, 0.8], 0.5, 10, 10)

    def test_interpolation_moves_argmax_toward_top(self):
        low = low_noise_profile()
        high = high_noise_profile()
        indices = []
        for step in range(20):
            lam = step / 19
            profile = [(1 - lam) * a + lam * b for a, b in zip(low, high)]
            t = default_threshold(profile, 10)
            indices.append(argmax_gain(profile, t, 20, 20).by_delta)
        assert all(a >= b for a, b in zip(indices, indices[1:]))
        assert indices[0] in {7, 8, 9} and indices[-1] == 0


class TestMcAcceptProbability:
    def test_certain_item(self):
        assert mc_accept_probability(1.0, 0.9, 10, 1000, stream(201)) == 1.0

    def test_hopeless_item(self):
        assert mc_accept_probability(0.0, 0.1, 10, 1000, stream(202)) == 0.0

    def test_exact_binomial_tail(self):
        # P(Binomial(10, 1/2) >= 5) = 638/1024
        estimate = mc_accept_probability(0.5, 0.5, 10, 1_000_000, stream(203))
        assert estimate == pytest.approx(0.623046875, abs=0.005)


class TestDefaultThreshold:
    def test_boundary_midpoint(self):
        assert default_threshold([0.9, 0.6, 0.2], 1) == pytest.approx(0.75)

    def test_requires_interior_k(self):
        with pytest.raises(InvalidInputError):
            default_threshold([0.9, 0.6], 2)
