"""Tests for welfare, frequencies, exit detection and the conditional curve"""

import math

import numpy as np
import pytest
from engine import run_batch
from errors import UsageError
from metrics import (
    ExitDetector,
    conditional_frequency_curve,
    exit_fraction,
    exit_time,
    first_crossing_time,
    mean_duration,
    mean_welfare,
    median_duration,
    profile_frequencies,
    welfare_identity_gap,
)
from models import HistogramSpec
from records import TO_COOPERATION, TO_DEFECTION, PathResult


def _path(index, exit_to_cooperation=None, counts=(1, 0, 0, 3)):
    return PathResult(
        path_index=index,
        master_seed=0,
        horizon=sum(counts),
        window=sum(counts),
        mean_reward=(1.0, 1.0),
        mean_reward_full=(1.0, 1.0),
        profile_counts=counts,
        final_q=((1.0, 1.0), (1.0, 1.0)),
        exit_times={TO_COOPERATION: exit_to_cooperation, TO_DEFECTION: None},
    )


class TestExitTime:
    """Test suite for the two-consecutive-periods exit rule"""

    def test_exit_after_two_positive_periods(self):
        deltas = [[-1, -1], [-1, -1], [1, 1], [1, 1]]

        assert exit_time(deltas, TO_COOPERATION) == 2

    def test_single_positive_period_is_not_an_exit(self):
        deltas = [[1, 1], [-1, 1], [1, 1], [-1, -1]]

        assert exit_time(deltas, TO_COOPERATION) is None

    def test_both_agents_required(self):
        deltas = [[1, -1], [1, -1], [1, 1], [1, -1]]

        assert exit_time(deltas, TO_COOPERATION) is None

    def test_exit_to_defection(self):
        deltas = [[0.5, 0.2], [-0.1, -0.3], [-0.2, -0.1]]

        assert exit_time(deltas, TO_DEFECTION) == 1

    def test_zero_is_on_neither_side(self):
        deltas = [[0.0, 1.0], [0.0, 1.0]]

        assert exit_time(deltas, TO_COOPERATION) is None
        assert exit_time(deltas, TO_DEFECTION) is None

    def test_single_agent_series(self):
        assert exit_time(np.array([-1.0, 2.0, 3.0]), TO_COOPERATION) == 1

    def test_detector_keeps_first_exit(self):
        detector = ExitDetector(TO_COOPERATION)
        for t, row in enumerate([[1, 1], [1, 1], [-1, -1], [1, 1], [1, 1]]):
            detector.feed(t, row)

        assert detector.time == 0

    def test_unknown_direction(self):
        with pytest.raises(UsageError):
            exit_time([[1, 1]], "sideways")

    def test_first_crossing(self):
        deltas = [[-1, -1], [0.5, -1], [0.2, 0.1]]

        assert first_crossing_time(deltas, 0, TO_COOPERATION) == 1
        assert first_crossing_time(deltas, 1, TO_COOPERATION) == 2
        assert first_crossing_time(deltas, 1, TO_DEFECTION) == 0


class TestDurations:
    def test_median_counts_censored_as_infinite(self):
        assert median_duration([5, 9, None]) == 9.0
        assert median_duration([5, None, None, 1]) == math.inf

    def test_even_count_median(self):
        assert median_duration([4, 2, 8, 6]) == 5.0

    def test_all_censored_reports_horizon(self):
        assert median_duration([None, None], horizon=10000) == 10000.0

    def test_mean_with_horizon(self):
        assert mean_duration([10, None], horizon=30) == 20.0

    def test_mean_drops_censored_without_horizon(self):
        assert mean_duration([10, 20, None]) == 15.0

    def test_empty_times(self):
        with pytest.raises(UsageError):
            median_duration([])


class TestFrequencies:
    def test_profile_frequencies_pooled(self):
        paths = [_path(0, counts=(1, 0, 0, 3)), _path(1, counts=(3, 1, 0, 0))]

        assert profile_frequencies(paths) == pytest.approx((0.5, 0.125, 0.0, 0.375))

    def test_exit_fraction_counts_censored_as_no_exit(self):
        paths = [_path(0, 12), _path(1, None), _path(2, 40), _path(3, None)]

        assert exit_fraction(paths, TO_COOPERATION) == 0.5

    def test_no_results(self):
        with pytest.raises(UsageError):
            exit_fraction([])

    def test_frequencies_sum_to_one(self, pd_env, make_spec, make_sim):
        batch = run_batch(pd_env, (make_spec(), make_spec()), make_sim(), threads=1)

        assert sum(profile_frequencies(batch)) == pytest.approx(1.0)


class TestWelfare:
    """Test suite for windowed welfare"""

    def test_trace_window(self, pd_env, make_spec, make_sim):
        # Arrange
        sim = make_sim(horizon=200, num_paths=2, trace_level="full")
        batch = run_batch(pd_env, (make_spec(), make_spec()), sim, threads=1)

        # Act
        last = mean_welfare(batch.traces, window=50)

        # Assert
        expected = np.mean([t.rewards[150:].mean(0) for t in batch.traces], axis=0)
        assert last == pytest.approx(tuple(expected))

    def test_path_results_need_matching_window(self, pd_env, make_spec, make_sim):
        batch = run_batch(
            pd_env, (make_spec(), make_spec()), make_sim(window=100), threads=1
        )

        assert mean_welfare(batch, window=100) == pytest.approx(batch.pooled_mean())
        full = batch.pooled_mean(full=True)
        assert mean_welfare(batch, window=300) == pytest.approx(full)
        with pytest.raises(UsageError, match="needs traces"):
            mean_welfare(batch, window=50)

    def test_empty_window(self):
        with pytest.raises(UsageError):
            mean_welfare([_path(0)], window=0)

    def test_welfare_identity_when_x_plus_y_is_two(self, pd_env, make_spec, make_sim):
        """Welfare = 1 + f_CC for symmetric play with x + y = 2"""
        sim = make_sim(horizon=2000, num_paths=4)
        batch = run_batch(pd_env, (make_spec(), make_spec()), sim, threads=1)

        assert welfare_identity_gap(batch, x=2.5, y=-0.5) < 1e-9


class TestConditionalFrequency:
    """Test suite for Pr(delta_2 > 0 | delta_1 in bin)"""

    def test_bins_and_threshold(self):
        # Arrange
        spec = HistogramSpec(width=0.1, bins=2, min_count=2)
        deltas = np.array(
            [
                [0.05, 1.0],
                [0.07, -1.0],
                [0.03, 1.0],
                [-0.05, -1.0],
                [-0.06, -1.0],
                [0.15, 1.0],  # only one observation in bin 1
                [0.1, 1.0],  # on a bin edge, dropped
                [0.35, 1.0],  # beyond the bin range
            ]
        )

        # Act
        curve = conditional_frequency_curve([deltas], spec)

        # Assert
        assert [b.k for b in curve] == [-1, 0]
        assert curve[0].frequency == 0.0 and curve[0].count == 2
        assert curve[1].frequency == pytest.approx(2 / 3) and curve[1].count == 3

    def test_pools_several_series(self):
        spec = HistogramSpec(width=1.0, bins=1, min_count=4)
        a = np.array([[0.5, 1.0], [0.5, 1.0]])
        b = np.array([[0.5, -1.0], [0.5, 1.0]])

        curve = conditional_frequency_curve([a, b], spec)

        assert len(curve) == 1 and curve[0].frequency == 0.75

    def test_empty_curve(self):
        spec = HistogramSpec(width=0.1, bins=1, min_count=10)

        assert conditional_frequency_curve([np.array([[0.05, 1.0]])], spec) == []

    def test_bin_membership_follows_quotient(self):
        """3 * 0.1 divides to just above 3, so it sits inside bin 3"""
        spec = HistogramSpec(width=0.1, bins=5, min_count=1)
        deltas = np.array([[3 * 0.1, 1.0], [0.4, 1.0], [-0.5, 1.0], [-0.45, 1.0]])

        curve = conditional_frequency_curve([deltas], spec)

        assert [(b.k, b.count) for b in curve] == [(-5, 1), (3, 1)]

    def test_deterministic_favorable_run_predicts_other(
        self, pd_env, make_spec, make_sim
    ):
        """Without payoff shocks delta_1 is a near-perfect predictor of delta_2"""
        # Arrange
        spec = make_spec(alpha=0.1, epsilon=0.1)
        sim = make_sim(
            horizon=20000,
            num_paths=1,
            initial_q=((1.5, 1.4), (1.5, 1.4)),
            trace_level="full",
        )
        batch = run_batch(pd_env, (spec, spec), sim, threads=1)

        # Act
        curve = conditional_frequency_curve(
            batch.traces, HistogramSpec(width=0.02, bins=30, min_count=100)
        )

        # Assert
        positive = [b for b in curve if b.lower >= 0.04]
        hits = sum(b.frequency * b.count for b in positive)
        assert positive
        assert hits / sum(b.count for b in positive) > 0.8

    def test_needs_two_agents(self):
        with pytest.raises(UsageError):
            conditional_frequency_curve([np.array([0.1, 0.2])])
