"""
Unit tests for the learning kernel: Q-update, biased score, epsilon-greedy
selection and the seeded uniform streams.
"""

import random

import numpy as np
import pytest
from core import (
    TIE_BREAK,
    RngStream,
    biased_score,
    greedy_action,
    initial_table,
    q_update,
    select_action,
)
from errors import UsageError
from models import AgentSpec


class TestQUpdate:
    """Test suite for the asynchronous Q-update"""

    def test_update_played_action(self):
        """Target 0.05*2 + 0.95*1 = 1.05 blended at alpha=0.5"""
        # Act
        result = q_update((1.0, 1.0), action=0, reward=2.0, alpha=0.5, delta=0.95)

        # Assert
        assert result[0] == pytest.approx(1.025)
        assert result[1] == 1.0

    def test_full_replacement_without_discount(self):
        """alpha=1, delta=0 replaces the played entry by the reward"""
        result = q_update((3.7, 0.2), action=1, reward=-4.2, alpha=1.0, delta=0.0)

        assert result == (3.7, -4.2)

    def test_zero_step_is_identity(self):
        q = (0.3, 1.7, -2.0)

        result = q_update(q, action=2, reward=10.0, alpha=0.0, delta=0.9)

        assert result == q

    def test_max_uses_pre_update_table(self):
        """Updating the argmax entry discounts the old maximum"""
        # Arrange
        q = (2.0, 1.0)

        # Act
        result = q_update(q, action=0, reward=0.0, alpha=1.0, delta=0.5)

        # Assert: target = 0.5*0 + 0.5*2.0
        assert result[0] == pytest.approx(1.0)

    def test_action_out_of_range(self):
        with pytest.raises(UsageError, match="out of range"):
            q_update((1.0, 1.0), action=2, reward=0.0, alpha=0.5, delta=0.9)

    def test_unplayed_entries_untouched(self):
        """Only the played entry may change, for any table and action"""
        rng = random.Random(3)
        for _ in range(500):
            q = tuple(rng.uniform(-3, 3) for _ in range(5))
            action = rng.randrange(5)

            result = q_update(
                q, action, rng.uniform(-3, 3), rng.uniform(0.01, 1), rng.random() * 0.99
            )

            for a in range(5):
                if a != action:
                    assert result[a] == q[a]

    def test_boundedness_under_random_rewards(self):
        """Entries started in [m, M] stay in [m, M] for rewards in [m, M]"""
        # Arrange
        rng = random.Random(17)
        low, high = -0.5, 2.5
        q = (rng.uniform(low, high), rng.uniform(low, high))

        # Act / Assert
        for _ in range(20000):
            q = q_update(
                q,
                rng.randrange(2),
                rng.uniform(low, high),
                rng.uniform(0.01, 1.0),
                rng.uniform(0.0, 0.99),
            )
            assert low - 1e-12 <= min(q) and max(q) <= high + 1e-12

    def test_updated_entry_between_old_value_and_target(self):
        rng = random.Random(5)
        for _ in range(1000):
            q = (rng.uniform(0, 2), rng.uniform(0, 2))
            reward, alpha, delta = rng.uniform(-1, 3), rng.random(), rng.random() * 0.99
            target = (1 - delta) * reward + delta * max(q)

            updated = q_update(q, 0, reward, alpha, delta)[0]

            assert min(q[0], target) - 1e-12 <= updated <= max(q[0], target) + 1e-12


class TestInitialTable:
    def test_converts_to_float_tuple(self):
        assert initial_table([1, 2]) == (1.0, 2.0)

    def test_rejects_empty(self):
        with pytest.raises(UsageError):
            initial_table([])

    def test_rejects_non_finite(self):
        with pytest.raises(UsageError, match="finite"):
            initial_table([1.0, float("nan")])


class TestBiasedScore:
    """Test suite for Q(a) + b*G(a)"""

    def test_cooperation_bias(self, make_spec):
        spec = make_spec(bias=0.04, distortion=(1.0, 0.0))

        scores = biased_score((0.95, 1.0), spec)

        assert scores == pytest.approx((0.99, 1.0))

    def test_zero_bias_returns_values(self, make_spec):
        q = (0.7, 1.3)

        assert biased_score(q, make_spec(bias=0.0)) == q

    def test_duopoly_diagonal_distortion(self, make_spec):
        spec = make_spec(bias=0.03, distortion=(1.97, 2.44))

        scores = biased_score((2.0, 1.8), spec)

        assert scores == pytest.approx((2.0591, 1.8732))

    def test_distortion_length_mismatch(self, make_spec):
        with pytest.raises(UsageError, match="distortion"):
            biased_score((1.0, 1.0, 1.0), make_spec(bias=0.1))


class TestSelectAction:
    """Test suite for epsilon-greedy selection"""

    def test_tie_goes_to_lowest_index(self, make_spec):
        spec = make_spec(epsilon=0.0)
        rng = RngStream(1, 0)

        assert select_action((1.0, 1.0), spec, rng) == 0
        assert greedy_action((2.0, 1.0, 2.0), make_spec(distortion=(0.0,) * 3)) == 0
        assert TIE_BREAK == "lowest-index"

    def test_bias_too_small_to_flip(self, make_spec):
        """0.95 + 0.04 < 1.0, so the greedy action is D"""
        spec = make_spec(epsilon=0.0, bias=0.04)

        assert select_action((0.95, 1.0), spec, RngStream(1, 0)) == 1

    def test_bias_flips_choice(self, make_spec):
        spec = make_spec(epsilon=0.0, bias=0.06)

        assert select_action((0.95, 1.0), spec, RngStream(1, 0)) == 0

    def test_pure_experimentation_is_uniform(self):
        """epsilon=1: chi-square test over 3 actions and 30000 draws"""
        # Arrange
        spec = AgentSpec(
            alpha=0.5, epsilon=1.0, delta=0.9, distortion=(0.0, 0.0, 0.0)
        )
        rng = RngStream(2024, 0)
        counts = np.zeros(3)

        # Act
        for _ in range(30000):
            counts[select_action((5.0, 0.0, 0.0), spec, rng)] += 1

        # Assert: 99.9% critical value of chi-square with 2 dof is 13.8
        expected = 10000.0
        chi2 = float(((counts - expected) ** 2 / expected).sum())
        assert chi2 < 13.8

    def test_experimentation_includes_greedy_action(self, make_spec):
        """About half the draws at epsilon=1 hit the greedy action"""
        spec = make_spec(epsilon=1.0)
        rng = RngStream(9, 0)

        hits = sum(select_action((0.0, 1.0), spec, rng) == 1 for _ in range(10000))

        assert 4700 < hits < 5300

    def test_naive_equivalence_with_argmax(self, make_spec):
        """With zero bias the greedy choice is the first maximal Q-value"""
        rng = random.Random(8)
        spec = AgentSpec(
            alpha=0.5, epsilon=0.0, delta=0.9, distortion=(1.0, 0.0, 0.0, 0.0)
        )
        for _ in range(2000):
            q = tuple(round(rng.uniform(0, 2), 1) for _ in range(4))

            action = select_action(q, spec, RngStream(0, 0))

            assert action == q.index(max(q))
            assert action == greedy_action(q, spec)

    def test_determinism_with_identical_streams(self, make_spec):
        spec = make_spec(epsilon=0.3)
        first = RngStream(77, 4, 1)
        second = RngStream(77, 4, 1)

        a = [select_action((1.0, 1.1), spec, first) for _ in range(1000)]
        b = [select_action((1.0, 1.1), spec, second) for _ in range(1000)]

        assert a == b


class TestRngStream:
    def test_same_key_same_draws(self):
        a = RngStream(123, path_index=5, stream_index=1)
        b = RngStream(123, path_index=5, stream_index=1)

        assert [a.uniform() for _ in range(10000)] == [
            b.uniform() for _ in range(10000)
        ]

    def test_paths_and_streams_differ(self):
        base = [RngStream(123, 0, 0).uniform() for _ in range(3)]

        assert base != [RngStream(123, 1, 0).uniform() for _ in range(3)]
        assert base != [RngStream(123, 0, 1).uniform() for _ in range(3)]
        assert base != [RngStream(123, 0, 0, cell=(2, 0)).uniform() for _ in range(3)]

    def test_block_size_does_not_change_sequence(self):
        small = RngStream(5, 2, block=7)
        large = RngStream(5, 2, block=4096)

        assert [small.uniform() for _ in range(100)] == [
            large.uniform() for _ in range(100)
        ]

    def test_choice_in_range(self):
        rng = RngStream(3, 0)

        draws = {rng.choice(7) for _ in range(5000)}

        assert draws == set(range(7))

    def test_environment_stream_follows_agents(self):
        env_stream = RngStream.for_environment(10, 3, arity=2)
        third = RngStream(10, 3, 2)

        assert env_stream.uniform() == third.uniform()
