import math

import numpy as np
import pytest

from fairfedsim import (
    AgentConfig,
    EMABaseline,
    PolicyNet,
    Trajectory,
    TrajectoryStep,
    build_state,
    fairness_reward,
    load_checkpoint,
    policy_update,
    save_checkpoint,
    select_action,
    validate_q_grid,
)
from fairfedsim.errors import ConfigError, DivergedPolicyError


class TestQGrid:
    def test_default_and_zero_only_grids_are_valid(self):
        validate_q_grid((0.0, 0.1, 0.5, 1.0, 2.0, 5.0))
        validate_q_grid((0.0,))

    def test_rejects_bad_grids(self):
        with pytest.raises(ConfigError):
            validate_q_grid(())
        with pytest.raises(ConfigError):
            validate_q_grid((0.1, 1.0))  # missing 0
        with pytest.raises(ConfigError):
            validate_q_grid((0.0, 1.0, 1.0))
        with pytest.raises(ConfigError):
            validate_q_grid((0.0, -1.0))
        with pytest.raises(ConfigError):
            validate_q_grid((0.0, float("nan")))


class TestBuildState:
    def test_frozen_example(self):
        state = build_state([0.2, 0.9, 0.5], prev_q=1.0, round_index=3, total_rounds=10, max_tracked=4)
        np.testing.assert_allclose(
            state,
            [0.9, 0.5, 0.2, 0.0, 0.5333333333333333, 0.28674417556808757, 1.0, 0.3],
            atol=1e-15,
        )

    def test_equal_losses_zero_std(self):
        state = build_state([0.4, 0.4, 0.4], 0.0, 1, 4, max_tracked=3)
        assert state[3] == pytest.approx(0.4)  # mean
        assert state[4] == pytest.approx(0.0, abs=1e-12)  # std

    def test_permutation_invariance(self):
        a = build_state([0.1, 0.7, 0.3], 0.5, 2, 8, 5)
        b = build_state([0.7, 0.3, 0.1], 0.5, 2, 8, 5)
        np.testing.assert_array_equal(a, b)

    def test_truncation_keeps_largest(self):
        state = build_state([0.1, 0.9, 0.5, 0.7], 0.0, 0, 1, max_tracked=2)
        np.testing.assert_array_equal(state[:2], [0.9, 0.7])
        # mean and std still cover every report
        assert state[2] == pytest.approx(np.mean([0.1, 0.9, 0.5, 0.7]))

    def test_optional_accuracy_feature(self):
        base = build_state([0.2], 0.0, 0, 1, 2)
        extended = build_state([0.2], 0.0, 0, 1, 2, global_accuracy=0.75)
        assert extended.size == base.size + 1
        assert extended[-1] == 0.75


class TestPolicyNet:
    def test_fresh_net_is_uniform(self):
        net = PolicyNet(state_dim=8, hidden_dim=16, num_actions=6, seed=3)
        probs = net.action_probs(np.random.default_rng(0).standard_normal(8))
        np.testing.assert_allclose(probs, 1 / 6, atol=1e-9)

    def test_probs_normalized_after_random_load(self):
        net = PolicyNet(6, 8, 4, seed=0)
        rng = np.random.default_rng(1)
        net.load_vector(rng.standard_normal(net.num_params))
        for _ in range(20):
            probs = net.action_probs(rng.standard_normal(6))
            assert abs(probs.sum() - 1.0) <= 1e-9

    def test_greedy_selection_is_argmax(self):
        net = PolicyNet(3, 4, 3, seed=0)
        net.b3 = np.array([0.1, 2.0, 0.1])
        q, idx, logp = select_action(net, (0.0, 0.5, 1.0), np.zeros(3), np.random.default_rng(0), explore=False)
        assert idx == 1 and q == 0.5
        assert logp == pytest.approx(net.action_log_probs(np.zeros(3))[1])

    def test_greedy_tie_breaks_to_lowest_index(self):
        net = PolicyNet(3, 4, 3, seed=0)  # zero output layer: all logits equal
        _, idx, _ = select_action(net, (0.0, 0.5, 1.0), np.ones(3), np.random.default_rng(0), explore=False)
        assert idx == 0

    def test_sampling_frequency_matches_softmax(self):
        net = PolicyNet(2, 4, 4, seed=0)
        net.b3 = np.array([0.3, -0.5, 1.1, 0.0])
        state = np.zeros(2)
        target = net.action_probs(state)
        rng = np.random.default_rng(123)
        counts = np.zeros(4)
        draws = 100_000
        for _ in range(draws):
            _, idx, _ = select_action(net, (0.0, 0.5, 1.0, 2.0), state, rng)
            counts[idx] += 1
        np.testing.assert_allclose(counts / draws, target, atol=0.01)

    def test_sampling_deterministic_given_rng_state(self):
        net = PolicyNet(2, 4, 3, seed=1)
        picks_a = [select_action(net, (0, 1, 2), np.zeros(2), np.random.default_rng(7))[1] for _ in range(10)]
        picks_b = [select_action(net, (0, 1, 2), np.zeros(2), np.random.default_rng(7))[1] for _ in range(10)]
        assert picks_a == picks_b

    def test_non_finite_logits_raise(self):
        net = PolicyNet(2, 4, 3, seed=0)
        net.b3 = np.array([np.inf, 0.0, 0.0])
        with pytest.raises(DivergedPolicyError):
            select_action(net, (0, 1, 2), np.zeros(2), np.random.default_rng(0))

    def test_log_prob_grad_matches_finite_differences(self):
        net = PolicyNet(5, 7, 4, seed=2)
        rng = np.random.default_rng(3)
        net.load_vector(0.5 * rng.standard_normal(net.num_params))
        state = rng.standard_normal(5)
        for action in range(4):
            _, grad = net.log_prob_grad(state, action)
            theta = net.to_vector()
            fd = np.zeros_like(theta)
            h = 1e-6
            probe = PolicyNet(5, 7, 4, seed=2)
            for i in range(theta.size):
                for sign, slot in ((1, 0), (-1, 1)):
                    bumped = theta.copy()
                    bumped[i] += sign * h
                    probe.load_vector(bumped)
                    val = probe.action_log_probs(state)[action]
                    fd[i] += val if slot == 0 else -val
                fd[i] /= 2 * h
            denom = np.maximum(np.maximum(np.abs(grad), np.abs(fd)), 1.0)
            assert np.max(np.abs(grad - fd) / denom) < 1e-5

    def test_vector_round_trip(self):
        net = PolicyNet(4, 6, 3, seed=5)
        vec = net.to_vector()
        other = PolicyNet(4, 6, 3, seed=9)
        other.load_vector(vec)
        np.testing.assert_array_equal(other.to_vector(), vec)
        with pytest.raises(ValueError):
            other.load_vector(vec[:-1])


class TestReward:
    def test_hand_computed_example(self):
        assert fairness_reward(0.9, [0.1, 0.5, 0.9]) == pytest.approx(0.808942708324448, abs=1e-15)

    def test_equal_losses_give_full_accuracy(self):
        assert fairness_reward(0.8, [0.3, 0.3, 0.3]) == pytest.approx(0.8, abs=1e-15)

    def test_zero_accuracy_zero_reward(self):
        assert fairness_reward(0.0, [0.1, 5.0]) == 0.0

    def test_bounds_and_variance_oracle(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            a = float(rng.uniform(0, 1))
            xs = rng.uniform(0, 3, size=int(rng.integers(1, 12)))
            mean = sum(xs) / len(xs)
            var = sum((x - mean) ** 2 for x in xs) / len(xs)
            r = fairness_reward(a, xs)
            assert abs(r - a * math.exp(-var)) <= 1e-12
            assert 0.0 <= r <= a

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            fairness_reward(1.2, [0.1])
        with pytest.raises(ValueError):
            fairness_reward(0.5, [])


class TestBaseline:
    def test_first_update_snaps_to_return(self):
        b = EMABaseline(decay=0.9)
        b.update(2.0)
        assert b.value == 2.0 and b.count == 1

    def test_ema_recursion(self):
        b = EMABaseline(decay=0.9)
        b.update(1.0)
        b.update(0.0)
        assert b.value == pytest.approx(0.9 * 1.0 + 0.1 * 0.0)


def make_trajectory(rewards, net, state):
    traj = Trajectory()
    for i, r in enumerate(rewards):
        traj.append(TrajectoryStep(state=state, action_index=i % net.num_actions,
                                   log_prob=0.0, reward=r))
    return traj


class TestPolicyUpdate:
    def test_returns_to_go(self):
        net = PolicyNet(2, 3, 2, seed=0)
        traj = make_trajectory([1.0, 2.0, 3.0], net, np.zeros(2))
        np.testing.assert_allclose(
            traj.returns_to_go(0.9),
            [1.0 + 0.9 * (2.0 + 0.9 * 3.0), 2.0 + 0.9 * 3.0, 3.0],
        )

    def test_zero_advantage_leaves_net_unchanged(self):
        net = PolicyNet(2, 3, 2, seed=0)
        baseline = EMABaseline(decay=0.9, value=1.0, count=5)
        traj = make_trajectory([1.0], net, np.zeros(2))  # G_0 = 1.0 = baseline
        before = net.to_vector()
        policy_update(net, traj, learning_rate=0.1, baseline=baseline, discount=0.99)
        np.testing.assert_array_equal(net.to_vector(), before)
        assert baseline.count == 6

    def test_positive_advantage_increases_action_probability(self):
        net = PolicyNet(2, 3, 2, seed=1)
        state = np.ones(2)
        before = net.action_probs(state)[0]
        traj = Trajectory()
        traj.append(TrajectoryStep(state=state, action_index=0, log_prob=0.0, reward=1.0))
        policy_update(net, traj, learning_rate=0.5, baseline=EMABaseline(decay=0.9), discount=1.0)
        # fresh EMA baseline starts at 0, so the advantage is +1 for action 0
        assert net.action_probs(state)[0] > before

    def test_missing_reward_rejected(self):
        net = PolicyNet(2, 3, 2, seed=0)
        traj = Trajectory()
        traj.append(TrajectoryStep(state=np.zeros(2), action_index=0, log_prob=0.0))
        with pytest.raises(ValueError):
            policy_update(net, traj, 0.1, EMABaseline())

    def test_empty_trajectory_rejected(self):
        net = PolicyNet(2, 3, 2, seed=0)
        with pytest.raises(ValueError):
            policy_update(net, Trajectory(), 0.1, EMABaseline())


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        net = PolicyNet(6, 8, 4, seed=11)
        rng = np.random.default_rng(5)
        net.load_vector(rng.standard_normal(net.num_params))
        baseline = EMABaseline(decay=0.85, value=0.44, count=17)
        path = tmp_path / "ckpt.txt"
        save_checkpoint(path, net, (0.0, 0.5, 1.0, 2.0), baseline, episodes_completed=29)
        loaded_net, grid, loaded_baseline, episodes = load_checkpoint(path)
        assert grid == (0.0, 0.5, 1.0, 2.0)
        assert episodes == 29
        assert loaded_baseline == baseline
        np.testing.assert_array_equal(loaded_net.to_vector(), net.to_vector())
        assert (loaded_net.state_dim, loaded_net.hidden_dim, loaded_net.num_actions) == (6, 8, 4)

    def test_corrupt_checkpoint_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1\n2\n")
        with pytest.raises(ConfigError):
            load_checkpoint(path)


def test_agent_config_validation():
    AgentConfig().validate()
    with pytest.raises(ConfigError):
        AgentConfig(q_grid=(0.1, 1.0)).validate()
    with pytest.raises(ConfigError):
        AgentConfig(learning_rate=0.0).validate()
    with pytest.raises(ConfigError):
        AgentConfig(discount=1.5).validate()
    with pytest.raises(ConfigError):
        AgentConfig(baseline_decay=1.0).validate()
