"""Evasion MDP tests: action coding, reward semantics, budget, episode
lifecycle, and scenario isolation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pixelevade.dataset import ImageSet
from pixelevade.env import (ACTION_COUNT, MAX_STEPS, EvasionEnv, apply_action,
                            decode_action, encode_action, episode_return,
                            observation_size, step_reward)
from pixelevade.oracle import Scenario


class TestActionCoding:
    def test_origin(self):
        assert decode_action(0) == (0, 0, 0)

    def test_maximal_index(self):
        assert decode_action(8191) == (31, 31, 7)

    def test_layout_arithmetic(self):
        assert encode_action(1, 0, 3) == 259
        assert decode_action(259) == (1, 0, 3)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            decode_action(8192)
        with pytest.raises(ValueError):
            decode_action(-1)

    @given(st.integers(min_value=0, max_value=ACTION_COUNT - 1))
    @settings(max_examples=200, deadline=None)
    def test_round_trip(self, index):
        row, col, level = decode_action(index)
        assert 0 <= row < 32 and 0 <= col < 32 and 0 <= level < 8
        assert encode_action(row, col, level) == index


from stubs import (ThresholdModel, fooling_action, harmless_action,
                   stub_corpus, stub_env)


class TestApplyAction:
    def test_level_endpoints(self, tiny_corpus, tiny_model):
        env = stub_env()
        env.reset()
        state = env.state
        apply_action(state, encode_action(4, 9, 0))
        np.testing.assert_array_equal(state.modified[:, 4, 9], 0.0)
        apply_action(state, encode_action(4, 9, 7))
        np.testing.assert_array_equal(state.modified[:, 4, 9], 1.0)

    def test_idempotent_overwrite(self):
        env = stub_env()
        env.reset()
        action = encode_action(2, 3, 5)
        apply_action(env.state, action)
        snapshot = env.state.modified.copy()
        apply_action(env.state, action)
        assert np.array_equal(env.state.modified, snapshot)
        np.testing.assert_allclose(env.state.modified[:, 2, 3], 5 / 7)


class TestStepSemantics:
    def test_non_fooling_step_reward(self):
        env = stub_env(seed=3)
        env.reset()
        out = env.step(harmless_action(env.state.true_label))
        assert out.reward == -1.0
        assert not out.done
        assert not out.info["fooled"]

    def test_fooling_step_reward_and_termination(self):
        env = stub_env(seed=4)
        env.reset()
        out = env.step(fooling_action(env.state.true_label))
        assert out.reward == 9.0
        assert out.done
        assert out.info["fooled"]
        assert episode_return(env.state.rewards) == 9.0

    def test_budget_exhaustion_reward(self):
        env = stub_env(seed=5)
        env.reset()
        action = harmless_action(env.state.true_label)
        for step in range(MAX_STEPS - 1):
            out = env.step(action)
            assert out.reward == -1.0 and not out.done
        out = env.step(action)
        assert out.reward == -11.0
        assert out.done and not out.info["fooled"]
        assert out.info["steps_taken"] == MAX_STEPS
        assert episode_return(env.state.rewards) == -42.0

    def test_step_after_done_rejected(self):
        env = stub_env(seed=6)
        env.reset()
        env.step(fooling_action(env.state.true_label))
        with pytest.raises(RuntimeError, match="finished"):
            env.step(0)

    def test_step_before_reset_rejected(self):
        env = stub_env(seed=7)
        with pytest.raises(RuntimeError, match="reset"):
            env.step(0)


class TestEpisodeReturn:
    def test_success_on_first_step(self):
        assert episode_return([step_reward(True, 1)]) == 9.0

    def test_failure_after_budget(self):
        rewards = [step_reward(False, s + 1) for s in range(MAX_STEPS)]
        assert episode_return(rewards) == -42.0

    def test_success_on_step_ten_nets_zero(self):
        rewards = [step_reward(False, s + 1) for s in range(9)]
        rewards.append(step_reward(True, 10))
        assert episode_return(rewards) == 0.0


class TestReset:
    def test_initial_observation_blocks(self, tiny_corpus, tiny_model, rng):
        train, _ = tiny_corpus
        env = EvasionEnv(train, tiny_model, Scenario.TRUE_DISTRIBUTION,
                         rng=rng, oracle_rng=np.random.default_rng(0))
        obs = env.reset()
        c = tiny_model.class_count
        assert obs.shape == (observation_size(c),)
        np.testing.assert_array_equal(obs[:3072], env.state.original.ravel())
        np.testing.assert_array_equal(obs[3072:6144], obs[:3072])
        assert np.all(obs[6144:9216] == 0.0)  # delta block
        onehot = obs[9216:9216 + c]
        assert onehot.sum() == 1.0 and onehot[env.state.true_label] == 1.0
        assert obs[9216 + c] == 0.0  # steps block
        conf = obs[9216 + c + 1:]
        assert abs(conf.sum() - 1.0) < 1e-5

    def test_reset_only_accepts_correctly_classified(self, tiny_corpus,
                                                     tiny_model, rng):
        train, _ = tiny_corpus
        env = EvasionEnv(train, tiny_model, Scenario.BLACK_BOX,
                         rng=rng, oracle_rng=np.random.default_rng(0))
        for _ in range(25):
            env.reset()
            probs, predicted = tiny_model.predict_probs(env.state.original)
            assert predicted == env.state.true_label

    def test_class_sampling_uniform_within_binomial_bounds(self):
        env = stub_env(seed=11)
        n = 10_000
        counts = np.zeros(2)
        for _ in range(n):
            env.reset()
            counts[env.state.true_label] += 1
        p = 1 / 2
        sigma = np.sqrt(p * (1 - p) / n)
        assert abs(counts[0] / n - p) <= 3 * sigma

    def test_abort_when_classifier_rejects_everything(self):
        class AlwaysWrong:
            class_count = 2

            def predict_probs(self, image):
                return np.array([0.0, 1.0]), 1  # never label 0

        corpus = stub_corpus()
        env = EvasionEnv(corpus, AlwaysWrong(), Scenario.BLACK_BOX,
                         rng=np.random.default_rng(0),
                         oracle_rng=np.random.default_rng(1))
        env.MAX_RESET_REJECTIONS = 50
        with pytest.raises(RuntimeError, match="too weak"):
            for _ in range(10):
                env.reset()

    def test_class_count_mismatch_rejected(self, tiny_corpus):
        train, _ = tiny_corpus
        with pytest.raises(ValueError, match="classes"):
            EvasionEnv(train, ThresholdModel(), Scenario.BLACK_BOX,
                       rng=np.random.default_rng(0))


def test_delta_consistency_over_random_action_sequences(rng):
    env = stub_env(seed=13)
    for _ in range(5):
        env.reset()
        while True:
            out = env.step(int(rng.integers(ACTION_COUNT)))
            state = env.state
            np.testing.assert_array_equal(state.delta,
                                          state.modified - state.original)
            assert state.modified.min() >= 0.0 and state.modified.max() <= 1.0
            if out.done:
                break
        assert state.steps_taken <= MAX_STEPS


def test_scenario_isolation_blackbox_vs_truedist(tiny_corpus, tiny_model):
    """Identical seeds and scripted actions must give identical dynamics;
    only the confidence block of the observation may differ."""
    train, _ = tiny_corpus
    actions = [encode_action(r, c, lv)
               for r, c, lv in [(5, 5, 7), (10, 20, 0), (31, 31, 3),
                                (0, 0, 7), (16, 16, 1)]]
    runs = {}
    for scenario in (Scenario.BLACK_BOX, Scenario.TRUE_DISTRIBUTION):
        env = EvasionEnv(train, tiny_model, scenario,
                         rng=np.random.default_rng(99),
                         oracle_rng=np.random.default_rng(100))
        obs = [env.reset()]
        rewards, dones = [], []
        for action in actions:
            if env.state.done:
                break
            out = env.step(action)
            obs.append(out.observation)
            rewards.append(out.reward)
            dones.append(out.done)
        runs[scenario] = (obs, rewards, dones)

    obs_a, rew_a, done_a = runs[Scenario.BLACK_BOX]
    obs_b, rew_b, done_b = runs[Scenario.TRUE_DISTRIBUTION]
    assert rew_a == rew_b
    assert done_a == done_b
    conf_start = 9216 + tiny_model.class_count + 1
    for oa, ob in zip(obs_a, obs_b):
        np.testing.assert_array_equal(oa[:conf_start], ob[:conf_start])
