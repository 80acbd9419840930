import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmrl import policy as pol
from dmrl.core import MlpSpec
from dmrl.data import Trajectory
from dmrl.policy import Policy, ProvenanceError
from dmrl.selftest import BANDIT_STATE, bandit_rollouts, bandit_trial, central_difference, relative_error

TINY = MlpSpec.build(1, [1], 2, "softmax")


def one_step(policy, action, reward, state=BANDIT_STATE):
    return Trajectory(
        observations=np.stack([state, state]),
        actions=np.array([action]),
        rewards=np.array([float(reward)]),
        param_tag=policy.tag,
    )


def traj(rewards, tag=None, obs_dim=5):
    n = len(rewards)
    return Trajectory(np.zeros((n + 1, obs_dim)), np.zeros(n, dtype=np.int64), np.asarray(rewards, float), param_tag=tag)


def test_default_architecture():
    spec = pol.default_spec()
    assert spec.dims == [5, 64, 64, 4] and spec.head == "softmax"


def test_zero_parameters_give_uniform_actions():
    policy = Policy(pol.default_spec(), np.zeros(pol.default_spec().n_params))
    np.testing.assert_allclose(pol.action_distribution(policy, np.ones(5)), [0.25] * 4, atol=1e-15)


def test_action_distribution_is_a_simplex_point():
    policy = Policy.create(np.random.default_rng(0))
    for s in np.random.default_rng(1).standard_normal((20, 5)) * 5:
        p = pol.action_distribution(policy, s)
        assert np.all(p >= 0) and p.sum() == pytest.approx(1.0, abs=1e-12)


def test_rl_loss_examples():
    assert pol.rl_loss([traj([1.0, 1.0])], 1.0) == -2.0
    assert pol.rl_loss([traj([1.0, 1.0]), traj([0.0])], 0.5) == pytest.approx(-0.75)
    assert pol.rl_loss([traj([-100.0])], 0.9) == 100.0
    with pytest.raises(ValueError):
        pol.rl_loss([], 0.9)
    with pytest.raises(ValueError):
        pol.rl_loss([traj([1.0])], 1.5)


def test_baseline_is_the_per_step_batch_mean():
    trajs = [traj([1.0, 2.0, 3.0]), traj([3.0]), traj([2.0, 2.0])]
    # rewards-to-go at gamma 1: [6, 5, 3], [3], [4, 2]
    np.testing.assert_allclose(pol.batch_mean_baseline([t.rewards_to_go(1.0) for t in trajs]), [13 / 3, 3.5, 3.0])
    adv = pol.advantages(trajs, 1.0)
    np.testing.assert_allclose(adv[0], [6 - 13 / 3, 1.5, 0.0])
    np.testing.assert_allclose(adv[1], [3 - 13 / 3])
    np.testing.assert_allclose(adv[2], [4 - 13 / 3, -1.5])
    np.testing.assert_allclose(pol.advantages(trajs, 1.0, baseline=False)[0], [6, 5, 3])


def test_single_trajectory_has_no_learning_signal():
    policy = Policy.create(np.random.default_rng(12))
    rng = np.random.default_rng(13)
    t = Trajectory(rng.standard_normal((6, 5)), rng.integers(0, 4, 5), rng.standard_normal(5), param_tag=policy.tag)
    assert not np.any(pol.policy_gradient(policy, [t], 0.99))


def test_equal_returns_give_zero_gradient():
    policy = Policy.create(np.random.default_rng(2))
    rng = np.random.default_rng(3)
    trajs = [
        Trajectory(rng.standard_normal((2, 5)), np.array([int(rng.integers(4))]), np.array([1.0]), param_tag=policy.tag)
        for _ in range(4)
    ]
    np.testing.assert_array_equal(pol.policy_gradient(policy, trajs, 0.99), np.zeros(policy.spec.n_params))


def test_hand_computed_bandit_gradient_step():
    # all-zero net: logits are the output bias; advantages +-1/2 under baseline 1/2
    # give d loss / d bias = (-1/4, +1/4), so one step of size lr moves p0 to sigmoid(lr / 2)
    policy = Policy(TINY, np.zeros(TINY.n_params))
    trajs = [one_step(policy, 0, 1.0), one_step(policy, 1, 0.0)]
    grad = pol.policy_gradient(policy, trajs, 1.0)
    assert np.linalg.norm(grad) == pytest.approx(math.sqrt(2) / 4)
    assert sorted(grad[grad != 0].tolist()) == [-0.25, 0.25]
    for lr in (0.5, 1.0, 3.0):
        p = pol.action_distribution(pol.adapt(policy, trajs, lr, 1.0), BANDIT_STATE)
        assert p[0] == pytest.approx(1 / (1 + math.exp(-lr / 2)), abs=1e-12)


def test_surrogate_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    spec = MlpSpec.build(3, [5, 4], 3, "softmax")
    policy = Policy.create(rng, spec)
    trajs = []
    for n in (3, 1, 4):
        trajs.append(Trajectory(rng.standard_normal((n + 1, 3)), rng.integers(0, 3, n), rng.standard_normal(n), param_tag=policy.tag))
    numeric = central_difference(lambda p: pol.surrogate(policy, p, trajs, 0.9), policy.params.copy())
    assert relative_error(pol.policy_gradient(policy, trajs, 0.9), numeric) < 1e-6


def test_adapt_identities():
    policy = Policy.create(np.random.default_rng(5), TINY)
    trajs = bandit_rollouts(policy, 0, 6, np.random.default_rng(5))
    np.testing.assert_array_equal(pol.adapt(policy, trajs, 0.0, 0.99).params, policy.params)
    before = policy.params.copy()
    pol.adapt(policy, trajs, 0.5, 0.99)
    np.testing.assert_array_equal(policy.params, before)
    with pytest.raises(ValueError):
        pol.adapt(policy, trajs, -0.1, 0.99)


def test_gradient_is_clipped_inside_adapt():
    policy = Policy(TINY, np.zeros(TINY.n_params))
    trajs = [one_step(policy, 0, 1000.0), one_step(policy, 1, 0.0)]
    step = pol.adapt(policy, trajs, 1.0, 1.0, clip=10.0).params - policy.params
    assert np.linalg.norm(step) == pytest.approx(10.0)


def test_meta_step_degenerate_cases():
    rng = np.random.default_rng(6)
    policy = Policy.create(rng, TINY)
    tasks = [(bandit_rollouts(policy, a, 4, rng), bandit_rollouts(policy, a, 4, rng)) for a in (0, 1)]
    np.testing.assert_array_equal(pol.meta_step(policy, tasks, 0.3, 0.0, 1.0).params, policy.params)
    # no inner step: the meta update is plain REINFORCE on the test splits
    expected = policy.params - 0.2 * np.mean([pol.policy_gradient(policy, test, 1.0) for _, test in tasks], axis=0)
    np.testing.assert_allclose(pol.meta_step(policy, tasks, 0.0, 0.2, 1.0).params, expected, atol=1e-15)
    with pytest.raises(ValueError):
        pol.meta_step(policy, [], 0.1, 0.1, 1.0)


def test_gradients_reject_trajectories_from_other_parameters():
    rng = np.random.default_rng(7)
    policy = Policy.create(rng, TINY)
    other = Policy.create(rng, TINY)
    stale = bandit_rollouts(other, 0, 3, rng)
    with pytest.raises(ProvenanceError):
        pol.policy_gradient(policy, stale, 1.0)
    with pytest.raises(ProvenanceError):
        pol.meta_step(policy, [(bandit_rollouts(policy, 0, 3, rng), stale)], 0.1, 0.1, 1.0)
    untagged = [traj([1.0], obs_dim=1)]
    with pytest.raises(ProvenanceError):
        pol.policy_gradient(policy, untagged, 1.0)


def test_tag_tracks_parameters():
    policy = Policy.create(np.random.default_rng(8))
    assert policy.tag == Policy(policy.spec, policy.params.copy()).tag
    bumped = policy.params.copy()
    bumped[0] = np.nextafter(bumped[0], np.inf)
    assert policy.with_params(bumped).tag != policy.tag


def test_sampling_consumes_one_uniform_and_follows_the_distribution():
    policy = Policy.create(np.random.default_rng(9), TINY)
    p0 = pol.action_distribution(policy, BANDIT_STATE)[0]
    rng = np.random.default_rng(10)
    draws = [policy.sample(BANDIT_STATE, rng) for _ in range(4000)]
    assert abs(np.mean(np.array(draws) == 0) - p0) < 0.03
    a, b = np.random.default_rng(11), np.random.default_rng(11)
    policy.sample(BANDIT_STATE, a)
    b.random()
    assert a.random() == b.random()


def test_bandit_meta_training_enables_one_step_adaptation():
    wins = 0
    for seed in range(20):
        p0, p0_after, p1, p1_after = bandit_trial(seed)
        wins += p0_after > p0 and p1_after > p1
    assert wins >= 19


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), shift=st.floats(-50, 50))
def test_gradient_is_invariant_to_reward_shift(seed, shift):
    # the batch-mean baseline absorbs a constant added to every one-step reward
    rng = np.random.default_rng(seed)
    policy = Policy.create(rng, TINY)
    trajs = bandit_rollouts(policy, int(rng.integers(2)), 5, rng)
    shifted = [one_step(policy, int(t.actions[0]), t.rewards[0] + shift) for t in trajs]
    np.testing.assert_allclose(
        pol.policy_gradient(policy, shifted, 1.0), pol.policy_gradient(policy, trajs, 1.0), atol=1e-9
    )


def test_lander_policies_standardize_their_inputs():
    policy = Policy.create(np.random.default_rng(14))
    np.testing.assert_array_equal(policy.obs_mean, pol.LANDER_OBS_MEAN)
    np.testing.assert_array_equal(policy.features(np.array([5.0, 10.0, 2.0, -2.0, 1.0])), [1, 1, 1, -1, 1])
    plain = Policy(policy.spec, policy.params)
    shifted = np.array([0.3, 4.0, 0.1, -0.2, 0.7])
    np.testing.assert_allclose(
        pol.action_distribution(policy, shifted), pol.action_distribution(plain, policy.features(shifted)), rtol=1e-14
    )
    stepped = policy.with_params(policy.params * 0.5)
    np.testing.assert_array_equal(stepped.obs_std, policy.obs_std)
    with pytest.raises(ValueError):
        Policy(policy.spec, policy.params, obs_std=np.zeros(5))
