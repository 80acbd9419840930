import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmrl import env as lander
from dmrl.config import Hyperparams
from dmrl.dynamics import DynamicsModel
from dmrl.evaluation import EvalReport, batches_to_converge, eval_adaptation, evaluate_policy, scenario_task, summarize
from dmrl.policy import Policy
from dmrl.trainer import TrainRecord

TINY_EVAL = Hyperparams(mc_trials=3, eval_adapt_steps=2, eval_rollouts=2, max_rollout_len=10, n_candidate=16, mpc_horizon=2)


def test_batches_to_converge_examples():
    assert batches_to_converge([0, 0, 0, 10, 10, 10], 2, 0.05) == 4
    assert batches_to_converge([5.0], 3, 0.05) == 0
    assert batches_to_converge([-10, -4, -2, -2, -2], 2, 0.05) == 3
    with pytest.raises(ValueError):
        batches_to_converge([], 2, 0.1)


@settings(max_examples=60, deadline=None)
@given(series=st.lists(st.floats(-100, 100), min_size=1, max_size=50), window=st.integers(1, 8))
def test_converge_index_is_in_range_and_flat_tails_qualify(series, window):
    idx = batches_to_converge(series, window, 0.05)
    assert min(window, len(series)) - 1 <= idx <= len(series) - 1
    flat = series + [series[-1]] * 10
    assert batches_to_converge(flat, window, 0.0) <= len(series) + min(window, len(flat)) - 1


def test_scenarios():
    sine = scenario_task("sine", np.random.default_rng(0))
    assert sine == lander.TaskSpec.sinusoidal(2.0, 0.01)
    static = scenario_task("static", np.random.default_rng(0))
    assert static == lander.sample_task(np.random.default_rng(0))
    with pytest.raises(ValueError):
        scenario_task("storm", np.random.default_rng(0))


def test_policy_eval_shape_and_budget():
    policy = Policy.create(np.random.default_rng(1))
    report = eval_adaptation(policy, "static", TINY_EVAL, seed=0)
    assert report.returns.shape == (3, 3)
    assert report.rollouts_used == 3 * 3 * 2
    assert report.zero_shot.shape == (3,) and report.final.shape == (3,)
    again = eval_adaptation(policy, "static", TINY_EVAL, seed=0)
    np.testing.assert_array_equal(report.returns, again.returns)


def test_zero_budget_is_zero_shot_only():
    policy = Policy.create(np.random.default_rng(2))
    report = eval_adaptation(policy, "sine", TINY_EVAL, seed=1, adapt_steps=0)
    assert report.returns.shape == (3, 1) and report.rollouts_used == 6
    with pytest.raises(ValueError):
        eval_adaptation(policy, "sine", TINY_EVAL, seed=1, adapt_steps=-1)


def test_model_based_eval_runs():
    model = DynamicsModel.create(np.random.default_rng(3))
    report = eval_adaptation(model, "sine", TINY_EVAL, seed=2, adapt_steps=1)
    assert report.returns.shape == (3, 2) and np.all(np.isfinite(report.returns))


def test_report_rows():
    report = EvalReport("static", np.array([[1.0, 2.0], [3.0, 4.0]]), 8)
    assert report.rows()[1] == (0, 1, 2.0, "static")
    np.testing.assert_array_equal(report.mean, [2.0, 3.0])
    assert report.converge_index(1, 0.0) == 1


def test_evaluate_policy_is_seeded():
    policy = Policy.create(np.random.default_rng(4))
    hp = Hyperparams(max_rollout_len=10)
    assert evaluate_policy(policy, hp, 0, n_tasks=3) == evaluate_policy(policy, hp, 0, n_tasks=3)


def test_summary_counts_env_batches_at_convergence():
    hp = Hyperparams(meta_batch_size=5, return_window=2, return_tol=0.05)
    returns = [-10.0, -5.0, -1.0, -1.0, -1.0]
    trace = [TrainRecord(i, "1" if i < 2 else "2", r, 0.1, 5 * min(i + 1, 2), 5 * max(0, i - 1), 0.0) for i, r in enumerate(returns)]
    s = summarize(trace, hp)
    assert s["converge_iteration"] == 3
    assert s["batches_to_converge"] == 20 and s["env_batches_to_converge"] == 10
    assert s["return_mean_after_convergence"] == -1.0
