import math

import numpy as np
import pytest

from dmrl import env as lander
from dmrl.config import Hyperparams
from dmrl.dynamics import OracleModel
from dmrl.policy import Policy
from dmrl.selftest import SMOKE_SCALE, determinism_suite, oracle_model_suite
from dmrl.trainer import (
    TRACE_HEADER,
    EnvGate,
    EnvLockedError,
    Trainer,
    TrainRecord,
    model_converged,
    simulate_rollout,
    train_dmrl,
    train_mb_baseline,
    train_mf_baseline,
)

SMOKE = Hyperparams(**SMOKE_SCALE)


@pytest.fixture(scope="module")
def dm_run():
    return train_dmrl(SMOKE, 0)


def test_model_converged_examples():
    assert not model_converged([1.0, 1.0], 3, 0.05)
    assert model_converged([5.0, 1.0, 1.02, 0.99], 3, 0.05)
    assert not model_converged([1.0, 1.2, 1.0], 3, 0.05)
    assert not model_converged([1.0, math.nan, 1.0], 3, 0.05)
    assert model_converged([0.0, 0.0], 2, 0.0)
    with pytest.raises(ValueError):
        model_converged([1.0], 1, 0.1)


def test_trace_row_layout():
    rec = TrainRecord(3, "2", -1.5, 0.25, 10, 5, 12.345)
    assert len(rec.row()) == len(TRACE_HEADER)
    assert rec.row() == ["3", "2", "-1.5", "0.25", "10", "5", "12.3"]


def test_gate_counts_and_locks():
    gate = EnvGate()
    state = lander.reset(lander.TaskSpec(), np.random.default_rng(0))
    gate.step(lander.TaskSpec(), state, 0)
    assert gate.steps == 1
    gate.locked = True
    with pytest.raises(EnvLockedError):
        gate.step(lander.TaskSpec(), state, 0)
    assert gate.steps == 1


def test_simulated_rollouts_are_tagged_and_bounded():
    policy = Policy.create(np.random.default_rng(1))
    t = simulate_rollout(OracleModel(lander.TaskSpec()), policy, np.random.default_rng(2), 7)
    assert t.provenance == "sim" and t.param_tag == policy.tag
    assert len(t) <= 7 and t.terminal_kind != "none"
    with pytest.raises(ValueError):
        simulate_rollout(OracleModel(lander.TaskSpec()), policy, np.random.default_rng(2), 0)


def test_oracle_model_rollouts_match_the_environment():
    result = oracle_model_suite(n_cases=20)
    assert result.passed, result.line()


def test_phase_sequence_and_accounting(dm_run):
    hp, trace = SMOKE, dm_run.trace
    phases = "".join(r.phase for r in trace)
    assert len(trace) == hp.n_iterations
    assert dm_run.switch_at == hp.switch_iteration
    assert phases == "1" * hp.switch_iteration + "2" * (hp.n_iterations - hp.switch_iteration)
    for i, rec in enumerate(trace):
        assert rec.iteration == i
        real = min(i + 1, hp.switch_iteration)
        assert rec.env_batches == real * hp.meta_batch_size
        assert rec.sim_batches == (i + 1 - real) * hp.meta_batch_size
        assert math.isfinite(rec.mean_return) and math.isfinite(rec.model_val_loss)


def test_buffer_holds_exactly_the_real_data(dm_run):
    hp, buf = SMOKE, dm_run.buffer
    assert buf.frozen
    trajs = buf.trajectories()
    assert len(trajs) == hp.switch_iteration * hp.meta_batch_size * hp.rollouts_per_task
    assert all(t.provenance == "env" for t in trajs)
    assert dm_run.env_steps == sum(len(t) for t in trajs)


def test_environment_is_locked_after_the_switch():
    trainer = Trainer.create(SMOKE, 1)
    for _ in range(SMOKE.switch_iteration):
        trainer.phase1_iteration()
    assert trainer.should_switch()
    trainer.switch_phase()
    with pytest.raises(EnvLockedError):
        lander.rollout(lander.TaskSpec(), trainer.policy, trainer.rng, 5, step_fn=trainer.gate.step)
    with pytest.raises(RuntimeError):
        trainer.phase1_iteration()
    steps = trainer.gate.steps
    trainer.phase2_iteration()
    assert trainer.gate.steps == steps


def test_switch_by_validation_plateau():
    trainer = Trainer.create(SMOKE.replace(switch_iteration=None, conv_window=3, conv_tol=0.05), 2)
    trainer.val_history = [2.0, 1.0, 1.01]
    assert not trainer.should_switch()
    trainer.val_history.append(1.0)
    assert trainer.should_switch()


def test_phase_two_with_the_true_simulator_injected():
    trainer = Trainer.create(SMOKE, 3)
    for _ in range(SMOKE.switch_iteration):
        trainer.phase1_iteration()
    trainer.switch_phase()
    assert set(trainer.task_specs) == set(trainer.buffer.task_ids)
    trainer.phase2_model = lambda tid: OracleModel(trainer.task_specs[tid])
    rec = trainer.phase2_iteration()
    # the simulator explains the real data up to float round-off
    assert rec.model_val_loss < 1e-20
    assert rec.phase == "2" and rec.env_batches == SMOKE.switch_iteration * SMOKE.meta_batch_size


def test_same_seed_same_trace():
    result = determinism_suite(SMOKE, seed=4)
    assert result.passed, result.line()


def test_model_free_baseline_never_builds_a_model():
    res = train_mf_baseline(SMOKE, 0)
    assert res.model is None and res.switch_at is None
    assert all(r.phase == "mf" and r.sim_batches == 0 and math.isnan(r.model_val_loss) for r in res.trace)
    assert [r.env_batches for r in res.trace] == [SMOKE.meta_batch_size * (i + 1) for i in range(SMOKE.n_iterations)]
    assert res.env_steps == sum(len(t) for t in res.buffer.trajectories())


def test_model_based_baseline_accounting():
    hp = SMOKE.replace(n_iterations=2, n_candidate=20, mpc_horizon=2, max_rollout_len=8)
    res = train_mb_baseline(hp, 0)
    assert res.policy is None and res.model is not None
    assert [r.env_batches for r in res.trace] == [hp.meta_batch_size, 2 * hp.meta_batch_size]
    assert all(r.phase == "mb" and r.sim_batches == 0 for r in res.trace)
    assert res.env_steps == sum(len(t) for t in res.buffer.trajectories())
