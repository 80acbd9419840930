"""Test-time adaptation scenarios and convergence bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import dynamics as dyn
from . import env as lander
from . import policy as pol
from .config import Hyperparams
from .data import TransitionBatch
from .dynamics import DynamicsModel
from .mpc import PlanConfig, mb_rollout
from .policy import Policy

SCENARIOS = ("static", "sine")
SINE_AMPLITUDE = 2.0
SINE_FREQ_HZ = 0.01


def scenario_task(scenario: str, rng: np.random.Generator) -> lander.TaskSpec:
    if scenario == "static":
        return lander.sample_task(rng)
    if scenario == "sine":
        return lander.TaskSpec.sinusoidal(SINE_AMPLITUDE, SINE_FREQ_HZ)
    raise ValueError(f"unknown scenario {scenario!r}")


def batches_to_converge(series: Sequence[float], window: int, tol: float) -> int:
    """First index whose trailing ``window`` mean is within ``tol`` (relative) of the final mean.

    The final mean is the mean of the last ``window`` entries, so the last
    index always qualifies.
    """
    x = np.asarray(series, dtype=np.float64)
    if len(x) == 0:
        raise ValueError("empty series")
    w = min(window, len(x))
    final = x[-w:].mean()
    trailing = np.convolve(x, np.ones(w) / w, mode="valid")
    ok = np.abs(trailing - final) <= tol * abs(final)
    return int(np.argmax(ok)) + w - 1


@dataclass
class EvalReport:
    scenario: str
    returns: np.ndarray  # (trials, adaptation index)
    rollouts_used: int

    @property
    def mean(self) -> np.ndarray:
        return self.returns.mean(axis=0)

    @property
    def std(self) -> np.ndarray:
        return self.returns.std(axis=0)

    @property
    def zero_shot(self) -> np.ndarray:
        return self.returns[:, 0]

    @property
    def final(self) -> np.ndarray:
        return self.returns[:, -1]

    def converge_index(self, window: int, tol: float) -> int:
        return batches_to_converge(self.mean, window, tol)

    def rows(self) -> list[tuple[int, int, float, str]]:
        return [
            (trial, idx, float(self.returns[trial, idx]), self.scenario)
            for trial in range(self.returns.shape[0])
            for idx in range(self.returns.shape[1])
        ]


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, trial, 7919])


def eval_adaptation(
    artifact: Policy | DynamicsModel,
    scenario: str,
    hp: Hyperparams,
    seed: int,
    adapt_steps: int | None = None,
) -> EvalReport:
    """Adapt to a held-out task and record returns after every step.

    Index 0 is the zero-shot return. Each index consumes
    ``hp.eval_rollouts`` environment rollouts, after which one adaptation
    step is taken on them (policy gradient for a policy, model regression on
    all data gathered so far for a dynamics model driving MPC).
    """
    steps = hp.eval_adapt_steps if adapt_steps is None else adapt_steps
    if steps < 0:
        raise ValueError("adapt_steps must be >= 0")
    cfg = PlanConfig(hp.n_candidate, hp.mpc_horizon, hp.gamma)
    returns = np.zeros((hp.mc_trials, steps + 1))
    used = 0
    for trial in range(hp.mc_trials):
        rng = _trial_rng(seed, trial)
        task = scenario_task(scenario, rng)
        current = artifact
        seen = []
        for idx in range(steps + 1):
            if isinstance(current, Policy):
                trajs = [
                    lander.rollout(task, current, rng, hp.max_rollout_len, param_tag=current.tag)
                    for _ in range(hp.eval_rollouts)
                ]
            else:
                trajs = [mb_rollout(task, current, cfg, rng, hp.max_rollout_len) for _ in range(hp.eval_rollouts)]
            used += len(trajs)
            returns[trial, idx] = np.mean([t.total_reward for t in trajs])
            if idx == steps:
                break
            if isinstance(current, Policy):
                current = pol.adapt(current, trajs, hp.test_lr, hp.gamma, hp.grad_clip)
            else:
                seen.extend(trajs)
                current = dyn.adapt(current, TransitionBatch.from_trajectories(seen), hp.alpha, 1)
    return EvalReport(scenario, returns, used)


def evaluate_policy(policy: Policy, hp: Hyperparams, seed: int, n_tasks: int = 20, rollouts: int = 2) -> float:
    """Mean zero-shot env return on fresh training-distribution tasks."""
    rng = np.random.default_rng([seed, 104729])
    out = []
    for _ in range(n_tasks):
        task = lander.sample_task(rng)
        out.extend(lander.rollout(task, policy, rng, hp.max_rollout_len).total_reward for _ in range(rollouts))
    return float(np.mean(out))


def summarize(trace, hp: Hyperparams) -> dict[str, float]:
    """Table-style summary of a training trace."""
    series = [r.mean_return for r in trace]
    idx = batches_to_converge(series, hp.return_window, hp.return_tol)
    return {
        "return_mean_after_convergence": float(np.mean(series[idx:])),
        "converge_iteration": idx,
        "batches_to_converge": (idx + 1) * hp.meta_batch_size,
        "env_batches_to_converge": trace[idx].env_batches,
    }
