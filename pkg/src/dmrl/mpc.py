"""Random-shooting MPC over a learned (or oracle) transition model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import env as lander
from .data import Trajectory


@dataclass(frozen=True)
class PlanConfig:
    n_candidate: int = 1000
    horizon: int = 10
    gamma: float = 0.99

    def __post_init__(self) -> None:
        if self.n_candidate < 1 or self.horizon < 1:
            raise ValueError("n_candidate and horizon must be >= 1")


def score_sequences(model, s0: np.ndarray, sequences: np.ndarray, gamma: float) -> np.ndarray:
    """Discounted predicted return of each row of ``sequences`` from ``s0``.

    Rewards stop accumulating once a predicted state is terminal; the
    prediction itself keeps running so the batch stays rectangular.
    """
    seqs = np.atleast_2d(np.asarray(sequences, dtype=np.int64))
    n, horizon = seqs.shape
    if horizon < 1:
        raise ValueError("action sequences must be non-empty")
    states = np.repeat(np.asarray(s0, dtype=np.float64)[None, :], n, axis=0)
    alive = np.ones(n, dtype=bool)
    total = np.zeros(n)
    discount = 1.0
    for t in range(horizon):
        a = seqs[:, t]
        nxt = model.predict_batch(states, a)
        r, kind = lander.obs_transition_reward(states, a, nxt)
        total += np.where(alive, discount * r, 0.0)
        alive &= kind == 0
        discount *= gamma
        states = nxt
    return total


def score_sequence(model, s0: np.ndarray, seq, gamma: float) -> float:
    return float(score_sequences(model, s0, np.asarray(seq)[None, :], gamma)[0])


def sample_candidates(n_actions: int, cfg: PlanConfig, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, n_actions, size=(cfg.n_candidate, cfg.horizon))


def plan_detail(model, s0: np.ndarray, cfg: PlanConfig, rng: np.random.Generator):
    """(chosen action, candidate sequences, their scores)."""
    candidates = sample_candidates(model.n_actions, cfg, rng)
    scores = score_sequences(model, s0, candidates, cfg.gamma)
    best = int(np.argmax(scores))  # first index wins ties
    return int(candidates[best, 0]), candidates, scores


def plan(model, s0: np.ndarray, cfg: PlanConfig, rng: np.random.Generator) -> int:
    return plan_detail(model, s0, cfg, rng)[0]


def mb_rollout(
    task: lander.TaskSpec,
    model,
    cfg: PlanConfig,
    rng: np.random.Generator,
    max_len: int = lander.MAX_ROLLOUT_LEN,
    *,
    task_id: int = -1,
    step_fn=lander.step,
) -> Trajectory:
    """Environment rollout with an action re-planned at every step."""

    def controller(obs: np.ndarray, r: np.random.Generator) -> int:
        return plan(model, obs, cfg, r)

    return lander.rollout(task, controller, rng, max_len, task_id=task_id, step_fn=step_fn)
