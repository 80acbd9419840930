"""Trajectories, the real-data buffer and train/test splitting."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

ENV = "env"
SIM = "sim"


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One rollout.

    ``observations`` has one more row than ``actions``/``rewards``: the last
    row is the final state. ``param_tag`` identifies the policy parameters
    that generated the actions (None for non-parametric controllers).
    """

    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    task_id: int = -1
    provenance: str = ENV
    param_tag: str | None = None
    terminal_kind: str = "none"

    def __post_init__(self) -> None:
        if self.provenance not in (ENV, SIM):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        n = len(self.actions)
        if n == 0:
            raise ValueError("a trajectory needs at least one step")
        if len(self.rewards) != n or len(self.observations) != n + 1:
            raise ValueError("observations must have exactly one more row than actions and rewards")
        for arr in (self.observations, self.actions, self.rewards):
            arr.flags.writeable = False

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def total_reward(self) -> float:
        return float(np.sum(self.rewards))

    def discounted_return(self, gamma: float) -> float:
        return float(np.sum(self.rewards * gamma ** np.arange(len(self))))

    def rewards_to_go(self, gamma: float) -> np.ndarray:
        out = np.empty(len(self))
        acc = 0.0
        for t in range(len(self) - 1, -1, -1):
            acc = self.rewards[t] + gamma * acc
            out[t] = acc
        return out

    def same_as(self, other: "Trajectory") -> bool:
        return (
            np.array_equal(self.observations, other.observations)
            and np.array_equal(self.actions, other.actions)
            and np.array_equal(self.rewards, other.rewards)
            and self.terminal_kind == other.terminal_kind
        )


@dataclass
class TransitionBatch:
    """Arrays of (s_t, a_t, s_{t+1}) tuples."""

    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray

    def __post_init__(self) -> None:
        self.states = np.asarray(self.states, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.next_states = np.asarray(self.next_states, dtype=np.float64)
        if not (len(self.states) == len(self.actions) == len(self.next_states)):
            raise ValueError("transition arrays have inconsistent lengths")

    def __len__(self) -> int:
        return len(self.actions)

    @classmethod
    def from_trajectories(cls, trajectories: Iterable[Trajectory]) -> "TransitionBatch":
        trajectories = list(trajectories)
        if not trajectories:
            return cls(np.zeros((0, 0)), np.zeros(0, dtype=np.int64), np.zeros((0, 0)))
        return cls(
            np.concatenate([t.observations[:-1] for t in trajectories]),
            np.concatenate([t.actions for t in trajectories]),
            np.concatenate([t.observations[1:] for t in trajectories]),
        )


def split(trajectories: Sequence[Trajectory], train_fraction: float = 0.5) -> tuple[list, list]:
    """Deterministic split: the first part goes to train, the rest to test.

    Both halves are non-empty whenever at least two trajectories are given.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    n = len(trajectories)
    if n < 2:
        raise ValueError("need at least two trajectories to split")
    n_train = min(max(int(round(n * train_fraction)), 1), n - 1)
    return list(trajectories[:n_train]), list(trajectories[n_train:])


@dataclass
class DataBuffer:
    """Real-environment trajectories grouped by task id.

    Only env-provenance trajectories are accepted. Once frozen, the buffer
    rejects further appends.
    """

    by_task: dict[int, list[Trajectory]] = field(default_factory=dict)
    inserted: int = 0
    frozen: bool = False

    def add(self, trajectory: Trajectory) -> None:
        if self.frozen:
            raise RuntimeError("data buffer is frozen")
        if trajectory.provenance != ENV:
            raise ValueError("only environment trajectories may enter the buffer")
        self.by_task.setdefault(trajectory.task_id, []).append(trajectory)
        self.inserted += 1

    def extend(self, trajectories: Iterable[Trajectory]) -> None:
        for t in trajectories:
            self.add(t)

    def __len__(self) -> int:
        return self.inserted

    @property
    def task_ids(self) -> list[int]:
        return sorted(self.by_task)

    def trajectories(self, task_id: int | None = None) -> list[Trajectory]:
        if task_id is not None:
            return list(self.by_task[task_id])
        return [t for tid in self.task_ids for t in self.by_task[tid]]

    def sample_tasks(self, rng: np.random.Generator, n: int) -> list[int]:
        """Uniformly pick task ids, without replacement when the buffer allows it."""
        ids = self.task_ids
        if not ids:
            raise RuntimeError("data buffer is empty")
        picks = rng.choice(len(ids), size=n, replace=len(ids) < n)
        return [ids[int(i)] for i in picks]
