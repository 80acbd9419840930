"""Two-phase double meta-RL training and the MF/MB baselines.

Phase 1 meta-trains the policy and the dynamics model together on real
rollouts and fills the buffer. Once the model's validation loss plateaus,
the environment is locked and phase 2 meta-trains the policy on rollouts
simulated by task-adapted copies of the model.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import dynamics as dyn
from . import env as lander
from . import policy as pol
from .config import Hyperparams
from .data import SIM, DataBuffer, Trajectory, TransitionBatch, split
from .dynamics import DynamicsModel
from .mpc import PlanConfig, mb_rollout
from .policy import Policy

TRACE_HEADER = ("iteration", "phase", "mean_return", "model_val_loss", "env_batches", "sim_batches", "wall_ms")


class EnvLockedError(AssertionError):
    """The real environment was touched while it is locked (phase 2)."""


class EnvGate:
    """Counts real-environment steps and rollouts; refuses steps while locked."""

    def __init__(self) -> None:
        self.steps = 0
        self.locked = False

    def step(self, task, state, action, max_steps=lander.MAX_ROLLOUT_LEN):
        if self.locked:
            raise EnvLockedError("environment access during phase 2")
        self.steps += 1
        return lander.step(task, state, action, max_steps)


@dataclass(frozen=True)
class TrainRecord:
    iteration: int
    phase: str
    mean_return: float
    model_val_loss: float
    env_batches: int
    sim_batches: int
    wall_ms: float

    def row(self) -> list[str]:
        return [
            str(self.iteration),
            self.phase,
            repr(self.mean_return),
            repr(self.model_val_loss),
            str(self.env_batches),
            str(self.sim_batches),
            f"{self.wall_ms:.1f}",
        ]


def model_converged(history: list[float], window: int, tol: float) -> bool:
    """True iff the last ``window`` losses have relative range <= ``tol``."""
    if window < 2:
        raise ValueError("window must be >= 2")
    if len(history) < window:
        return False
    recent = np.asarray(history[-window:], dtype=np.float64)
    if not np.all(np.isfinite(recent)):
        return False
    spread = recent.max() - recent.min()
    scale = abs(recent.mean())
    if scale == 0.0:
        return spread == 0.0
    return bool(spread / scale <= tol)


def simulate_rollout(
    model,
    policy: Callable[[np.ndarray, np.random.Generator], int],
    rng: np.random.Generator,
    max_len: int = lander.MAX_ROLLOUT_LEN,
    *,
    task_id: int = -1,
    init: Callable[[np.random.Generator], np.ndarray] | None = None,
) -> Trajectory:
    """Roll ``policy`` inside the transition model, scoring predicted states with the true reward."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    obs = init(rng) if init is not None else lander.reset(None, rng).observation()
    observations = [np.asarray(obs, dtype=np.float64)]
    actions: list[int] = []
    rewards: list[float] = []
    kind = "none"
    for t in range(max_len):
        a = int(policy(observations[-1], rng))
        nxt = dyn.predict_next(model, observations[-1], a)
        r, code = lander.obs_transition_reward(observations[-1], a, nxt)
        actions.append(a)
        rewards.append(float(r))
        observations.append(nxt)
        code = int(code)
        if code == 0 and t + 1 >= max_len:
            code = 4
        if code != 0:
            kind = lander.TERMINAL_KINDS[code]
            break
    return Trajectory(
        observations=np.array(observations),
        actions=np.array(actions, dtype=np.int64),
        rewards=np.array(rewards),
        task_id=task_id,
        provenance=SIM,
        param_tag=getattr(policy, "tag", None),
        terminal_kind=kind,
    )


def _transitions(trajectories) -> TransitionBatch:
    return TransitionBatch.from_trajectories(trajectories)


def _model_meta_update(model: DynamicsModel, tasks, hp: Hyperparams) -> tuple[DynamicsModel, float]:
    # the reported validation loss is the one seen before the first outer step
    model, val = dyn.meta_step(model, tasks, hp.alpha, hp.alpha_meta)
    for _ in range(hp.model_meta_steps - 1):
        model, _ = dyn.meta_step(model, tasks, hp.alpha, hp.alpha_meta)
    return model, val


def _mean_return(trajectories) -> float:
    return float(np.mean([t.total_reward for t in trajectories]))


@dataclass
class Trainer:
    """Mutable training state driven one iteration at a time.

    ``learn_model=False`` gives the model-free MAML baseline: same data
    collection and policy updates, no dynamics model at all.
    ``phase2_model`` replaces per-task adaptation in phase 2 with a fixed
    transition model looked up by task id (used to inject the simulator).
    """

    hp: Hyperparams
    rng: np.random.Generator
    policy: Policy
    model: Optional[DynamicsModel] = None
    learn_model: bool = True
    buffer: DataBuffer = field(default_factory=DataBuffer)
    gate: EnvGate = field(default_factory=EnvGate)
    phase: int = 1
    iteration: int = 0
    env_batches: int = 0
    sim_batches: int = 0
    val_history: list[float] = field(default_factory=list)
    trace: list[TrainRecord] = field(default_factory=list)
    switch_at: Optional[int] = None
    next_task_id: int = 0
    task_specs: dict[int, lander.TaskSpec] = field(default_factory=dict)
    phase2_model: Optional[Callable[[int], object]] = None

    @classmethod
    def create(cls, hp: Hyperparams, seed: int, learn_model: bool = True) -> "Trainer":
        rng = np.random.default_rng(seed)
        policy = Policy.create(rng)
        model = DynamicsModel.create(rng) if learn_model else None
        return cls(hp=hp, rng=rng, policy=policy, model=model, learn_model=learn_model)

    def _record(self, phase: str, mean_return: float, val: float, start: float) -> TrainRecord:
        rec = TrainRecord(
            self.iteration, phase, mean_return, val, self.env_batches, self.sim_batches,
            (time.perf_counter() - start) * 1e3,
        )
        self.trace.append(rec)
        self.iteration += 1
        return rec

    def phase1_iteration(self) -> TrainRecord:
        if self.phase != 1:
            raise RuntimeError("phase1_iteration called outside phase 1")
        start = time.perf_counter()
        hp, rng = self.hp, self.rng
        policy_tasks = []
        model_tasks = []
        collected = []
        for _ in range(hp.meta_batch_size):
            task = lander.sample_task(rng)
            tid = self.next_task_id
            self.next_task_id += 1
            self.task_specs[tid] = task
            trajs = [
                lander.rollout(
                    task, self.policy, rng, hp.max_rollout_len,
                    task_id=tid, param_tag=self.policy.tag, step_fn=self.gate.step,
                )
                for _ in range(hp.rollouts_per_task)
            ]
            self.buffer.extend(trajs)
            collected.extend(trajs)
            train, test = split(trajs, hp.train_fraction)
            policy_tasks.append((train, test))
            model_tasks.append((_transitions(train), _transitions(test)))
        self.env_batches += hp.meta_batch_size

        self.policy = pol.meta_step(self.policy, policy_tasks, hp.beta, hp.beta_meta, hp.gamma, hp.grad_clip)
        val = float("nan")
        if self.learn_model:
            self.model = self.model.with_statistics(_transitions(self.buffer.trajectories()))
            self.model, val = _model_meta_update(self.model, model_tasks, hp)
            self.val_history.append(val)
        return self._record("1" if self.learn_model else "mf", _mean_return(collected), val, start)

    def should_switch(self) -> bool:
        if not self.learn_model or self.phase != 1:
            return False
        if self.hp.switch_iteration is not None:
            return self.iteration >= self.hp.switch_iteration
        return model_converged(self.val_history, self.hp.conv_window, self.hp.conv_tol)

    def switch_phase(self) -> None:
        self.phase = 2
        self.switch_at = self.iteration
        self.buffer.frozen = True
        self.gate.locked = True

    def phase2_iteration(self) -> TrainRecord:
        if self.phase != 2:
            raise RuntimeError("phase2_iteration called outside phase 2")
        if not self.gate.locked:
            raise AssertionError("environment must be locked in phase 2")
        start = time.perf_counter()
        hp, rng = self.hp, self.rng
        steps_before = self.gate.steps
        tasks = []
        simulated = []
        support_losses = []
        for tid in self.buffer.sample_tasks(rng, hp.meta_batch_size):
            support = _transitions(self.buffer.trajectories(tid))
            if self.phase2_model is not None:
                adapted = self.phase2_model(tid)
            else:
                adapted = dyn.adapt(self.model, support, hp.phase2_lr, hp.phase2_model_steps, hp.phase2_model_tol)
            support_losses.append(dyn.model_loss(adapted, support))
            sims = [
                simulate_rollout(adapted, self.policy, rng, hp.max_rollout_len, task_id=tid)
                for _ in range(hp.rollouts_per_task)
            ]
            simulated.extend(sims)
            tasks.append(split(sims, hp.train_fraction))
        self.policy = pol.meta_step(self.policy, tasks, hp.beta, hp.beta_meta, hp.gamma, hp.grad_clip)
        self.sim_batches += hp.meta_batch_size
        assert self.gate.steps == steps_before
        return self._record("2", _mean_return(simulated), float(np.mean(support_losses)), start)

    def run(self) -> list[TrainRecord]:
        while self.iteration < self.hp.n_iterations:
            if self.phase == 1:
                self.phase1_iteration()
                if self.should_switch():
                    self.switch_phase()
            else:
                self.phase2_iteration()
        return self.trace


@dataclass
class TrainResult:
    policy: Optional[Policy]
    model: Optional[DynamicsModel]
    trace: list[TrainRecord]
    switch_at: Optional[int] = None
    buffer: Optional[DataBuffer] = None
    env_steps: int = 0


def train_dmrl(hp: Hyperparams, seed: int) -> TrainResult:
    trainer = Trainer.create(hp, seed, learn_model=True)
    trainer.run()
    return TrainResult(trainer.policy, trainer.model, trainer.trace, trainer.switch_at, trainer.buffer, trainer.gate.steps)


def train_mf_baseline(hp: Hyperparams, seed: int) -> TrainResult:
    trainer = Trainer.create(hp, seed, learn_model=False)
    trainer.run()
    return TrainResult(trainer.policy, None, trainer.trace, None, trainer.buffer, trainer.gate.steps)


class MBTrainer:
    """Model-based MAML baseline: meta-learned dynamics driving random-shooting MPC."""

    def __init__(self, hp: Hyperparams, seed: int):
        self.hp = hp
        self.rng = np.random.default_rng(seed)
        self.model = DynamicsModel.create(self.rng)
        self.cfg = PlanConfig(hp.n_candidate, hp.mpc_horizon, hp.gamma)
        self.buffer = DataBuffer()
        self.gate = EnvGate()
        self.iteration = 0
        self.env_batches = 0
        self.trace: list[TrainRecord] = []
        self.next_task_id = 0

    def iteration_step(self) -> TrainRecord:
        start = time.perf_counter()
        hp, rng = self.hp, self.rng
        n_train = split(list(range(hp.rollouts_per_task)), hp.train_fraction)[0]
        tasks = []
        collected = []
        for _ in range(hp.meta_batch_size):
            task = lander.sample_task(rng)
            tid = self.next_task_id
            self.next_task_id += 1
            train = [
                mb_rollout(task, self.model, self.cfg, rng, hp.max_rollout_len, task_id=tid, step_fn=self.gate.step)
                for _ in n_train
            ]
            adapted = dyn.adapt(self.model, _transitions(train), hp.alpha, 1)
            test = [
                mb_rollout(task, adapted, self.cfg, rng, hp.max_rollout_len, task_id=tid, step_fn=self.gate.step)
                for _ in range(hp.rollouts_per_task - len(n_train))
            ]
            self.buffer.extend(train + test)
            collected.extend(train + test)
            tasks.append((_transitions(train), _transitions(test)))
        self.env_batches += hp.meta_batch_size
        self.model = self.model.with_statistics(_transitions(self.buffer.trajectories()))
        self.model, val = _model_meta_update(self.model, tasks, hp)
        rec = TrainRecord(
            self.iteration, "mb", _mean_return(collected), val, self.env_batches, 0,
            (time.perf_counter() - start) * 1e3,
        )
        self.trace.append(rec)
        self.iteration += 1
        return rec

    def run(self) -> list[TrainRecord]:
        while self.iteration < self.hp.n_iterations:
            self.iteration_step()
        return self.trace


def train_mb_baseline(hp: Hyperparams, seed: int) -> TrainResult:
    trainer = MBTrainer(hp, seed)
    trainer.run()
    return TrainResult(None, trainer.model, trainer.trace, None, trainer.buffer, trainer.gate.steps)
