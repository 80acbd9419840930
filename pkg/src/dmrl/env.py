"""Planar windy lander.

A point-mass lander with four discrete thrusters falls from a fixed height
under gravity. Wind enters as linear drag toward the wind velocity, so each
wind process defines a different transition function (one task).

Everything here is a pure function of its arguments; randomness comes only
from caller-supplied ``numpy.random.Generator`` objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import ENV, Trajectory

DT = 0.1
GRAVITY = 1.0
DRAG = 0.5
START_HEIGHT = 10.0
START_FUEL = 100.0
MAX_ROLLOUT_LEN = 150
WIND_LIMIT = 2.0
X_LIMIT = 10.0
PAD_HALF_WIDTH = 1.0
SAFE_SPEED = 1.0
LAND_BONUS = 100.0
CRASH_PENALTY = -100.0

OBS_DIM = 5
N_ACTIONS = 4
NOOP, LEFT, MAIN, RIGHT = 0, 1, 2, 3
ACTION_NAMES = ("noop", "thrust-left", "thrust-main", "thrust-right")
# "left" fires the left-side engine and pushes the lander toward +x
THRUST_X = np.array([0.0, 1.0, 0.0, -1.0])
THRUST_Y = np.array([0.0, 0.0, 2.0, 0.0])
IS_THRUST = np.array([0.0, 1.0, 1.0, 1.0])

TERMINAL_KINDS = ("none", "landed", "crashed", "out_of_bounds", "timeout")


class ContractError(RuntimeError):
    """A caller broke an operation's precondition."""


@dataclass(frozen=True)
class TaskSpec:
    kind: str = "constant"
    wx: float = 0.0
    wy: float = 0.0
    ax: float = 0.0
    ay: float = 0.0
    freq_x: float = 0.0
    freq_y: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "sinusoidal"):
            raise ValueError(f"unknown wind kind {self.kind!r}")
        if self.kind == "constant" and (abs(self.wx) > WIND_LIMIT or abs(self.wy) > WIND_LIMIT):
            raise ValueError("constant wind components must lie in [-2, 2]")

    @classmethod
    def sinusoidal(cls, amplitude: float = 2.0, freq_hz: float = 0.01) -> "TaskSpec":
        return cls(kind="sinusoidal", ax=amplitude, ay=amplitude, freq_x=freq_hz, freq_y=freq_hz)


@dataclass(frozen=True)
class LanderState:
    x: float
    y: float
    vx: float
    vy: float
    fuel: float = START_FUEL
    t: int = 0

    def observation(self) -> np.ndarray:
        return np.array([self.x, self.y, self.vx, self.vy, self.fuel / START_FUEL])


@dataclass(frozen=True)
class StepOutcome:
    next_state: LanderState
    reward: float
    terminal: bool
    terminal_kind: str


def sample_task(rng: np.random.Generator, distribution: str = "train") -> TaskSpec:
    if distribution != "train":
        raise ValueError(f"unknown task distribution {distribution!r}")
    wx, wy = rng.uniform(-WIND_LIMIT, WIND_LIMIT, size=2)
    return TaskSpec("constant", float(wx), float(wy))


def reset(task: TaskSpec | None, rng: np.random.Generator) -> LanderState:
    # the initial-state distribution is shared by every task
    x = float(rng.uniform(-0.5, 0.5))
    return LanderState(x, START_HEIGHT, 0.0, 0.0, START_FUEL, 0)


def wind_at(task: TaskSpec, t: int) -> tuple[float, float]:
    if task.kind == "constant":
        return task.wx, task.wy
    time_s = t * DT
    return (
        task.ax * math.sin(2.0 * math.pi * task.freq_x * time_s),
        task.ay * math.sin(2.0 * math.pi * task.freq_y * time_s),
    )


def integrate(x, y, vx, vy, fuel, action, wx, wy):
    """One semi-implicit Euler step. Works elementwise on floats or arrays."""
    action = np.asarray(action)
    has_fuel = np.asarray(fuel) >= 1.0
    fired = IS_THRUST[action] * has_fuel
    ax = THRUST_X[action] * has_fuel + DRAG * (wx - vx)
    ay = -GRAVITY + THRUST_Y[action] * has_fuel + DRAG * (wy - vy)
    nvx = vx + ax * DT
    nvy = vy + ay * DT
    nx = x + nvx * DT
    ny = y + nvy * DT
    nfuel = fuel - fired
    return nx, ny, nvx, nvy, nfuel


def shaping_reward(x, vx, vy, action):
    """Per-step penalty r(s, a) on the pre-step state."""
    return -0.01 * ((np.abs(x) + np.abs(vx)) + np.abs(vy)) - 0.05 * IS_THRUST[np.asarray(action)]


def contact_kind(nx, ny, nvx, nvy) -> np.ndarray:
    """Terminal codes (indices into TERMINAL_KINDS) for post-step states, timeout excluded."""
    nx, ny, nvx, nvy = (np.asarray(v, dtype=np.float64) for v in (nx, ny, nvx, nvy))
    speed = np.sqrt(nvx * nvx + nvy * nvy)
    landed = (np.abs(nx) <= PAD_HALF_WIDTH) & (speed <= SAFE_SPEED)
    kind = np.zeros(np.broadcast(nx, ny).shape, dtype=np.int64)
    kind = np.where(np.abs(nx) > X_LIMIT, 3, kind)
    kind = np.where(ny <= 0.0, np.where(landed, 1, 2), kind)
    return kind


TERMINAL_BONUS = np.array([0.0, LAND_BONUS, CRASH_PENALTY, CRASH_PENALTY, 0.0])


def obs_transition_reward(obs: np.ndarray, action, next_obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reward and contact code for (batched) observation transitions.

    Used to score transitions predicted by a learned model, where only the
    observation vector is available.
    """
    obs = np.asarray(obs, dtype=np.float64)
    next_obs = np.asarray(next_obs, dtype=np.float64)
    kind = contact_kind(next_obs[..., 0], next_obs[..., 1], next_obs[..., 2], next_obs[..., 3])
    r = shaping_reward(obs[..., 0], obs[..., 2], obs[..., 3], action) + TERMINAL_BONUS[kind]
    return r, kind


def step(task: TaskSpec, state: LanderState, action: int, max_steps: int = MAX_ROLLOUT_LEN) -> StepOutcome:
    if not 0 <= int(action) < N_ACTIONS:
        raise ValueError(f"action {action} out of range")
    if state.y <= 0.0 or abs(state.x) > X_LIMIT or state.t >= max_steps:
        raise ContractError("cannot step a terminal state")
    wx, wy = wind_at(task, state.t)
    nx, ny, nvx, nvy, nfuel = (
        float(v) for v in integrate(state.x, state.y, state.vx, state.vy, state.fuel, int(action), wx, wy)
    )
    nxt = LanderState(nx, ny, nvx, nvy, nfuel, state.t + 1)
    kind = int(contact_kind(nx, ny, nvx, nvy))
    if kind == 0 and nxt.t >= max_steps:
        kind = 4
    reward = float(shaping_reward(state.x, state.vx, state.vy, int(action))) + float(TERMINAL_BONUS[kind])
    return StepOutcome(nxt, reward, kind != 0, TERMINAL_KINDS[kind])


ActionSampler = Callable[[np.ndarray, np.random.Generator], int]
StepFn = Callable[[TaskSpec, LanderState, int, int], StepOutcome]


def rollout(
    task: TaskSpec,
    policy: ActionSampler,
    rng: np.random.Generator,
    max_len: int = MAX_ROLLOUT_LEN,
    *,
    task_id: int = -1,
    param_tag: str | None = None,
    step_fn: StepFn = step,
) -> Trajectory:
    """Run ``policy`` in the true environment until a terminal state or ``max_len`` steps."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    state = reset(task, rng)
    observations = [state.observation()]
    actions: list[int] = []
    rewards: list[float] = []
    kind = "none"
    for _ in range(max_len):
        a = int(policy(observations[-1], rng))
        out = step_fn(task, state, a, max_len)
        actions.append(a)
        rewards.append(out.reward)
        state = out.next_state
        observations.append(state.observation())
        if out.terminal:
            kind = out.terminal_kind
            break
    return Trajectory(
        observations=np.array(observations),
        actions=np.array(actions, dtype=np.int64),
        rewards=np.array(rewards),
        task_id=task_id,
        provenance=ENV,
        param_tag=param_tag,
        terminal_kind=kind,
    )

