"""Learned transition model p_theta(s, a) and its meta-learning updates."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import env as lander
from .core import MlpSpec, ShapeError, backward, forward, init_params, sgd_step
from .data import TransitionBatch

DYNAMICS_HIDDEN = (64, 32)


def default_spec(obs_dim: int = lander.OBS_DIM, n_actions: int = lander.N_ACTIONS, hidden=DYNAMICS_HIDDEN) -> MlpSpec:
    return MlpSpec.build(obs_dim + n_actions, hidden, obs_dim, head="linear")


@dataclass(frozen=True, eq=False)
class DynamicsModel:
    """Residual next-state predictor.

    ``s' = s + delta_scale * mlp(normalize(s) || onehot(a))``. The input
    statistics and output scale are fixed data-derived constants, not
    trainable parameters.
    """

    spec: MlpSpec
    params: np.ndarray
    obs_mean: np.ndarray = field(default=None)
    obs_std: np.ndarray = field(default=None)
    delta_scale: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        obs_dim = self.spec.output_dim
        if self.spec.input_dim <= obs_dim:
            raise ShapeError("dynamics input must hold the state plus an action encoding")
        object.__setattr__(self, "params", np.asarray(self.params, dtype=np.float64))
        if self.params.shape != (self.spec.n_params,):
            raise ShapeError("parameter vector does not match the network layout")
        defaults = {"obs_mean": 0.0, "obs_std": 1.0, "delta_scale": 1.0}
        for name, fill in defaults.items():
            value = getattr(self, name)
            value = np.full(obs_dim, fill) if value is None else np.asarray(value, dtype=np.float64)
            if value.shape != (obs_dim,):
                raise ShapeError(f"{name} must have shape ({obs_dim},)")
            object.__setattr__(self, name, value)
        if np.any(self.obs_std <= 0):
            raise ValueError("obs_std must be positive")

    @classmethod
    def create(cls, rng: np.random.Generator, spec: MlpSpec | None = None) -> "DynamicsModel":
        spec = spec or default_spec()
        return cls(spec, init_params(spec, rng))

    @property
    def obs_dim(self) -> int:
        return self.spec.output_dim

    @property
    def n_actions(self) -> int:
        return self.spec.input_dim - self.spec.output_dim

    def with_params(self, params: np.ndarray) -> "DynamicsModel":
        return replace(self, params=params)

    def with_statistics(self, batch: TransitionBatch, min_std: float = 1e-3) -> "DynamicsModel":
        """Refit input normalization and output scale to ``batch``."""
        mean = batch.states.mean(axis=0)
        std = np.maximum(batch.states.std(axis=0), min_std)
        scale = np.maximum((batch.next_states - batch.states).std(axis=0), min_std)
        return replace(self, obs_mean=mean, obs_std=std, delta_scale=scale)

    def features(self, states: np.ndarray, actions) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        actions = np.atleast_1d(np.asarray(actions, dtype=np.int64))
        if states.shape[1] != self.obs_dim or len(actions) != len(states):
            raise ShapeError(f"states {states.shape} / actions {actions.shape} do not match the model")
        if np.any(actions < 0) or np.any(actions >= self.n_actions):
            raise ValueError("action index out of range")
        onehot = np.zeros((len(actions), self.n_actions))
        onehot[np.arange(len(actions)), actions] = 1.0
        return np.hstack([(states - self.obs_mean) / self.obs_std, onehot])

    def predict_batch(self, states: np.ndarray, actions) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        return states + self.delta_scale * forward(self.spec, self.params, self.features(states, actions))


def predict_next(model, s: np.ndarray, a: int) -> np.ndarray:
    """Predicted next state for one (state, action) pair."""
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 1:
        raise ShapeError("predict_next takes a single state vector")
    return model.predict_batch(s[None, :], [a])[0]


def _check_batch(batch: TransitionBatch) -> None:
    if len(batch) == 0:
        raise ValueError("model loss needs a non-empty transition batch")


def model_loss(model: DynamicsModel, batch: TransitionBatch) -> float:
    """Mean squared L2 error of next-state predictions."""
    _check_batch(batch)
    err = batch.next_states - model.predict_batch(batch.states, batch.actions)
    return float(np.mean(np.sum(err * err, axis=1)))


def model_loss_and_grad(model: DynamicsModel, params: np.ndarray, batch: TransitionBatch) -> tuple[float, np.ndarray]:
    _check_batch(batch)
    x = model.features(batch.states, batch.actions)
    pred = batch.states + model.delta_scale * forward(model.spec, params, x)
    err = batch.next_states - pred
    n = len(batch)
    loss = float(np.mean(np.sum(err * err, axis=1)))
    upstream = (-2.0 / n) * err * model.delta_scale
    return loss, backward(model.spec, params, x, upstream)


def model_grad(model: DynamicsModel, batch: TransitionBatch) -> np.ndarray:
    return model_loss_and_grad(model, model.params, batch)[1]


def adapt(
    model: DynamicsModel,
    support: TransitionBatch,
    lr: float,
    steps: int = 1,
    tol: float | None = None,
) -> DynamicsModel:
    """Inner-loop adaptation: ``steps`` gradient steps on the support loss.

    With ``tol`` set, stops early once the support loss drops below it.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    params = model.params
    for _ in range(steps):
        loss, grad = model_loss_and_grad(model, params, support)
        if tol is not None and loss < tol:
            break
        params = sgd_step(params, grad, lr)
    return model.with_params(params)


def meta_step(
    model: DynamicsModel,
    tasks: Sequence[tuple[TransitionBatch, TransitionBatch]],
    alpha: float,
    meta_lr: float,
    inner_steps: int = 1,
) -> tuple[DynamicsModel, float]:
    """First-order MAML update of theta.

    Returns the updated model and the mean post-adaptation query loss
    (evaluated before the update).
    """
    if not tasks:
        raise ValueError("meta_step needs at least one task")
    total = np.zeros_like(model.params)
    losses = []
    for support, query in tasks:
        adapted = adapt(model, support, alpha, inner_steps)
        loss, grad = model_loss_and_grad(model, adapted.params, query)
        total += grad
        losses.append(loss)
    new_params = sgd_step(model.params, total / len(tasks), meta_lr)
    return model.with_params(new_params), float(np.mean(losses))


class OracleModel:
    """The true simulator exposed through the learned-model interface.

    Only meaningful for wind that does not depend on time.
    """

    n_actions = lander.N_ACTIONS
    obs_dim = lander.OBS_DIM

    def __init__(self, task: lander.TaskSpec):
        if task.kind != "constant":
            raise ValueError("the oracle model needs a time-invariant task")
        self.task = task

    def predict_batch(self, states: np.ndarray, actions) -> np.ndarray:
        s = np.atleast_2d(np.asarray(states, dtype=np.float64))
        fuel = np.round(s[:, 4] * lander.START_FUEL)
        nx, ny, nvx, nvy, nfuel = lander.integrate(
            s[:, 0], s[:, 1], s[:, 2], s[:, 3], fuel, np.asarray(actions, dtype=np.int64), self.task.wx, self.task.wy
        )
        return np.stack([nx, ny, nvx, nvy, nfuel / lander.START_FUEL], axis=1)
