"""Categorical MLP policy, REINFORCE gradients and first-order MAML updates."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np

from . import env as lander
from .core import MlpSpec, ShapeError, backward_logits, clip_by_norm, forward, forward_logits, init_params, sgd_step, softmax
from .data import Trajectory

POLICY_HIDDEN = (64, 64)
DEFAULT_CLIP = 10.0
# Fixed input standardization for lander observations (x, y, vx, vy, fuel).
# Raw altitude sits near 10, which would otherwise dominate the first layer.
LANDER_OBS_MEAN = (0.0, 5.0, 0.0, 0.0, 0.5)
LANDER_OBS_STD = (5.0, 5.0, 2.0, 2.0, 0.5)


class ProvenanceError(ValueError):
    """Trajectories were not sampled from the parameters being differentiated."""


def default_spec(obs_dim: int = lander.OBS_DIM, n_actions: int = lander.N_ACTIONS, hidden=POLICY_HIDDEN) -> MlpSpec:
    return MlpSpec.build(obs_dim, hidden, n_actions, head="softmax")


def params_tag(params: np.ndarray) -> str:
    return hashlib.sha1(np.ascontiguousarray(params, dtype=np.float64).tobytes()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class Policy:
    """Softmax policy over ``mlp((obs - obs_mean) / obs_std)``.

    The standardization constants are fixed, never trained; they default
    to the identity.
    """

    spec: MlpSpec
    params: np.ndarray
    obs_mean: np.ndarray = field(default=None)
    obs_std: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        if self.spec.head != "softmax":
            raise ValueError("a policy network needs a softmax head")
        params = np.array(self.params, dtype=np.float64)
        if params.shape != (self.spec.n_params,):
            raise ShapeError("parameter vector does not match the network layout")
        params.flags.writeable = False
        object.__setattr__(self, "params", params)
        dim = self.spec.input_dim
        for name, fill in (("obs_mean", 0.0), ("obs_std", 1.0)):
            value = getattr(self, name)
            value = np.full(dim, fill) if value is None else np.array(value, dtype=np.float64)
            if value.shape != (dim,):
                raise ShapeError(f"{name} must have shape ({dim},)")
            value.flags.writeable = False
            object.__setattr__(self, name, value)
        if np.any(self.obs_std <= 0):
            raise ValueError("obs_std must be positive")

    @classmethod
    def create(cls, rng: np.random.Generator, spec: MlpSpec | None = None) -> "Policy":
        """Glorot init; the default lander network also gets the lander input scaling."""
        if spec is None:
            return cls(default_spec(), init_params(default_spec(), rng), LANDER_OBS_MEAN, LANDER_OBS_STD)
        return cls(spec, init_params(spec, rng))

    def features(self, obs: np.ndarray) -> np.ndarray:
        return (np.asarray(obs, dtype=np.float64) - self.obs_mean) / self.obs_std

    @cached_property
    def tag(self) -> str:
        return params_tag(self.params)

    @property
    def n_actions(self) -> int:
        return self.spec.output_dim

    def with_params(self, params: np.ndarray) -> "Policy":
        return replace(self, params=params)

    def sample(self, obs: np.ndarray, rng: np.random.Generator) -> int:
        """Inverse-CDF draw from pi(.|obs); consumes exactly one uniform."""
        p = action_distribution(self, obs)
        idx = int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))
        return min(idx, len(p) - 1)

    def __call__(self, obs: np.ndarray, rng: np.random.Generator) -> int:
        return self.sample(obs, rng)


def action_distribution(policy: Policy, s: np.ndarray) -> np.ndarray:
    return forward(policy.spec, policy.params, policy.features(s))


@dataclass(frozen=True)
class ReturnStats:
    returns: np.ndarray
    mean: float
    std: float

    @classmethod
    def of(cls, trajectories: Sequence[Trajectory], gamma: float) -> "ReturnStats":
        if not trajectories:
            raise ValueError("no trajectories")
        r = np.array([t.discounted_return(gamma) for t in trajectories])
        return cls(r, float(r.mean()), float(r.std()))


def rl_loss(trajectories: Sequence[Trajectory], gamma: float) -> float:
    """Negative mean discounted return."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    if not trajectories:
        raise ValueError("rl_loss needs at least one trajectory")
    return -ReturnStats.of(trajectories, gamma).mean


def batch_mean_baseline(to_go: Sequence[np.ndarray]) -> np.ndarray:
    """b_t: mean reward-to-go at step t over the trajectories still running at t."""
    horizon = max(len(g) for g in to_go)
    total, count = np.zeros(horizon), np.zeros(horizon)
    for g in to_go:
        total[: len(g)] += g
        count[: len(g)] += 1
    return total / count


def advantages(trajectories: Sequence[Trajectory], gamma: float, baseline: bool = True) -> list[np.ndarray]:
    """Reward-to-go minus the batch-mean return from the same step.

    Every rollout starts at step 0, so step t lines trajectories up. At
    t = 0 the baseline is the batch-mean return.
    """
    to_go = [t.rewards_to_go(gamma) for t in trajectories]
    if not baseline:
        return to_go
    b = batch_mean_baseline(to_go)
    return [g - b[: len(g)] for g in to_go]


def _stack(policy: Policy, trajectories: Sequence[Trajectory], adv: list[np.ndarray]):
    obs = np.concatenate([t.observations[:-1] for t in trajectories])
    acts = np.concatenate([t.actions for t in trajectories])
    return policy.features(obs), acts, np.concatenate(adv)


def surrogate(policy: Policy, params: np.ndarray, trajectories: Sequence[Trajectory], gamma: float, baseline: bool = True) -> float:
    """-(1/N) sum log pi(a_t|s_t) * A_t, advantages held fixed."""
    obs, acts, adv = _stack(policy, trajectories, advantages(trajectories, gamma, baseline))
    logits = forward_logits(policy.spec, params, obs)
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-np.sum(logp[np.arange(len(acts)), acts] * adv) / len(trajectories))


def _gradient_at(policy: Policy, params: np.ndarray, trajectories: Sequence[Trajectory], gamma: float, baseline: bool) -> np.ndarray:
    if not trajectories:
        raise ValueError("policy gradient needs at least one trajectory")
    obs, acts, adv = _stack(policy, trajectories, advantages(trajectories, gamma, baseline))
    p = softmax(forward_logits(policy.spec, params, obs))
    dlogp = -p
    dlogp[np.arange(len(acts)), acts] += 1.0
    upstream = -(adv[:, None] * dlogp) / len(trajectories)
    return backward_logits(policy.spec, params, obs, upstream)


def _check_tags(policy: Policy, trajectories: Sequence[Trajectory]) -> None:
    tag = policy.tag
    for t in trajectories:
        if t.param_tag != tag:
            raise ProvenanceError(f"trajectory sampled under {t.param_tag}, differentiating {tag}")


def policy_gradient(policy: Policy, trajectories: Sequence[Trajectory], gamma: float, baseline: bool = True) -> np.ndarray:
    """REINFORCE estimate of the gradient of the RL loss at ``policy.params``."""
    _check_tags(policy, trajectories)
    return _gradient_at(policy, policy.params, trajectories, gamma, baseline)


def adapt(policy: Policy, trajectories: Sequence[Trajectory], lr: float, gamma: float, clip: float = DEFAULT_CLIP) -> Policy:
    """One inner policy-gradient step; returns a new policy."""
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    grad = clip_by_norm(policy_gradient(policy, trajectories, gamma), clip)
    return policy.with_params(sgd_step(policy.params, grad, lr))


def meta_step(
    policy: Policy,
    tasks: Sequence[tuple[Sequence[Trajectory], Sequence[Trajectory]]],
    beta_inner: float,
    beta_meta: float,
    gamma: float,
    clip: float = DEFAULT_CLIP,
) -> Policy:
    """First-order MAML update of Phi.

    Per task: adapt on the train trajectories, then take the REINFORCE
    gradient of the test trajectories at the adapted parameters. Both
    splits must come from the meta-parameters themselves.
    """
    if not tasks:
        raise ValueError("meta_step needs at least one task")
    total = np.zeros_like(policy.params)
    for train, test in tasks:
        _check_tags(policy, test)
        adapted = adapt(policy, train, beta_inner, gamma, clip)
        total += _gradient_at(policy, adapted.params, test, gamma, True)
    grad = clip_by_norm(total / len(tasks), clip)
    return policy.with_params(sgd_step(policy.params, grad, beta_meta))
