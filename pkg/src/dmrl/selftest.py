"""Self-checks runnable from the command line.

Each suite compares an implementation against an independent oracle:
central finite differences for the gradients, exhaustive enumeration for
the planner, the true simulator for model rollouts, and a second run for
determinism.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import dynamics as dyn
from . import env as lander
from . import policy as pol
from .config import Hyperparams
from .core import MlpSpec, init_params
from .data import Trajectory, TransitionBatch
from .dynamics import DynamicsModel, OracleModel
from .mpc import PlanConfig, plan_detail
from .policy import Policy
from .trainer import simulate_rollout, train_dmrl

FD_STEP = 1e-5
GRAD_TOL = 1e-4
DEGENERATE_NORM = 1e-8


@dataclass
class SuiteResult:
    name: str
    passed: bool
    cases: int
    failures: int
    worst: float
    seconds: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.cases - self.failures}/{self.cases} cases, worst={self.worst:.3g}, {self.seconds:.1f}s"


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


def central_difference(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    grad = np.empty_like(x)
    for i in range(x.size):
        up, down = x.copy(), x.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (f(up) - f(down)) / (2 * h)
    return grad


def _random_spec(rng: np.random.Generator, input_dim: int, output_dim: int, head: str) -> MlpSpec:
    hidden = rng.integers(2, 9, size=int(rng.integers(1, 3)))
    return MlpSpec.build(input_dim, hidden, output_dim, head)


def _random_policy_case(rng: np.random.Generator):
    obs_dim, n_actions = int(rng.integers(2, 7)), int(rng.integers(2, 5))
    spec = _random_spec(rng, obs_dim, n_actions, "softmax")
    policy = Policy(spec, init_params(spec, rng) + 0.1 * rng.standard_normal(spec.n_params))
    trajs = []
    for _ in range(int(rng.integers(1, 4))):
        length = int(rng.integers(1, 7))
        trajs.append(
            Trajectory(
                observations=rng.standard_normal((length + 1, obs_dim)),
                actions=rng.integers(0, n_actions, size=length),
                rewards=rng.standard_normal(length),
                param_tag=policy.tag,
            )
        )
    return policy, trajs


def _random_model(rng: np.random.Generator, n_actions: int, obs_dim: int = lander.OBS_DIM, hidden=None) -> DynamicsModel:
    spec = _random_spec(rng, obs_dim + n_actions, obs_dim, "linear") if hidden is None else MlpSpec.build(
        obs_dim + n_actions, hidden, obs_dim
    )
    return DynamicsModel(
        spec,
        init_params(spec, rng) + 0.1 * rng.standard_normal(spec.n_params),
        obs_mean=rng.standard_normal(obs_dim),
        obs_std=rng.uniform(0.5, 2.0, obs_dim),
        delta_scale=rng.uniform(0.1, 1.0, obs_dim),
    )


def gradient_cases(n_networks: int = 100, seed: int = 0):
    """Yield (loss name, analytic gradient, finite-difference gradient)."""
    rng = np.random.default_rng(seed)
    for _ in range(n_networks):
        # redraw cases whose true gradient vanishes (dead ReLUs, cancelling
        # advantages): relative error is undefined there
        numeric = np.zeros(1)
        while np.linalg.norm(numeric) < DEGENERATE_NORM:
            policy, trajs = _random_policy_case(rng)
            gamma = float(rng.uniform(0.5, 1.0))
            numeric = central_difference(lambda p: pol.surrogate(policy, p, trajs, gamma), policy.params.copy())
        yield "policy", pol.policy_gradient(policy, trajs, gamma), numeric

        n_actions = int(rng.integers(2, 5))
        model = _random_model(rng, n_actions)
        n = int(rng.integers(1, 20))
        batch = TransitionBatch(
            rng.standard_normal((n, model.obs_dim)),
            rng.integers(0, n_actions, size=n),
            rng.standard_normal((n, model.obs_dim)),
        )
        analytic = dyn.model_grad(model, batch)
        numeric = central_difference(lambda p: dyn.model_loss(model.with_params(p), batch), model.params.copy())
        yield "dynamics", analytic, numeric


def gradient_suite(n_networks: int = 100, seed: int = 0) -> SuiteResult:
    start = time.perf_counter()
    errors = [relative_error(a, b) for _, a, b in gradient_cases(n_networks, seed)]
    failures = sum(e > GRAD_TOL for e in errors)
    return SuiteResult("gradient-oracle", failures == 0, len(errors), failures, max(errors), time.perf_counter() - start)


def brute_force_plan(model, s0: np.ndarray, horizon: int, gamma: float) -> tuple[int, float]:
    """Exhaustive search over every action sequence, one transition at a time."""
    best_first, best_score = -1, -np.inf
    for seq in itertools.product(range(model.n_actions), repeat=horizon):
        s, score, discount = np.asarray(s0, dtype=np.float64), 0.0, 1.0
        for a in seq:
            nxt = dyn.predict_next(model, s, a)
            r, kind = lander.obs_transition_reward(s, a, nxt)
            score += discount * float(r)
            if int(kind) != 0:
                break
            discount *= gamma
            s = nxt
        if score > best_score:
            best_first, best_score = seq[0], score
    return best_first, best_score


def random_plan_state(rng: np.random.Generator) -> np.ndarray:
    return np.array([
        rng.uniform(-3, 3), rng.uniform(0.05, 3), rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0, 1),
    ])


def mpc_cases(n_cases: int = 50, seed: int = 1):
    """Yield (planned action, brute-force action, covered?, score gap)."""
    rng = np.random.default_rng(seed)
    for i in range(n_cases):
        horizon = 1 + i % 3
        model = _random_model(rng, n_actions=2, hidden=(8,))
        s0 = random_plan_state(rng)
        cfg = PlanConfig(n_candidate=64 * 2**horizon, horizon=horizon, gamma=0.95)
        action, candidates, scores = plan_detail(model, s0, cfg, rng)
        covered = len({tuple(c) for c in candidates}) == 2**horizon
        expected, best = brute_force_plan(model, s0, horizon, cfg.gamma)
        yield action, expected, covered, abs(float(scores.max()) - best)


def mpc_suite(n_cases: int = 50, seed: int = 1) -> SuiteResult:
    start = time.perf_counter()
    failures, worst = 0, 0.0
    for action, expected, covered, gap in mpc_cases(n_cases, seed):
        worst = max(worst, gap)
        failures += (not covered) or action != expected
    return SuiteResult("mpc-oracle", failures == 0, n_cases, failures, worst, time.perf_counter() - start)


def oracle_model_cases(n_cases: int = 20, seed: int = 2, max_len: int = 60):
    """Yield (env rollout, simulated rollout) pairs driven by identical seeds."""
    rng = np.random.default_rng(seed)
    for _ in range(n_cases):
        task = lander.sample_task(rng)
        policy = Policy.create(rng)
        case_seed = int(rng.integers(2**31))
        real = lander.rollout(task, policy, np.random.default_rng(case_seed), max_len, param_tag=policy.tag)
        sim = simulate_rollout(OracleModel(task), policy, np.random.default_rng(case_seed), max_len)
        yield real, sim


def oracle_model_suite(n_cases: int = 20, seed: int = 2) -> SuiteResult:
    start = time.perf_counter()
    failures = sum(not real.same_as(sim) for real, sim in oracle_model_cases(n_cases, seed))
    return SuiteResult("oracle-model", failures == 0, n_cases, failures, float(failures), time.perf_counter() - start)


BANDIT_STATE = np.ones(1)


def bandit_rollouts(policy: Policy, best_arm: int, n: int, rng: np.random.Generator) -> list[Trajectory]:
    """One-step episodes on a single-state two-armed bandit paying 1 for ``best_arm``."""
    out = []
    for _ in range(n):
        a = policy.sample(BANDIT_STATE, rng)
        out.append(
            Trajectory(
                observations=np.stack([BANDIT_STATE, BANDIT_STATE]),
                actions=np.array([a]),
                rewards=np.array([1.0 if a == best_arm else 0.0]),
                param_tag=policy.tag,
            )
        )
    return out


def bandit_trial(
    seed: int,
    meta_iterations: int = 20,
    rollouts: int = 20,
    beta: float = 0.5,
    beta_meta: float = 0.05,
) -> tuple[float, float, float, float]:
    """Meta-train on two bandits with opposite optimal arms, then adapt once on each.

    Returns (p0 before, p0 after adapting to arm 0, p1 before, p1 after
    adapting to arm 1).
    """
    rng = np.random.default_rng([seed, 2])
    policy = Policy.create(rng, MlpSpec.build(1, [8], 2, "softmax"))
    for _ in range(meta_iterations):
        tasks = [
            (bandit_rollouts(policy, arm, rollouts, rng), bandit_rollouts(policy, arm, rollouts, rng)) for arm in (0, 1)
        ]
        policy = pol.meta_step(policy, tasks, beta, beta_meta, 1.0)
    p = pol.action_distribution(policy, BANDIT_STATE)
    adapted = [pol.adapt(policy, bandit_rollouts(policy, arm, rollouts, rng), beta, 1.0) for arm in (0, 1)]
    return (
        float(p[0]),
        float(pol.action_distribution(adapted[0], BANDIT_STATE)[0]),
        float(p[1]),
        float(pol.action_distribution(adapted[1], BANDIT_STATE)[1]),
    )


SMOKE_SCALE = dict(meta_batch_size=2, max_rollout_len=15, n_iterations=6, switch_iteration=3, rollouts_per_task=2)


def trace_body(trace) -> list[list[str]]:
    """Trace rows without the wall-clock column."""
    return [rec.row()[:-1] for rec in trace]


def determinism_suite(hp: Hyperparams | None = None, seed: int = 3) -> SuiteResult:
    start = time.perf_counter()
    hp = hp or Hyperparams(**SMOKE_SCALE)
    a = trace_body(train_dmrl(hp, seed).trace)
    b = trace_body(train_dmrl(hp, seed).trace)
    failures = sum(x != y for x, y in zip(a, b)) + abs(len(a) - len(b))
    return SuiteResult("determinism", failures == 0, len(a), failures, float(failures), time.perf_counter() - start)


def run_all() -> list[SuiteResult]:
    return [gradient_suite(), mpc_suite(), oracle_model_suite(), determinism_suite()]
