"""Scalarized tabular Q-learning (SQ-L)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .core import Preference, scalarize
from .errors import ContractError

SEED_BOUND = 2 ** 63


@dataclass(frozen=True)
class LearnerParams:
    alpha: float = 0.1
    gamma: float = 0.9
    epsilon: float = 0.1
    episodes: int = 200

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ContractError(f"alpha must be in (0, 1], got {self.alpha}")
        if not (0.0 <= self.gamma < 1.0):
            raise ContractError(f"gamma must be in [0, 1), got {self.gamma}")
        if not (0.0 <= self.epsilon <= 1.0):
            raise ContractError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if self.episodes < 0:
            raise ContractError(f"episodes must be non-negative, got {self.episodes}")


@dataclass
class TabularPolicy:
    """Q-value table indexed by (state id, action id)."""

    q: np.ndarray

    @property
    def num_states(self) -> int:
        return self.q.shape[0]

    @property
    def num_actions(self) -> int:
        return self.q.shape[1]

    def copy(self) -> "TabularPolicy":
        return TabularPolicy(self.q.copy())

    def greedy(self) -> np.ndarray:
        return self.q.argmax(axis=1)


class EpisodeResult(NamedTuple):
    scalarized_return: float
    reward_sum: tuple
    steps: int
    max_delta: float


def init_policy(num_states: int, num_actions: int,
                from_policy: Optional[TabularPolicy] = None) -> TabularPolicy:
    """Zero-initialized table, or a copy of ``from_policy`` when bootstrapping."""
    if num_states <= 0 or num_actions <= 0:
        raise ContractError("policy dimensions must be positive")
    if from_policy is None:
        return TabularPolicy(np.zeros((num_states, num_actions)))
    if from_policy.q.shape != (num_states, num_actions):
        raise ContractError(
            f"bootstrap table has shape {from_policy.q.shape}, expected {(num_states, num_actions)}")
    return from_policy.copy()


def select_action(policy: TabularPolicy, state_id: int, epsilon: float,
                  rng: np.random.Generator) -> int:
    # argmax returns the first maximum, i.e. ties go to the lowest action index
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(policy.q.shape[1]))
    return int(policy.q[state_id].argmax())


def q_update(policy: TabularPolicy, s: int, a: int, rho: float, s_next: int, done: bool,
             alpha: float, gamma: float) -> TabularPolicy:
    """One temporal-difference update of ``Q(s, a)`` in place."""
    q = policy.q
    target = rho if done else rho + gamma * q[s_next].max()
    q[s, a] += alpha * (target - q[s, a])
    return policy


def run_episode(env, policy: TabularPolicy, w: Preference, params: LearnerParams,
                rng: np.random.Generator,
                select: Optional[Callable[[int], int]] = None) -> EpisodeResult:
    """Run one episode of SQ-L, updating ``policy`` in place."""
    q = policy.q
    n_actions = q.shape[1]
    alpha, gamma, eps = params.alpha, params.gamma, params.epsilon
    s = env.state_id(env.reset(int(rng.integers(SEED_BOUND))))
    total = 0.0
    sums = [0.0] * len(w)
    steps = 0
    max_delta = 0.0
    done = False
    while not done:
        if select is not None:
            a = select(s)
        elif eps > 0.0 and rng.random() < eps:
            a = int(rng.integers(n_actions))
        else:
            a = int(q[s].argmax())
        state, r, done = env.step(a)
        s2 = env.state_id(state)
        rho = scalarize(r, w)
        old = q[s, a]
        target = rho if done else rho + gamma * q[s2].max()
        new = old + alpha * (target - old)
        q[s, a] = new
        delta = abs(new - old)
        if delta > max_delta:
            max_delta = delta
        total += rho
        for i, ri in enumerate(r):
            sums[i] += ri
        steps += 1
        s = s2
    return EpisodeResult(total, tuple(sums), steps, float(max_delta))


def run_episodes(env, policy: TabularPolicy, w: Preference, params: LearnerParams,
                 rng: np.random.Generator, on_episode: Optional[Callable[[EpisodeResult], None]] = None):
    """Train ``policy`` for ``params.episodes`` episodes under preference ``w``.

    Returns the (same, mutated) policy and the undiscounted scalarized return
    of every episode.
    """
    if env.num_objectives != len(w):
        raise ContractError(f"environment has {env.num_objectives} objectives, preference has {len(w)}")
    returns = []
    for _ in range(params.episodes):
        res = run_episode(env, policy, w, params, rng)
        returns.append(res.scalarized_return)
        if on_episode is not None:
            on_episode(res)
    return policy, returns
