"""Offline multi-policy baselines (OLS, TLO) and the random-reinit SQ-L baseline."""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from .core import SAMPLED_PREFERENCES, Preference, dominates, scalarize
from .envs import EnvConfig, make_env
from .errors import ContractError, PartialSetError
from .learner import (SEED_BOUND, EpisodeResult, LearnerParams, TabularPolicy, init_policy,
                      run_episode, run_episodes)

EDGE_PREFERENCES = (Preference((0.9, 0.1)), Preference((0.1, 0.9)))
VALUE_WINDOW = 50
CONVERGENCE_TOL = 1e-3
CONVERGENCE_PATIENCE = 20

# Gate objective and its threshold per environment; the other objective is maximized.
DEFAULT_TLO_THRESHOLDS = {
    "sar": (-10.0, -math.inf),
    "dst": (-20.0, -math.inf),
    "rg": (-math.inf, -0.5),
}
DEFAULT_TLO_ORDER = {"sar": (0, 1), "dst": (0, 1), "rg": (1, 0)}


@dataclass(frozen=True)
class OlsParams:
    improvement_threshold: float = 0.01
    max_policies: int = 10
    training_episodes_per_preference: int = 300

    def __post_init__(self):
        if not self.improvement_threshold > 0:
            raise ContractError("improvement_threshold must be positive")
        if self.max_policies < 1 or self.training_episodes_per_preference < 1:
            raise ContractError("OLS budgets must be positive")


@dataclass(frozen=True)
class TloParams:
    """Per-objective thresholds; ``order[0]`` is gated, ``order[1]`` maximized among passing actions."""

    objective_thresholds: tuple
    order: tuple = (0, 1)
    training_episodes: int = 300

    def __post_init__(self):
        object.__setattr__(self, "objective_thresholds", tuple(float(t) for t in self.objective_thresholds))
        object.__setattr__(self, "order", tuple(int(i) for i in self.order))
        if sorted(self.order) != list(range(len(self.objective_thresholds))):
            raise ContractError("order must be a permutation of the objective indices")

    @classmethod
    def for_env(cls, kind: str, **kw) -> "TloParams":
        return cls(DEFAULT_TLO_THRESHOLDS[kind], DEFAULT_TLO_ORDER[kind], **kw)


@dataclass
class TloPolicy:
    """One Q-table per objective, shape ``(M, S, A)``."""

    q: np.ndarray

    def copy(self) -> "TloPolicy":
        return TloPolicy(self.q.copy())


@dataclass
class CoverageEntry:
    preference: Preference
    policy: Union[TabularPolicy, TloPolicy]
    value_vector: tuple

    def __post_init__(self):
        self.value_vector = tuple(float(v) for v in self.value_vector)
        if not all(math.isfinite(v) for v in self.value_vector):
            raise ContractError(f"value vector must be finite: {self.value_vector}")


@dataclass
class CoverageSet:
    kind: str = "sql"
    entries: List[CoverageEntry] = field(default_factory=list)
    tlo: Optional[TloParams] = None
    explored: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def to_dict(self) -> dict:
        doc = {
            "kind": self.kind,
            "entries": [
                {"preference": list(e.preference), "robustness": None,
                 "value_vector": list(e.value_vector), "q_table": e.policy.q.tolist()}
                for e in self.entries
            ],
        }
        if self.tlo is not None:
            doc["tlo"] = {"objective_thresholds": [_json_float(t) for t in self.tlo.objective_thresholds],
                          "order": list(self.tlo.order),
                          "training_episodes": self.tlo.training_episodes}
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "CoverageSet":
        kind = doc.get("kind", "sql")
        wrap = TloPolicy if kind == "tlo" else TabularPolicy
        entries = [CoverageEntry(Preference(tuple(e["preference"])),
                                 wrap(np.asarray(e["q_table"], dtype=float)),
                                 tuple(e["value_vector"]))
                   for e in doc["entries"]]
        tlo = None
        if "tlo" in doc:
            t = doc["tlo"]
            tlo = TloParams(tuple(float(x) for x in t["objective_thresholds"]), tuple(t["order"]),
                            int(t.get("training_episodes", 300)))
        return cls(kind, entries, tlo)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "CoverageSet":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _json_float(x: float):
    return x if math.isfinite(x) else ("-inf" if x < 0 else "inf")


def _as_env(env_or_config):
    return make_env(env_or_config) if isinstance(env_or_config, EnvConfig) else env_or_config


def train_until_converged(env, policy, w: Preference, params: LearnerParams, rng: np.random.Generator,
                          max_episodes: int, episode_fn: Callable = run_episode) -> List[EpisodeResult]:
    """Train until max |dQ| stays below 1e-3 for 20 consecutive episodes, or the episode cap."""
    results = []
    calm = 0
    for _ in range(max_episodes):
        res = episode_fn(env, policy, w, params, rng)
        results.append(res)
        calm = calm + 1 if res.max_delta < CONVERGENCE_TOL else 0
        if calm >= CONVERGENCE_PATIENCE:
            break
    return results


def _value_vector(results: Sequence[EpisodeResult]) -> tuple:
    tail = np.asarray([r.reward_sum for r in results[-VALUE_WINDOW:]], dtype=float)
    return tuple(float(v) for v in tail.mean(axis=0))


def prune_dominated(entries: List[CoverageEntry]) -> List[CoverageEntry]:
    return [e for e in entries
            if not any(dominates(o.value_vector, e.value_vector) for o in entries if o is not e)]


def ols_train(env_config, params: OlsParams, learner_params: LearnerParams,
              rng: np.random.Generator) -> CoverageSet:
    """Offline coverage-set construction by median subdivision of the preference interval.

    Edge policies are trained first; each interval's midpoint policy joins
    only if it beats the set's best scalarized value at that midpoint by more
    than the improvement threshold, and only then is the interval split further.
    """
    env = _as_env(env_config)
    if env.num_objectives != 2:
        raise ContractError("ols_train supports two objectives")
    if params.max_policies < 2:
        raise PartialSetError(f"max_policies={params.max_policies} cannot hold the two edge policies")

    trained = []

    def train_at(w: Preference) -> CoverageEntry:
        trained.append(w)
        policy = init_policy(env.num_states, env.num_actions)
        results = train_until_converged(env, policy, w, learner_params, rng,
                                        params.training_episodes_per_preference)
        return CoverageEntry(w, policy, _value_vector(results))

    entries = [train_at(w) for w in EDGE_PREFERENCES]
    explored = {EDGE_PREFERENCES[0][0], EDGE_PREFERENCES[1][0]}
    queue = deque([(EDGE_PREFERENCES[1][0], EDGE_PREFERENCES[0][0])])
    while queue and len(entries) < params.max_policies:
        lo, hi = queue.popleft()
        mid = round((lo + hi) / 2.0, 12)
        if mid in explored:
            continue
        explored.add(mid)
        w = Preference.two(mid)
        candidate = train_at(w)
        best = max(scalarize(e.value_vector, w) for e in entries)
        if scalarize(candidate.value_vector, w) - best > params.improvement_threshold:
            entries.append(candidate)
            queue.extend([(lo, mid), (mid, hi)])
    return CoverageSet("sql", prune_dominated(entries), explored=trained)


def ols_respond(cs: CoverageSet, w: Preference):
    """Policy of the entry with the highest scalarized value under ``w`` (earliest on ties)."""
    if not cs.entries:
        raise ContractError("coverage set is empty")
    best, best_v = None, -math.inf
    for e in cs.entries:
        v = scalarize(e.value_vector, w)
        if v > best_v:
            best, best_v = e, v
    return best.policy


def tlo_select_action(q_rows: Sequence[Sequence[float]], thresholds: Union[TloParams, Sequence[float]]) -> int:
    if isinstance(thresholds, TloParams):
        gate, target = thresholds.order
        limit = thresholds.objective_thresholds[gate]
    else:
        gate, target = 0, 1
        limit = thresholds[0]
    gate_row, target_row = q_rows[gate], q_rows[target]
    n = len(gate_row)
    if any(len(r) != n for r in q_rows):
        raise ContractError("per-objective Q rows must share the action count")
    best, best_v = -1, -math.inf
    for a in range(n):
        if gate_row[a] > limit and target_row[a] > best_v:
            best, best_v = a, target_row[a]
    if best >= 0:
        return best
    best, best_v = 0, gate_row[0]
    for a in range(1, n):
        if gate_row[a] > best_v:
            best, best_v = a, gate_row[a]
    return best


def tlo_episode(env, policy: TloPolicy, w: Preference, params: LearnerParams, rng: np.random.Generator,
                tlo: TloParams) -> EpisodeResult:
    """One episode with thresholded-lexicographic action selection.

    Every objective's table is updated from the shared transition, bootstrapping
    on the action the lexicographic rule would pick next.
    """
    q = policy.q
    m, _, n_actions = q.shape
    alpha, gamma, eps = params.alpha, params.gamma, params.epsilon
    s = env.state_id(env.reset(int(rng.integers(SEED_BOUND))))
    total, sums, steps, max_delta = 0.0, [0.0] * m, 0, 0.0
    a = tlo_select_action(q[:, s, :], tlo)
    done = False
    while not done:
        if eps > 0.0 and rng.random() < eps:
            a = int(rng.integers(n_actions))
        state, r, done = env.step(a)
        s2 = env.state_id(state)
        a2 = tlo_select_action(q[:, s2, :], tlo)
        for i in range(m):
            old = q[i, s, a]
            target = r[i] if done else r[i] + gamma * q[i, s2, a2]
            q[i, s, a] = old + alpha * (target - old)
            max_delta = max(max_delta, abs(q[i, s, a] - old))
            sums[i] += r[i]
        total += scalarize(r, w)
        steps += 1
        s, a = s2, a2
    return EpisodeResult(total, tuple(sums), steps, float(max_delta))


def tlo_train(env_config, tlo: TloParams, learner_params: LearnerParams, rng: np.random.Generator,
              preferences: Sequence[Preference] = SAMPLED_PREFERENCES) -> CoverageSet:
    """Train one TLO policy per schedule preference offline, recording value vectors."""
    env = _as_env(env_config)
    m = env.num_objectives
    if len(tlo.objective_thresholds) != m:
        raise ContractError(f"need {m} objective thresholds, got {len(tlo.objective_thresholds)}")
    entries = []
    episode = lambda e, p, w, lp, g: tlo_episode(e, p, w, lp, g, tlo)
    for w in preferences:
        policy = TloPolicy(np.zeros((m, env.num_states, env.num_actions)))
        results = train_until_converged(env, policy, w, learner_params, rng, tlo.training_episodes, episode)
        entries.append(CoverageEntry(w, policy, _value_vector(results)))
    return CoverageSet("tlo", entries, tlo)


def sql_random_baseline(env_config, w: Preference, learner_params: LearnerParams, rng: np.random.Generator):
    """Fresh zero-initialized SQ-L policy for one preference; nothing carries over."""
    env = _as_env(env_config)
    policy = init_policy(env.num_states, env.num_actions)
    return run_episodes(env, policy, w, learner_params, rng)
