"""Small deterministic two-objective MDPs with a value-iteration oracle (test support)."""

from typing import NamedTuple

import numpy as np


class Outcome(NamedTuple):
    next_state: int
    reward: tuple
    done: bool


class TableMdp:
    """Deterministic MDP given by ``succ[s, a]`` and ``rewards[s, a] -> (r0, r1)``.

    State ``num_states - 1`` is terminal. Episodes start at ``start`` (default:
    uniformly over the other states) and are cut at ``cap`` steps.
    """

    num_objectives = 2

    def __init__(self, succ, rewards, cap=200, start=None):
        self.start = start
        self.succ = np.asarray(succ)
        self.rewards = np.asarray(rewards, dtype=float)
        self.num_states, self.num_actions = self.succ.shape
        self.cap = cap
        self.s = 0
        self.t = 0

    def reset(self, episode_seed):
        if self.start is None:
            self.s = int(np.random.default_rng(episode_seed).integers(self.num_states - 1))
        else:
            self.s = self.start
        self.t = 0
        return self.s

    def state_id(self, s):
        return s

    def step(self, a):
        r = tuple(self.rewards[self.s, a])
        self.s = int(self.succ[self.s, a])
        self.t += 1
        done = self.s == self.num_states - 1 or self.t >= self.cap
        return Outcome(self.s, r, done)


def value_iteration(mdp: TableMdp, w, gamma=0.9, tol=1e-12):
    """Optimal scalarized Q for ``mdp`` under weights ``w``."""
    rho = mdp.rewards @ np.asarray(w, dtype=float)
    terminal = mdp.num_states - 1
    q = np.zeros((mdp.num_states, mdp.num_actions))
    while True:
        v = q.max(axis=1)
        v[terminal] = 0.0
        new = rho + gamma * v[mdp.succ]
        new[terminal] = 0.0
        if np.abs(new - q).max() < tol:
            return new
        q = new


def policy_values(mdp: TableMdp, actions, gamma=0.9):
    """Discounted per-objective values of a deterministic policy, shape ``(S, 2)``."""
    n = mdp.num_states
    idx = np.arange(n)
    p = np.zeros((n, n))
    p[idx, mdp.succ[idx, actions]] = 1.0
    r = mdp.rewards[idx, actions].copy()
    p[-1] = 0.0
    r[-1] = 0.0
    return np.linalg.solve(np.eye(n) - gamma * p, r)


def _grid_succ(width, height):
    """4-neighbour grid, moves off the edge stay put; the last cell is the goal."""
    succ = np.zeros((width * height, 4), dtype=int)
    for y in range(height):
        for x in range(width):
            for a, (dx, dy) in enumerate(((0, -1), (0, 1), (1, 0), (-1, 0))):
                nx, ny = x + dx, y + dy
                if not (0 <= nx < width and 0 <= ny < height):
                    nx, ny = x, y
                succ[y * width + x, a] = ny * width + nx
    return succ


def _chain_succ(n):
    """Line of states: step forward, step back, stay, or jump two ahead."""
    succ = np.zeros((n, 4), dtype=int)
    for s in range(n):
        succ[s] = (min(s + 1, n - 1), max(s - 1, 0), s, min(s + 2, n - 1))
    return succ


def make_mdp(shape, seed, w=(0.5, 0.5), gamma=0.9, min_gap=0.05):
    """Seeded MDP of the given shape whose optimal actions win by at least ``min_gap``.

    ``shape`` is ``("grid", width, height)``, ``("chain", n)`` or
    ``("random", n)``. Every step costs on both objectives, so the zero-initialized
    table is optimistic and the optimum is the cheapest weighted path to the goal.
    """
    kind = shape[0]
    for attempt in range(1000):
        rng = np.random.default_rng([seed, attempt])
        if kind == "grid":
            succ = _grid_succ(*shape[1:])
        elif kind == "chain":
            succ = _chain_succ(shape[1])
        else:
            succ = rng.integers(0, shape[1], size=(shape[1], 4))
        n = succ.shape[0]
        rewards = -(0.2 + rng.random((n, 4, 2)))
        mdp = TableMdp(succ, rewards)
        q = value_iteration(mdp, w, gamma)[:-1]
        top2 = np.sort(q, axis=1)[:, -2:]
        if (top2[:, 1] - top2[:, 0]).min() >= min_gap:
            return mdp
    raise RuntimeError("no MDP with a clear optimal policy found")
