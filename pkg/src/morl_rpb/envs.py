"""Grid-world benchmark MOMDPs: search-and-rescue, deep-sea-treasure and resource-gathering.

All three emit a two-component reward vector and share one action set.
Stochastic features (victim death times, enemy attacks) draw from a
generator seeded by ``(config.seed, episode_seed)`` so episodes replay exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import NamedTuple, Optional, Union

import numpy as np

from .errors import ConfigurationError, ContractError

UP, DOWN, RIGHT, LEFT = 0, 1, 2, 3
ACTIONS = (UP, DOWN, RIGHT, LEFT)
ACTION_NAMES = ("up", "down", "right", "left")
_DX = (0, 0, 1, -1)
_DY = (-1, 1, 0, 0)

DIMS = {"sar": (9, 9), "dst": (10, 11), "rg": (5, 5)}
OBJECT_TYPES = {
    "sar": ("fire", "obstacle", "victim"),
    "dst": ("treasure",),
    "rg": ("gold", "gem", "enemy"),
}
STEP_CAPS = {"sar": 500, "dst": 200, "rg": 100}
OBJECTIVES = {
    "sar": ("fire", "time"),
    "dst": ("time", "treasure"),
    "rg": ("resources", "enemy"),
}
FIRE_PENALTY = -5.0
TIME_PENALTY = -1.0
ATTACK_PENALTY = -1.0


class GridPosition(NamedTuple):
    x: int
    y: int


class SarState(NamedTuple):
    pos: GridPosition
    fire_here: bool
    obstacle_here: bool
    victim_here: bool


class DstState(NamedTuple):
    pos: GridPosition


class RgState(NamedTuple):
    pos: GridPosition
    gold_here: bool
    gem_here: bool
    enemy_here: bool


class GridObject(NamedTuple):
    type: str
    x: int
    y: int
    value: Optional[float] = None


class StepOutcome(NamedTuple):
    next_state: tuple
    reward: tuple
    done: bool


@dataclass(frozen=True)
class EnvConfig:
    kind: str
    width: int
    height: int
    objects: tuple
    victim_death_range: Optional[tuple] = None
    attack_probability: float = 0.10
    home: Optional[GridPosition] = None
    seed: int = 0
    max_steps: Optional[int] = None

    def __post_init__(self):
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "objects", tuple(GridObject(*o) for o in self.objects))
        if self.home is not None:
            object.__setattr__(self, "home", GridPosition(*self.home))
        if self.victim_death_range is not None:
            object.__setattr__(self, "victim_death_range", tuple(int(v) for v in self.victim_death_range))
        if self.max_steps is None:
            object.__setattr__(self, "max_steps", STEP_CAPS.get(kind))
        _validate(self)

    @property
    def num_objectives(self) -> int:
        return 2

    def occupied(self) -> set:
        return {(o.x, o.y) for o in self.objects}

    def reserved(self) -> set:
        """Cells objects may never move onto."""
        return {tuple(self.home)} if self.home is not None else set()


def _validate(cfg: EnvConfig) -> None:
    if cfg.kind not in DIMS:
        raise ConfigurationError(f"unknown environment kind {cfg.kind!r}")
    if (cfg.width, cfg.height) != DIMS[cfg.kind]:
        raise ConfigurationError(
            f"{cfg.kind} must be {DIMS[cfg.kind][0]}x{DIMS[cfg.kind][1]}, got {cfg.width}x{cfg.height}")
    if not (0.0 <= cfg.attack_probability <= 1.0):
        raise ConfigurationError(f"attack probability must be in [0, 1], got {cfg.attack_probability}")
    if not (0 <= cfg.seed < 2 ** 64):
        raise ConfigurationError("seed must be a 64-bit unsigned integer")
    if cfg.max_steps is None or cfg.max_steps <= 0:
        raise ConfigurationError("max_steps must be positive")
    seen = set()
    for o in cfg.objects:
        if o.type not in OBJECT_TYPES[cfg.kind]:
            raise ConfigurationError(f"object type {o.type!r} not valid for {cfg.kind}")
        if not (0 <= o.x < cfg.width and 0 <= o.y < cfg.height):
            raise ConfigurationError(f"object {o} lies outside the grid")
        if (o.x, o.y) in seen:
            raise ConfigurationError(f"two objects share cell ({o.x}, {o.y})")
        seen.add((o.x, o.y))
        if o.type == "treasure" and not (o.value is not None and o.value > 0):
            raise ConfigurationError(f"treasure at ({o.x}, {o.y}) needs a positive value")
    if cfg.kind == "rg":
        if cfg.home is None:
            raise ConfigurationError("resource gathering needs a home cell")
        if tuple(cfg.home) in seen:
            raise ConfigurationError("home cell overlaps an object")
        if not (0 <= cfg.home.x < cfg.width and 0 <= cfg.home.y < cfg.height):
            raise ConfigurationError("home cell lies outside the grid")
    if cfg.victim_death_range is not None:
        lo, hi = cfg.victim_death_range
        if lo < 1 or hi < lo:
            raise ConfigurationError(f"bad victim death range {cfg.victim_death_range}")


# --- layout files -----------------------------------------------------------

def config_from_dict(doc: dict, seed: int = 0) -> EnvConfig:
    allowed = {"kind", "width", "height", "objects", "victim_death_range",
               "attack_probability", "home", "max_steps"}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigurationError(f"unknown layout keys: {sorted(unknown)}")
    try:
        objects = tuple(GridObject(o["type"], int(o["x"]), int(o["y"]), o.get("value"))
                        for o in doc["objects"])
        home = doc.get("home")
        return EnvConfig(
            kind=doc["kind"],
            width=int(doc["width"]),
            height=int(doc["height"]),
            objects=objects,
            victim_death_range=doc.get("victim_death_range"),
            attack_probability=float(doc.get("attack_probability", 0.10)),
            home=None if home is None else GridPosition(int(home["x"]), int(home["y"])),
            seed=seed,
            max_steps=doc.get("max_steps"),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed layout: {exc}") from exc


def config_to_dict(cfg: EnvConfig) -> dict:
    doc = {
        "kind": cfg.kind,
        "width": cfg.width,
        "height": cfg.height,
        "objects": [{"type": o.type, "x": o.x, "y": o.y, **({"value": o.value} if o.value is not None else {})}
                    for o in cfg.objects],
        "max_steps": cfg.max_steps,
    }
    if cfg.victim_death_range is not None:
        doc["victim_death_range"] = list(cfg.victim_death_range)
    if cfg.kind == "rg":
        doc["attack_probability"] = cfg.attack_probability
        doc["home"] = {"x": cfg.home.x, "y": cfg.home.y}
    return doc


def load_layout(source: Union[str, Path], seed: int = 0) -> EnvConfig:
    """Load a layout from a JSON path, or a shipped default by kind name (``sar``, ``dst``, ``rg``)."""
    if isinstance(source, str) and source.lower() in DIMS:
        text = resources.files("morl_rpb").joinpath("layouts", f"{source.lower()}.json").read_text()
    else:
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read layout {source}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"layout {source} is not valid JSON: {exc}") from exc
    return config_from_dict(doc, seed=seed)


def layout_hash(cfg: EnvConfig) -> str:
    key = sorted((o.type, o.x, o.y, o.value or 0.0) for o in cfg.objects)
    return hashlib.sha1(repr(key).encode()).hexdigest()[:16]


# --- non-stationarity -------------------------------------------------------

def perturb(cfg: EnvConfig, fraction: float, perturb_seed: int) -> EnvConfig:
    """Relocate ``floor(fraction * K)`` randomly chosen objects to random free cells.

    Destinations exclude every currently occupied (and reserved) cell, so a
    moved object always lands somewhere new and never stacks on another.
    """
    if not (0.0 <= fraction <= 1.0):
        raise ContractError(f"fraction must be in [0, 1], got {fraction}")
    k = len(cfg.objects)
    n = int(math.floor(fraction * k + 1e-9))
    if n == 0:
        return cfg
    rng = np.random.default_rng(perturb_seed)
    blocked = cfg.occupied() | cfg.reserved()
    free = [(x, y) for y in range(cfg.height) for x in range(cfg.width) if (x, y) not in blocked]
    if len(free) < n:
        raise ConfigurationError(f"need {n} free cells to relocate objects, only {len(free)} available")
    chosen = rng.choice(k, size=n, replace=False)
    dest = rng.choice(len(free), size=n, replace=False)
    objects = list(cfg.objects)
    for i, j in zip(chosen, dest):
        x, y = free[int(j)]
        objects[int(i)] = objects[int(i)]._replace(x=x, y=y)
    return replace(cfg, objects=tuple(objects))


# --- environments -----------------------------------------------------------

class GridEnv:
    """Common episode bookkeeping; subclasses implement the dynamics."""

    num_actions = 4
    num_objectives = 2
    num_states: int

    def __init__(self, config: EnvConfig):
        self.reconfigure(config)
        self._done = True
        self.t = 0

    def reconfigure(self, config: EnvConfig) -> None:
        """Swap in a new layout; takes effect from the next reset."""
        self.config = config
        self.width, self.height = config.width, config.height
        self._occupied = config.occupied()
        self._free_starts = [(x, y) for y in range(self.height) for x in range(self.width)
                             if (x, y) not in self._occupied]
        self._setup()

    def _setup(self) -> None:
        pass

    @property
    def done(self) -> bool:
        return self._done

    def _rng(self, episode_seed: int) -> np.random.Generator:
        return np.random.default_rng([self.config.seed, int(episode_seed)])

    def _random_start(self, rng) -> tuple:
        if not self._free_starts:
            raise ConfigurationError("no free start cell in layout")
        return self._free_starts[int(rng.integers(len(self._free_starts)))]

    def _move(self, action: int):
        if self._done:
            raise ContractError("step called on a finished episode; call reset first")
        if action not in ACTIONS:
            raise ContractError(f"invalid action {action!r}")
        nx, ny = self.x + _DX[action], self.y + _DY[action]
        if 0 <= nx < self.width and 0 <= ny < self.height:
            return nx, ny
        return self.x, self.y

    def reset(self, episode_seed: int):
        raise NotImplementedError

    def step(self, action: int) -> StepOutcome:
        raise NotImplementedError

    def state_id(self, state) -> int:
        raise NotImplementedError

    def reset_id(self, episode_seed: int) -> int:
        return self.state_id(self.reset(episode_seed))


class SarEnv(GridEnv):
    """Search and rescue: reward ``[fire, time]``; ends when every victim is rescued or dead."""

    def __init__(self, config: EnvConfig):
        super().__init__(config)
        self.num_states = self.width * self.height * 8

    def _setup(self):
        objs = self.config.objects
        self._fire = {(o.x, o.y) for o in objs if o.type == "fire"}
        self._obstacle = {(o.x, o.y) for o in objs if o.type == "obstacle"}
        self._victim_cells = [(o.x, o.y) for o in objs if o.type == "victim"]

    def reset(self, episode_seed: int) -> SarState:
        rng = self._rng(episode_seed)
        self.x, self.y = self._random_start(rng)
        n = len(self._victim_cells)
        rng_range = self.config.victim_death_range
        if rng_range is None:
            self.death_times = [math.inf] * n
        else:
            self.death_times = [int(v) for v in rng.integers(rng_range[0], rng_range[1] + 1, size=n)]
        self.rescued = [False] * n
        self.t = 0
        self._done = n == 0
        return self._state()

    def _victim_alive_at(self, cell) -> int:
        for i, c in enumerate(self._victim_cells):
            if c == cell and not self.rescued[i] and self.t <= self.death_times[i]:
                return i
        return -1

    def _state(self) -> SarState:
        cell = (self.x, self.y)
        return SarState(GridPosition(self.x, self.y), cell in self._fire, cell in self._obstacle,
                        self._victim_alive_at(cell) >= 0)

    def step(self, action: int) -> StepOutcome:
        nx, ny = self._move(action)
        if (nx, ny) not in self._obstacle:
            self.x, self.y = nx, ny
        self.t += 1
        cell = (self.x, self.y)
        r_fire = FIRE_PENALTY if cell in self._fire else 0.0
        i = self._victim_alive_at(cell)
        if i >= 0:
            self.rescued[i] = True
        finished = all(r or self.t >= d for r, d in zip(self.rescued, self.death_times))
        self._done = finished or self.t >= self.config.max_steps
        return StepOutcome(self._state(), (r_fire, TIME_PENALTY), self._done)

    def state_id(self, state: SarState) -> int:
        p = state.pos
        return ((p.y * self.width + p.x) * 2 + state.fire_here) * 4 + state.obstacle_here * 2 + state.victim_here


class DstEnv(GridEnv):
    """Deep sea treasure: reward ``[time, treasure]``; ends on reaching any treasure."""

    def __init__(self, config: EnvConfig):
        super().__init__(config)
        self.num_states = self.width * self.height

    def _setup(self):
        self._treasure = {(o.x, o.y): float(o.value) for o in self.config.objects}

    def reset(self, episode_seed: int) -> DstState:
        rng = self._rng(episode_seed)
        self.x, self.y = self._random_start(rng)
        self.t = 0
        self._done = False
        return DstState(GridPosition(self.x, self.y))

    def step(self, action: int) -> StepOutcome:
        self.x, self.y = self._move(action)
        self.t += 1
        value = self._treasure.get((self.x, self.y), 0.0)
        self._done = value > 0.0 or self.t >= self.config.max_steps
        return StepOutcome(DstState(GridPosition(self.x, self.y)), (TIME_PENALTY, value), self._done)

    def state_id(self, state: DstState) -> int:
        return state.pos.y * self.width + state.pos.x


class RgEnv(GridEnv):
    """Resource gathering: reward ``[resources, enemy]``; ends on returning home or being attacked."""

    def __init__(self, config: EnvConfig):
        super().__init__(config)
        self.num_states = self.width * self.height * 8
        self.attacks = 0
        self.enemy_entries = 0

    def _setup(self):
        objs = self.config.objects
        self._resources = {(o.x, o.y): o.type for o in objs if o.type in ("gold", "gem")}
        self._enemy = {(o.x, o.y) for o in objs if o.type == "enemy"}
        self._home = tuple(self.config.home)

    def reset(self, episode_seed: int) -> RgState:
        self._ep_rng = self._rng(episode_seed)
        self.x, self.y = self._home
        self.picked = set()
        self.carried = 0
        self.t = 0
        self._done = False
        return self._state()

    def _state(self) -> RgState:
        cell = (self.x, self.y)
        kind = self._resources.get(cell) if cell not in self.picked else None
        return RgState(GridPosition(self.x, self.y), kind == "gold", kind == "gem", cell in self._enemy)

    def step(self, action: int) -> StepOutcome:
        prev = (self.x, self.y)
        self.x, self.y = self._move(action)
        self.t += 1
        cell = (self.x, self.y)
        r_res = r_enemy = 0.0
        if cell in self._resources and cell not in self.picked:
            self.picked.add(cell)
            self.carried += 1
            r_res = 1.0
        if cell in self._enemy and cell != prev:
            self.enemy_entries += 1
            if self._ep_rng.random() < self.config.attack_probability:
                self.attacks += 1
                r_enemy = ATTACK_PENALTY
                self.carried = 0
                self.x, self.y = self._home
                self._done = True
                return StepOutcome(self._state(), (r_res, r_enemy), True)
        self._done = cell == self._home or self.t >= self.config.max_steps
        return StepOutcome(self._state(), (r_res, r_enemy), self._done)

    def state_id(self, state: RgState) -> int:
        p = state.pos
        return (p.y * self.width + p.x) * 8 + state.gold_here * 4 + state.gem_here * 2 + state.enemy_here


_ENV_CLASSES = {"sar": SarEnv, "dst": DstEnv, "rg": RgEnv}


def make_env(config: EnvConfig) -> GridEnv:
    return _ENV_CLASSES[config.kind](config)
