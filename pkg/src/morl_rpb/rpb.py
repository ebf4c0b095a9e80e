"""Robust policy bootstrapping: an online store of steppingstone policies.

Each stored entry is a frozen Q-table together with the preference it was
trained under and its robustness score. On a significant preference change
the outgoing policy competes for its region's slot, and the nearest stored
policy seeds learning under the new preference.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Union

import numpy as np

from .core import (DEFAULT_WINDOW, DistanceKind, Preference, RewardHistory, RobustnessKind,
                   preference_distance, robustness)
from .errors import ContractError, InsufficientSamplesError, NoSteppingstoneError
from .learner import TabularPolicy, init_policy

# Per-environment thresholds found best in the phi sweep.
DEFAULT_PHI = {"sar": 0.25, "dst": 0.15, "rg": 0.15}


@dataclass
class SteppingstonePolicyEntry:
    policy: TabularPolicy
    preference: Preference
    robustness: float

    def __post_init__(self):
        if not math.isfinite(self.robustness):
            raise ContractError(f"robustness must be finite, got {self.robustness}")


@dataclass
class CcsStore:
    """Coverage set of steppingstone policies.

    ``events`` records every store decision as ``(action, index)`` with action
    one of ``append``, ``replace``, ``keep``; it exists for auditing only.
    """

    phi: float
    distance_kind: DistanceKind = DistanceKind.EUCLIDEAN
    entries: List[SteppingstonePolicyEntry] = field(default_factory=list)
    events: list = field(default_factory=list)

    def __post_init__(self):
        if not self.phi > 0:
            raise ContractError(f"phi must be positive, got {self.phi}")
        self.distance_kind = DistanceKind(self.distance_kind)

    def __len__(self) -> int:
        return len(self.entries)

    def distance(self, a: Preference, b: Preference) -> float:
        return preference_distance(a, b, self.distance_kind)

    def _nearest(self, w: Preference, radius: float = math.inf) -> Optional[int]:
        best, best_d = None, math.inf
        for i, e in enumerate(self.entries):
            d = self.distance(e.preference, w)
            if d <= radius and d < best_d:  # strict: ties keep the earliest entry
                best, best_d = i, d
        return best

    def find_steppingstone(self, w: Preference) -> Optional[SteppingstonePolicyEntry]:
        """Closest entry within ``phi`` of ``w``, or None."""
        i = self._nearest(w, self.phi)
        return None if i is None else self.entries[i]

    def store_or_replace(self, candidate: SteppingstonePolicyEntry, previous_w: Preference) -> "CcsStore":
        """Append the candidate for a new region, or replace the region's entry on strictly higher robustness."""
        if tuple(candidate.preference) != tuple(previous_w):
            raise ContractError("candidate preference must equal the previous preference")
        i = self._nearest(previous_w, self.phi)
        frozen = SteppingstonePolicyEntry(candidate.policy.copy(), candidate.preference, candidate.robustness)
        if i is None:
            self.entries.append(frozen)
            self.events.append(("append", len(self.entries) - 1))
        elif candidate.robustness > self.entries[i].robustness:
            self.entries[i] = frozen
            self.events.append(("replace", i))
        else:
            self.events.append(("keep", i))
        return self

    def retrieve_nearest(self, w: Preference) -> SteppingstonePolicyEntry:
        i = self._nearest(w)
        if i is None:
            raise NoSteppingstoneError("the coverage store is empty")
        return self.entries[i]

    def to_dict(self) -> dict:
        return {
            "kind": "sql",
            "phi": self.phi,
            "distance": self.distance_kind.value,
            "entries": [
                {"preference": list(e.preference), "robustness": e.robustness,
                 "q_table": e.policy.q.tolist()}
                for e in self.entries
            ],
        }

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def from_dict(cls, doc: dict) -> "CcsStore":
        store = cls(phi=float(doc["phi"]), distance_kind=DistanceKind(doc["distance"]))
        for e in doc["entries"]:
            store.entries.append(SteppingstonePolicyEntry(
                TabularPolicy(np.asarray(e["q_table"], dtype=float)),
                Preference(tuple(e["preference"])), float(e["robustness"])))
        return store


def find_steppingstone_for(ccs: CcsStore, w: Preference) -> Optional[SteppingstonePolicyEntry]:
    return ccs.find_steppingstone(w)


def store_or_replace(ccs: CcsStore, candidate: SteppingstonePolicyEntry, previous_w: Preference) -> CcsStore:
    return ccs.store_or_replace(candidate, previous_w)


def retrieve_nearest(ccs: CcsStore, w: Preference) -> SteppingstonePolicyEntry:
    return ccs.retrieve_nearest(w)


class RpbAgent:
    """Online RPB agent state: working policy, preference, reward history and store.

    ``retrieval`` selects where a bootstrap policy may come from after a
    significant change: ``"global"`` takes the nearest entry anywhere in the
    store, ``"region"`` only entries within ``phi`` of the new preference
    (unknown regions then start from zeros).
    """

    def __init__(self, num_states: int, num_actions: int, preference: Preference,
                 phi: float, distance_kind=DistanceKind.EUCLIDEAN,
                 robustness_kind=RobustnessKind.STABILITY, window: int = DEFAULT_WINDOW,
                 reference_mean: Optional[Callable[[Preference], float]] = None,
                 retrieval: str = "global"):
        self.robustness_kind = RobustnessKind(robustness_kind)
        if self.robustness_kind is RobustnessKind.REGRET and reference_mean is None:
            raise ContractError("regret robustness needs a reference_mean source")
        if retrieval not in ("global", "region"):
            raise ContractError(f"unknown retrieval mode {retrieval!r}")
        self.current_policy = init_policy(num_states, num_actions)
        self.current_preference = preference
        self.history = RewardHistory(window)
        self.ccs = CcsStore(phi=phi, distance_kind=distance_kind)
        self.reference_mean = reference_mean
        self.retrieval = retrieval
        self.bootstraps = 0

    @property
    def phi(self) -> float:
        return self.ccs.phi

    def record(self, scalarized_return: float) -> None:
        self.history.append(scalarized_return)

    def current_robustness(self) -> float:
        ref = None
        if self.robustness_kind is RobustnessKind.REGRET:
            ref = self.reference_mean(self.current_preference)
        return robustness(self.history, self.robustness_kind, ref)

    def on_preference_change(self, w_new: Preference) -> "RpbAgent":
        d = self.ccs.distance(w_new, self.current_preference)
        if d <= self.phi:
            self.current_preference = w_new
            return self
        try:
            beta = self.current_robustness()
        except InsufficientSamplesError:
            beta = None
        if beta is not None:
            candidate = SteppingstonePolicyEntry(self.current_policy, self.current_preference, beta)
            self.ccs.store_or_replace(candidate, self.current_preference)
        q = self.current_policy.q
        if self.retrieval == "global":
            source = self.ccs.retrieve_nearest(w_new) if self.ccs.entries else None
        else:
            source = self.ccs.find_steppingstone(w_new)
        if source is None:
            self.current_policy = init_policy(*q.shape)
        else:
            self.current_policy = init_policy(*q.shape, from_policy=source.policy)
            self.bootstraps += 1
        self.history.clear()
        self.current_preference = w_new
        return self


def on_preference_change(agent: RpbAgent, w_new: Preference) -> RpbAgent:
    return agent.on_preference_change(w_new)
