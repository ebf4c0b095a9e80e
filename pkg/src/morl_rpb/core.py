"""Preference-space geometry, scalarization, dominance and robustness metrics."""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import ContractError, InsufficientSamplesError

PREF_TOL = 1e-9
EPS = 1e-9
STABILITY_CAP = 1e12
ENTROPY_BINS = 10
DEFAULT_WINDOW = 50

RewardVector = tuple  # tuple[float, ...]; one component per objective


@dataclass(frozen=True)
class Preference:
    """Normalized weight vector over the objectives."""

    weights: tuple

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        object.__setattr__(self, "weights", w)
        if len(w) < 2:
            raise ContractError(f"a preference needs at least 2 weights, got {len(w)}")
        if any(not (0.0 <= x <= 1.0) for x in w):
            raise ContractError(f"preference weights must lie in [0, 1]: {w}")
        if abs(sum(w) - 1.0) > PREF_TOL:
            raise ContractError(f"preference weights must sum to 1: {w}")

    @classmethod
    def of(cls, *weights: float) -> "Preference":
        return cls(tuple(weights))

    @classmethod
    def two(cls, first: float) -> "Preference":
        return cls((first, 1.0 - first))

    def __len__(self) -> int:
        return len(self.weights)

    def __iter__(self):
        return iter(self.weights)

    def __getitem__(self, i):
        return self.weights[i]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)


PreferenceLike = Union[Preference, Sequence[float]]


def _weights(w: PreferenceLike) -> tuple:
    return w.weights if isinstance(w, Preference) else tuple(w)


class DistanceKind(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    HAMMING = "hamming"
    COSINE = "cosine"
    MANHATTAN = "manhattan"


class RobustnessKind(str, enum.Enum):
    STABILITY = "stability"
    INDEX_OF_DISPERSION = "iod"
    COEFFICIENT_OF_VARIATION = "cv"
    ENTROPY = "entropy"
    REGRET = "regret"


class RewardHistory:
    """Sliding window of per-episode scalarized returns (oldest evicted first)."""

    def __init__(self, window: int = DEFAULT_WINDOW, returns: Iterable[float] = ()):
        if window < 2:
            raise ContractError(f"history window must be >= 2, got {window}")
        self.window = window
        self._buf: deque = deque(maxlen=window)
        self._buf.extend(float(x) for x in returns)

    def append(self, value: float) -> None:
        self._buf.append(float(value))

    def clear(self) -> None:
        self._buf.clear()

    @property
    def returns(self) -> tuple:
        return tuple(self._buf)

    def __len__(self) -> int:
        return len(self._buf)

    def __iter__(self):
        return iter(self._buf)

    def __repr__(self) -> str:
        return f"RewardHistory(window={self.window}, returns={list(self._buf)!r})"


def scalarize(r: Sequence[float], w: PreferenceLike) -> float:
    """Linear scalarization: the dot product of weights and rewards."""
    ws = _weights(w)
    if len(r) != len(ws):
        raise ContractError(f"reward has {len(r)} components, preference has {len(ws)}")
    total = 0.0
    for wi, ri in zip(ws, r):
        total += wi * ri
    return total


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """True iff ``a`` is no worse than ``b`` everywhere and strictly better somewhere."""
    if len(a) != len(b):
        raise ContractError(f"cannot compare vectors of length {len(a)} and {len(b)}")
    strictly = False
    for x, y in zip(a, b):
        if x < y:
            return False
        if x > y:
            strictly = True
    return strictly


def preference_distance(w1: PreferenceLike, w2: PreferenceLike,
                        kind: Union[DistanceKind, str] = DistanceKind.EUCLIDEAN) -> float:
    """Distance between two preferences; smaller always means closer.

    Cosine is reported as ``1 - cosine similarity``. Hamming counts components
    that differ at all (no tolerance), so for real-valued weights it almost
    always equals the number of objectives.
    """
    a, b = _weights(w1), _weights(w2)
    if len(a) != len(b):
        raise ContractError(f"preferences have different dimensions: {len(a)} vs {len(b)}")
    kind = DistanceKind(kind)
    if kind is DistanceKind.EUCLIDEAN:
        return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))
    if kind is DistanceKind.MANHATTAN:
        return float(sum(abs(x - y) for x, y in zip(a, b)))
    if kind is DistanceKind.HAMMING:
        return float(sum(1 for x, y in zip(a, b) if x != y))
    if a == b:
        return 0.0
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    if na == 0.0 or nb == 0.0:
        raise ContractError("cosine distance is undefined for a zero vector")
    sim = sum(x * y for x, y in zip(a, b)) / (na * nb)
    return max(0.0, 1.0 - sim)


def _entropy_bits(values: np.ndarray) -> float:
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return 0.0
    counts, _ = np.histogram(values, bins=ENTROPY_BINS, range=(lo, hi))
    p = counts[counts > 0] / values.size
    return float(-(p * np.log2(p)).sum())


def robustness(history: Union[RewardHistory, Sequence[float]],
               kind: Union[RobustnessKind, str] = RobustnessKind.STABILITY,
               reference_mean: Optional[float] = None) -> float:
    """Robustness score of a policy from its recent returns; larger is more robust.

    Dispersion-style metrics (IoD, CV, entropy, regret) are negated so every
    kind shares the same orientation. Population standard deviation is used.
    """
    kind = RobustnessKind(kind)
    values = np.asarray(list(history), dtype=float)
    need = 1 if kind is RobustnessKind.ENTROPY else 2
    if values.size < need:
        raise InsufficientSamplesError(
            f"{kind.value} needs at least {need} samples, got {values.size}")
    if (kind is RobustnessKind.REGRET) != (reference_mean is not None):
        raise ContractError("reference_mean must be given for regret and only for regret")

    if kind is RobustnessKind.ENTROPY:
        return -_entropy_bits(values)
    mu = float(values.mean())
    # exact zero for constant histories; np.std leaves rounding residue there
    sigma = 0.0 if values.min() == values.max() else float(values.std())
    if kind is RobustnessKind.STABILITY:
        beta = mu / (sigma + EPS)
        return max(-STABILITY_CAP, min(STABILITY_CAP, beta))
    if kind is RobustnessKind.INDEX_OF_DISPERSION:
        return -(sigma * sigma) / (abs(mu) + EPS)
    if kind is RobustnessKind.COEFFICIENT_OF_VARIATION:
        return -sigma / (abs(mu) + EPS)
    return -(float(reference_mean) - mu)


def region_count(phi: float) -> int:
    if not (0.0 < phi <= 1.0):
        raise ContractError(f"phi must lie in (0, 1], got {phi}")
    return max(1, math.ceil(1.0 / phi - 1e-9))


def region_index(w: PreferenceLike, phi: float) -> int:
    """Index of the phi-wide cell of [0, 1] holding the first weight (2 objectives)."""
    g = region_count(phi)
    ws = _weights(w)
    if len(ws) != 2:
        raise ContractError("region_index is defined for two objectives only")
    return min(int(math.floor(ws[0] / phi + 1e-9)), g - 1)


# Uniformly sampled two-objective preference schedule (first weight, second weight).
SAMPLED_PREFERENCES = tuple(
    Preference((a, b)) for a, b in (
        (0.66, 0.34), (0.33, 0.67), (0.28, 0.72), (0.54, 0.46), (0.68, 0.32),
        (0.44, 0.56), (0.88, 0.12), (0.65, 0.35), (0.48, 0.52),
    )
)
