"""Experiment protocols, evaluation metrics, aggregation and significance tests."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy import special

from .baselines import (CoverageSet, OlsParams, TloParams, ols_respond, ols_train, tlo_episode,
                        tlo_train)
from .core import (DEFAULT_WINDOW, SAMPLED_PREFERENCES, DistanceKind, Preference, RobustnessKind,
                   scalarize)
from .envs import EnvConfig, layout_hash, load_layout, make_env, perturb
from .errors import ConfigurationError, ContractError, UndefinedTestError
from .learner import LearnerParams, init_policy, run_episode
from .rpb import DEFAULT_PHI, RpbAgent

ALGORITHMS = ("rpb", "sql", "ols", "tlo")
MODES = ("stationary", "nonstationary")
METRIC_WINDOW = 50
CSV_HEADER = "run,algo,env,mode,pref_index,episode,scalarized_return,r0,r1,ccs_size"


@dataclass(frozen=True)
class PreferenceSchedule:
    preferences: tuple = SAMPLED_PREFERENCES
    episodes_per_preference: int = 200

    def __post_init__(self):
        prefs = tuple(p if isinstance(p, Preference) else Preference(tuple(p)) for p in self.preferences)
        object.__setattr__(self, "preferences", prefs)
        if not prefs:
            raise ContractError("a schedule needs at least one preference")
        if self.episodes_per_preference < 1:
            raise ContractError("episodes_per_preference must be positive")

    def __len__(self) -> int:
        return len(self.preferences)

    @property
    def total_episodes(self) -> int:
        return len(self.preferences) * self.episodes_per_preference


@dataclass(frozen=True)
class RpbParams:
    phi: float = 0.15
    distance: DistanceKind = DistanceKind.EUCLIDEAN
    robustness: RobustnessKind = RobustnessKind.STABILITY
    window: int = DEFAULT_WINDOW
    retrieval: str = "global"

    def __post_init__(self):
        object.__setattr__(self, "distance", DistanceKind(self.distance))
        object.__setattr__(self, "robustness", RobustnessKind(self.robustness))


@dataclass(frozen=True)
class ExperimentConfig:
    env_config: EnvConfig
    algorithm: str = "rpb"
    mode: str = "stationary"
    runs: int = 15
    schedule: PreferenceSchedule = PreferenceSchedule()
    perturb_period: int = 100
    perturb_fraction: float = 0.25
    layout_shuffle: float = 0.25
    master_seed: int = 0
    rpb: RpbParams = RpbParams()
    learner: LearnerParams = LearnerParams()
    ols: OlsParams = OlsParams()
    tlo: Optional[TloParams] = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"unknown algorithm {self.algorithm!r}")
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.runs < 1:
            raise ConfigurationError("runs must be positive")
        if self.perturb_period < 1:
            raise ConfigurationError("perturb_period must be positive")
        for name in ("perturb_fraction", "layout_shuffle"):
            if not (0.0 <= getattr(self, name) <= 1.0):
                raise ConfigurationError(f"{name} must be in [0, 1]")
        if not (0 <= self.master_seed < 2 ** 64):
            raise ConfigurationError("master_seed must be a 64-bit unsigned integer")
        if self.tlo is None:
            object.__setattr__(self, "tlo", TloParams.for_env(self.env_config.kind))

    @property
    def env(self) -> str:
        return self.env_config.kind

    @classmethod
    def for_env(cls, kind: str, **kw) -> "ExperimentConfig":
        """Defaults for one of the shipped environments, including its tuned phi."""
        rpb = kw.pop("rpb", RpbParams(phi=DEFAULT_PHI[kind]))
        return cls(env_config=load_layout(kind), rpb=rpb, **kw)


class ExperimentRecord(NamedTuple):
    run: int
    preference_index: int
    episode: int
    scalarized_return: float
    reward_components: tuple
    ccs_size: int


class PerturbEvent(NamedTuple):
    global_episode: int
    layout_hash: str


@dataclass
class RunResult:
    run: int
    records: List[ExperimentRecord]
    perturb_events: List[PerturbEvent]
    initial_layout: str
    ccs: Optional[dict] = None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: List[RunResult]

    @property
    def records(self) -> List[ExperimentRecord]:
        return [r for run in self.runs for r in run.records]

    @property
    def perturb_events(self) -> List[PerturbEvent]:
        return [e for run in self.runs for e in run.perturb_events]


class MetricSummary(NamedTuple):
    gamma_c: float
    loss: Optional[float]
    flagged: bool


# --- seeding ----------------------------------------------------------------

def _derive(*key: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(1, np.uint64)[0])


class RunSeeds(NamedTuple):
    env: int
    layout: int
    perturb: int
    algo: int
    offline: int


def run_seeds(master_seed: int, run: int) -> RunSeeds:
    """Per-run seeds; identical across algorithms so comparisons share layouts and perturbations."""
    return RunSeeds(*(_derive(master_seed, run, stream) for stream in range(5)))


def initial_layout(config: ExperimentConfig, run: int) -> EnvConfig:
    seeds = run_seeds(config.master_seed, run)
    env_cfg = replace(config.env_config, seed=seeds.env)
    return perturb(env_cfg, config.layout_shuffle, seeds.layout)


# --- offline phase ----------------------------------------------------------

def train_offline(config: ExperimentConfig, run: int, algorithm: Optional[str] = None) -> CoverageSet:
    """Train the OLS or TLO coverage set for one run on that run's initial layout."""
    algorithm = algorithm or config.algorithm
    rng = np.random.default_rng(run_seeds(config.master_seed, run).offline)
    env_cfg = initial_layout(config, run)
    if algorithm == "ols":
        return ols_train(env_cfg, config.ols, config.learner, rng)
    if algorithm == "tlo":
        return tlo_train(env_cfg, config.tlo, config.learner, rng, config.schedule.preferences)
    raise ConfigurationError(f"{algorithm} has no offline phase")


def train_offline_all(config: ExperimentConfig, algorithm: Optional[str] = None,
                      jobs: int = 1) -> List[CoverageSet]:
    args = [(config, run, algorithm) for run in range(config.runs)]
    return _map(_train_offline_star, args, jobs)


def _train_offline_star(args):
    return train_offline(*args)


def coverage_bundle_to_dict(sets: Sequence[CoverageSet], config: ExperimentConfig) -> dict:
    return {"env": config.env, "master_seed": config.master_seed,
            "runs": [cs.to_dict() for cs in sets]}


def coverage_bundle_from_dict(doc: dict) -> List[CoverageSet]:
    """Either a bundle with one set per run or a single coverage-set document."""
    if "runs" in doc:
        return [CoverageSet.from_dict(d) for d in doc["runs"]]
    return [CoverageSet.from_dict(doc)]


def _coverage_for_run(coverage_sets, run: int) -> Optional[CoverageSet]:
    if coverage_sets is None:
        return None
    if isinstance(coverage_sets, CoverageSet):
        return coverage_sets
    if len(coverage_sets) == 1:
        return coverage_sets[0]
    if run >= len(coverage_sets):
        raise ConfigurationError(f"coverage bundle has {len(coverage_sets)} sets, run {run} needs one")
    return coverage_sets[run]


# --- execution phase --------------------------------------------------------

def run_single(config: ExperimentConfig, run: int,
               coverage_set: Optional[CoverageSet] = None) -> RunResult:
    algo = config.algorithm
    if algo in ("ols", "tlo") and coverage_set is None:
        raise ConfigurationError(f"{algo} execution needs a frozen coverage set")
    if algo in ("ols", "tlo") and coverage_set.kind != ("tlo" if algo == "tlo" else "sql"):
        raise ConfigurationError(f"coverage set of kind {coverage_set.kind!r} cannot drive {algo}")
    if algo == "rpb" and config.rpb.robustness is RobustnessKind.REGRET and coverage_set is None:
        raise ConfigurationError("regret robustness needs a frozen reference coverage set")

    seeds = run_seeds(config.master_seed, run)
    env_cfg = initial_layout(config, run)
    env = make_env(env_cfg)
    rng = np.random.default_rng(seeds.algo)
    lp = config.learner
    sched = config.schedule
    nonstationary = config.mode == "nonstationary"
    first_hash = layout_hash(env_cfg)

    agent = None
    if algo == "rpb":
        ref = None
        if coverage_set is not None:
            ref = lambda w: max(scalarize(e.value_vector, w) for e in coverage_set.entries)
        agent = RpbAgent(env.num_states, env.num_actions, sched.preferences[0], config.rpb.phi,
                         config.rpb.distance, config.rpb.robustness, config.rpb.window, ref,
                         config.rpb.retrieval)

    records: List[ExperimentRecord] = []
    events: List[PerturbEvent] = []
    g = 0
    for k, w in enumerate(sched.preferences):
        tlo_params = None
        if algo == "rpb":
            if k > 0:
                agent.on_preference_change(w)
        elif algo == "sql":
            policy = init_policy(env.num_states, env.num_actions)
        else:
            policy = ols_respond(coverage_set, w).copy()
            tlo_params = coverage_set.tlo or config.tlo
        for e in range(sched.episodes_per_preference):
            if nonstationary and g > 0 and g % config.perturb_period == 0:
                env_cfg = perturb(env_cfg, config.perturb_fraction, _derive(seeds.perturb, g))
                env.reconfigure(env_cfg)
                events.append(PerturbEvent(g, layout_hash(env_cfg)))
            if algo == "rpb":
                res = run_episode(env, agent.current_policy, w, lp, rng)
                agent.record(res.scalarized_return)
                ccs_size = len(agent.ccs)
            elif algo == "tlo":
                res = tlo_episode(env, policy, w, lp, rng, tlo_params)
                ccs_size = 0
            else:
                res = run_episode(env, policy, w, lp, rng)
                ccs_size = 0
            records.append(ExperimentRecord(run, k, e, res.scalarized_return, res.reward_sum, ccs_size))
            g += 1
    ccs = agent.ccs.to_dict() if agent is not None else None
    return RunResult(run, records, events, first_hash, ccs)


def _run_single_star(args):
    return run_single(*args)


def _map(fn, args, jobs: int):
    if jobs <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, args))


def run_experiment(config: ExperimentConfig, coverage_sets=None, jobs: int = 1) -> ExperimentResult:
    """Execute every run of the experiment; output order is by run index regardless of ``jobs``."""
    if config.algorithm in ("ols", "tlo") and coverage_sets is None:
        raise ConfigurationError(f"{config.algorithm} execution needs a frozen coverage set")
    if config.algorithm == "rpb" and config.rpb.robustness is RobustnessKind.REGRET and coverage_sets is None:
        raise ConfigurationError("regret robustness needs a frozen reference coverage set")
    args = [(config, run, _coverage_for_run(coverage_sets, run)) for run in range(config.runs)]
    runs = _map(_run_single_star, args, jobs)
    runs.sort(key=lambda r: r.run)
    return ExperimentResult(config, runs)


# --- metrics ----------------------------------------------------------------

def compute_metrics(records: Sequence[ExperimentRecord],
                    schedule: PreferenceSchedule) -> Dict[tuple, MetricSummary]:
    """Per (run, preference index): converged return and the loss on switching to the next preference.

    Gamma_c is the mean of the last 50 episodes of a segment; the loss is that
    minus the mean of the first 50 episodes of the following segment.
    Segments shorter than the window use all of their episodes and are flagged.
    """
    segments: Dict[tuple, list] = {}
    for r in records:
        segments.setdefault((r.run, r.preference_index), []).append(r)
    out = {}
    for (run, k), seg in segments.items():
        seg = sorted(seg, key=lambda r: r.episode)
        returns = [r.scalarized_return for r in seg]
        flagged = len(returns) < METRIC_WINDOW
        gamma_c = float(np.mean(returns[-METRIC_WINDOW:]))
        loss = None
        nxt = segments.get((run, k + 1))
        if nxt is not None:
            nxt = sorted(nxt, key=lambda r: r.episode)
            head = [r.scalarized_return for r in nxt[:METRIC_WINDOW]]
            flagged = flagged or len(nxt) < METRIC_WINDOW
            loss = gamma_c - float(np.mean(head))
        out[(run, k)] = MetricSummary(gamma_c, loss, flagged)
    return dict(sorted(out.items()))


def per_run_gamma_c(metrics: Dict[tuple, MetricSummary]) -> List[float]:
    by_run: Dict[int, list] = {}
    for (run, _), m in metrics.items():
        by_run.setdefault(run, []).append(m.gamma_c)
    return [float(np.mean(v)) for _, v in sorted(by_run.items())]


def per_run_loss(metrics: Dict[tuple, MetricSummary]) -> List[float]:
    by_run: Dict[int, list] = {}
    for (run, _), m in metrics.items():
        if m.loss is not None:
            by_run.setdefault(run, []).append(m.loss)
    return [float(np.mean(v)) for _, v in sorted(by_run.items())]


def segment_samples(metrics: Dict[tuple, MetricSummary]):
    """Pooled per-(run, preference) converged returns and per-(run, transition) losses."""
    gammas = [m.gamma_c for m in metrics.values()]
    losses = [m.loss for m in metrics.values() if m.loss is not None]
    return gammas, losses


def welch_t_test(sample_a: Sequence[float], sample_b: Sequence[float]):
    """Two-sided Welch unequal-variance t-test; returns ``(t, p)``."""
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise UndefinedTestError("each sample needs at least two values")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    if va + vb == 0.0:
        raise UndefinedTestError("both samples have zero variance")
    t = float((a.mean() - b.mean()) / math.sqrt(va + vb))
    df = (va + vb) ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
    # two-sided Student-t tail via the regularized incomplete beta function
    p = float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))
    return t, min(1.0, max(0.0, p))


# --- analyses ---------------------------------------------------------------

def sweep_phi(base: ExperimentConfig, phi_values: Sequence[float], jobs: int = 1):
    """Loss distributions per threshold value, sorted by phi ascending."""
    if base.algorithm != "rpb":
        raise ConfigurationError("phi sweeps apply to rpb only")
    out = []
    for phi in sorted(phi_values):
        cfg = replace(base, rpb=replace(base.rpb, phi=float(phi)))
        result = run_experiment(cfg, jobs=jobs)
        metrics = compute_metrics(result.records, cfg.schedule)
        out.append((float(phi), [m.loss for m in metrics.values() if m.loss is not None]))
    return out


def summed_medians(records: Sequence[ExperimentRecord]) -> List[float]:
    """Per run: the sum over preference segments of the median scalarized return."""
    segs: Dict[tuple, list] = {}
    for r in records:
        segs.setdefault((r.run, r.preference_index), []).append(r.scalarized_return)
    by_run: Dict[int, float] = {}
    for (run, _), vals in sorted(segs.items()):
        by_run[run] = by_run.get(run, 0.0) + float(np.median(vals))
    return [v for _, v in sorted(by_run.items())]


def compare_variants(base: ExperimentConfig, axis: str, variants: Sequence[str],
                     coverage_sets=None, jobs: int = 1):
    """Mean and standard deviation over runs of the summed per-preference medians, per variant."""
    if base.algorithm != "rpb":
        raise ConfigurationError("variant comparisons apply to rpb only")
    if axis not in ("robustness", "distance"):
        raise ConfigurationError(f"unknown comparison axis {axis!r}")
    out = []
    for v in variants:
        rpb = replace(base.rpb, **{axis: v})
        cfg = replace(base, rpb=rpb)
        sets = None
        if rpb.robustness is RobustnessKind.REGRET:
            sets = coverage_sets if coverage_sets is not None else train_offline_all(cfg, "ols", jobs)
        sums = summed_medians(run_experiment(cfg, sets, jobs).records)
        std = float(np.std(sums, ddof=1)) if len(sums) > 1 else 0.0
        out.append((str(getattr(rpb, axis).value), float(np.mean(sums)), std))
    return out


# --- artifacts --------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".9g")


def results_csv(result: ExperimentResult) -> str:
    cfg = result.config
    lines = [CSV_HEADER]
    for r in result.records:
        lines.append(",".join((str(r.run), cfg.algorithm, cfg.env, cfg.mode, str(r.preference_index),
                               str(r.episode), _fmt(r.scalarized_return),
                               _fmt(r.reward_components[0]), _fmt(r.reward_components[1]),
                               str(r.ccs_size))))
    return "\n".join(lines) + "\n"


def write_results_csv(results: Sequence[ExperimentResult], path: Union[str, Path]) -> None:
    text = results_csv(results[0])
    for res in results[1:]:
        text += results_csv(res).split("\n", 1)[1]
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _mean_std(values) -> dict:
    v = np.asarray(values, dtype=float)
    return {"mean": float(v.mean()), "std": float(v.std(ddof=1)) if v.size > 1 else 0.0, "n": int(v.size)}


def build_summary(results: Sequence[ExperimentResult]) -> dict:
    """Aggregate statistics for one or more algorithms run on the same schedule.

    Pairwise Welch tests compare the pooled per-(run, preference) samples:
    every converged segment value, and every transition loss.
    """
    cfg0 = results[0].config
    summary = {
        "env": cfg0.env,
        "mode": cfg0.mode,
        "runs": cfg0.runs,
        "master_seed": cfg0.master_seed,
        "episodes_per_preference": cfg0.schedule.episodes_per_preference,
        "preferences": [list(p) for p in cfg0.schedule.preferences],
        "algorithms": {},
        "welch": [],
    }
    per_algo = {}
    for res in results:
        cfg = res.config
        metrics = compute_metrics(res.records, cfg.schedule)
        gamma = []
        loss = []
        for k in range(len(cfg.schedule)):
            gs = [m.gamma_c for (run, kk), m in metrics.items() if kk == k]
            gamma.append({"pref_index": k, **_mean_std(gs)})
            ls = [m.loss for (run, kk), m in metrics.items() if kk == k and m.loss is not None]
            if ls:
                loss.append({"transition": k, **_mean_std(ls)})
        run_g, run_l = per_run_gamma_c(metrics), per_run_loss(metrics)
        per_algo[cfg.algorithm] = segment_samples(metrics)
        summary["algorithms"][cfg.algorithm] = {
            "gamma_c": gamma,
            "loss": loss,
            "run_gamma_c": run_g,
            "run_loss": run_l,
            "flagged": any(m.flagged for m in metrics.values()),
        }
    names = list(per_algo)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            for j, metric in enumerate(("gamma_c", "loss")):
                xa, xb = per_algo[a][j], per_algo[b][j]
                try:
                    t, p = welch_t_test(xa, xb)
                except UndefinedTestError:
                    continue
                summary["welch"].append({"a": a, "b": b, "metric": metric, "t": t, "p": p})
    return summary


def write_json(doc: dict, path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(json.dumps(doc, indent=2, sort_keys=False) + "\n")
