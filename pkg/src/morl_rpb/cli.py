"""Command-line front end.

Every flag has a key in the JSON config document; flags override the file
and ``MORL_SEED`` overrides both for the master seed. Exit status is 0 on
success, 1 for configuration problems and 2 for failures while running.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import harness as H
from .baselines import OlsParams, TloParams
from .core import DistanceKind, Preference, RobustnessKind
from .envs import load_layout
from .errors import ConfigurationError, ContractError
from .learner import LearnerParams
from .plots import emit_plots
from .rpb import DEFAULT_PHI

COMMANDS = ("run", "train-offline", "sweep-phi", "compare-metrics", "compare-distances",
            "compare-algos", "plot", "export-ccs")
PHI_GRID = tuple(round(0.05 * k, 2) for k in range(1, 11))

CONFIG_KEYS = {
    "env", "algorithm", "algorithms", "mode", "runs", "episodes_per_preference", "preferences",
    "perturb_period", "perturb_fraction", "layout_shuffle", "master_seed", "layout", "rpb",
    "learner", "ols", "tlo", "phi_values", "variants", "coverage_set", "out", "jobs",
}
BLOCK_KEYS = {
    "rpb": {"phi", "distance", "robustness", "window", "retrieval"},
    "learner": {"alpha", "gamma", "epsilon"},
    "ols": {"improvement_threshold", "max_policies", "training_episodes_per_preference"},
    "tlo": {"objective_thresholds", "order", "training_episodes"},
}


class CliError(Exception):
    def __init__(self, message: str, status: int):
        super().__init__(message)
        self.status = status


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message, 1)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="morl-rpb", description="Robust policy bootstrapping experiments for multi-objective RL.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    helps = {
        "run": "run one algorithm and write results.csv, summary.json and plots",
        "train-offline": "train and save the OLS or TLO coverage sets (one per run)",
        "sweep-phi": "loss distributions of RPB over a grid of phi values",
        "compare-metrics": "RPB summed medians for each robustness metric",
        "compare-distances": "RPB summed medians for each distance function",
        "compare-algos": "run several algorithms on the same seeds and compare them",
        "plot": "render SVG plots from a summary.json",
        "export-ccs": "run RPB and save each run's final steppingstone store",
    }
    for name in COMMANDS:
        sp = sub.add_parser(name, help=helps[name], description=helps[name])
        if name == "plot":
            sp.add_argument("summary", nargs="?", help="summary.json to render (default: OUT/summary.json)")
            sp.add_argument("--out", help="output directory")
            continue
        sp.add_argument("--config", help="JSON config document")
        sp.add_argument("--env", choices=("sar", "dst", "rg"))
        sp.add_argument("--algo", help="rpb|sql|ols|tlo; compare-algos accepts a comma list")
        sp.add_argument("--mode", choices=H.MODES)
        sp.add_argument("--runs", type=int)
        sp.add_argument("--episodes", type=int, help="episodes per preference")
        sp.add_argument("--seed", type=int, help="master seed (MORL_SEED overrides)")
        sp.add_argument("--phi", help="phi value; sweep-phi accepts a comma list")
        sp.add_argument("--distance", choices=[k.value for k in DistanceKind])
        sp.add_argument("--robustness", choices=[k.value for k in RobustnessKind])
        sp.add_argument("--coverage-set", dest="coverage_set", help="frozen coverage set JSON")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--jobs", type=int, help="parallel run workers (default: logical cores)")
    return p


# --- configuration ------------------------------------------------------------

def load_config_file(path: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"malformed config {path}: {exc.msg} at line {exc.lineno}") from exc
    if not isinstance(doc, dict):
        raise ConfigurationError("config must be a JSON object")
    unknown = set(doc) - CONFIG_KEYS
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for block, allowed in BLOCK_KEYS.items():
        if block in doc:
            if not isinstance(doc[block], dict):
                raise ConfigurationError(f"config block {block!r} must be an object")
            bad = set(doc[block]) - allowed
            if bad:
                raise ConfigurationError(f"unknown keys in {block}: {', '.join(sorted(bad))}")
    return doc


def merge_flags(doc: dict, args: argparse.Namespace, environ=os.environ) -> dict:
    cfg = json.loads(json.dumps(doc))
    flat = {"env": args.env, "mode": args.mode, "runs": args.runs, "episodes_per_preference": args.episodes,
            "master_seed": args.seed, "coverage_set": args.coverage_set, "out": args.out, "jobs": args.jobs}
    for key, value in flat.items():
        if value is not None:
            cfg[key] = value
    if args.algo is not None:
        algos = [a.strip() for a in args.algo.split(",") if a.strip()]
        if args.command == "compare-algos":
            cfg["algorithms"] = algos
        elif len(algos) != 1:
            raise ConfigurationError("--algo takes a single algorithm for this command")
        else:
            cfg["algorithm"] = algos[0]
    rpb = cfg.setdefault("rpb", {})
    if args.phi is not None:
        try:
            phis = [float(x) for x in args.phi.split(",")]
        except ValueError as exc:
            raise ConfigurationError(f"bad --phi value {args.phi!r}") from exc
        if args.command == "sweep-phi":
            cfg["phi_values"] = phis
        elif len(phis) != 1:
            raise ConfigurationError("--phi takes a single value for this command")
        else:
            rpb["phi"] = phis[0]
    if args.distance is not None:
        rpb["distance"] = args.distance
    if args.robustness is not None:
        rpb["robustness"] = args.robustness
    seed = environ.get("MORL_SEED")
    if seed is not None:
        try:
            cfg["master_seed"] = int(seed)
        except ValueError as exc:
            raise ConfigurationError(f"MORL_SEED is not an integer: {seed!r}") from exc
    return cfg


def _thresholds(values) -> tuple:
    out = []
    for v in values:
        x = float(v)  # accepts "-inf"/"inf" strings
        if math.isnan(x):
            raise ConfigurationError("TLO thresholds must not be NaN")
        out.append(x)
    return tuple(out)


def experiment_config(cfg: dict, algorithm: Optional[str] = None) -> H.ExperimentConfig:
    """Build an ExperimentConfig from a merged config dict."""
    kind = cfg.get("env")
    if kind not in ("sar", "dst", "rg"):
        raise ConfigurationError("env must be one of sar, dst, rg")
    env_config = load_layout(cfg.get("layout", kind))
    if env_config.kind != kind:
        raise ConfigurationError(f"layout is for {env_config.kind}, env is {kind}")
    prefs = cfg.get("preferences")
    schedule_kw = {}
    if prefs is not None:
        schedule_kw["preferences"] = tuple(
            Preference.two(p) if isinstance(p, (int, float)) else Preference(tuple(p)) for p in prefs)
    if "episodes_per_preference" in cfg:
        schedule_kw["episodes_per_preference"] = int(cfg["episodes_per_preference"])
    rpb = dict(cfg.get("rpb", {}))
    rpb.setdefault("phi", DEFAULT_PHI[kind])
    tlo = None
    if "tlo" in cfg:
        t = dict(cfg["tlo"])
        base = TloParams.for_env(kind)
        tlo = TloParams(_thresholds(t.get("objective_thresholds", base.objective_thresholds)),
                        tuple(t.get("order", base.order)),
                        int(t.get("training_episodes", base.training_episodes)))
    kw = {k: cfg[k] for k in ("mode", "runs", "perturb_period", "perturb_fraction", "layout_shuffle",
                              "master_seed") if k in cfg}
    return H.ExperimentConfig(
        env_config=env_config,
        algorithm=algorithm or cfg.get("algorithm", "rpb"),
        schedule=H.PreferenceSchedule(**schedule_kw),
        rpb=H.RpbParams(**rpb),
        learner=LearnerParams(**cfg.get("learner", {})),
        ols=OlsParams(**cfg.get("ols", {})),
        tlo=tlo,
        **kw,
    )


def _load_coverage(cfg: dict):
    path = cfg.get("coverage_set")
    if path is None:
        return None
    try:
        return H.coverage_bundle_from_dict(json.loads(Path(path).read_text()))
    except OSError as exc:
        raise ConfigurationError(f"cannot read coverage set {path}: {exc.strerror}") from exc
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed coverage set {path}") from exc


# --- commands -------------------------------------------------------------------

def _out_dir(cfg: dict) -> Path:
    out = Path(cfg.get("out") or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _jobs(cfg: dict) -> int:
    jobs = cfg.get("jobs")
    jobs = os.cpu_count() or 1 if jobs is None else int(jobs)
    if jobs < 1:
        raise ConfigurationError("jobs must be positive")
    return jobs


def _artifacts(results, out: Path, extra: Optional[dict] = None) -> dict:
    H.write_results_csv(results, out / "results.csv")
    summary = H.build_summary(results)
    if extra:
        summary.update(extra)
    H.write_json(summary, out / "summary.json")
    _plots(summary, out)
    return summary


def _plots(summary: dict, out: Path) -> None:
    _, warnings = emit_plots(summary, out / "plots")
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)


def _needs_offline(config: H.ExperimentConfig) -> bool:
    return config.algorithm in ("ols", "tlo") or (
        config.algorithm == "rpb" and config.rpb.robustness is RobustnessKind.REGRET)


def cmd_run(cfg: dict) -> None:
    config = experiment_config(cfg)
    sets = _load_coverage(cfg)
    if _needs_offline(config) and sets is None:
        raise ConfigurationError(f"{config.algorithm} needs --coverage-set (see train-offline)")
    out, jobs = _out_dir(cfg), _jobs(cfg)
    _artifacts([H.run_experiment(config, sets, jobs)], out)


def cmd_train_offline(cfg: dict) -> None:
    config = experiment_config(cfg)
    if config.algorithm not in ("ols", "tlo"):
        raise ConfigurationError("train-offline needs --algo ols or --algo tlo")
    out, jobs = _out_dir(cfg), _jobs(cfg)
    sets = H.train_offline_all(config, jobs=jobs)
    H.write_json(H.coverage_bundle_to_dict(sets, config), out / f"coverage_{config.algorithm}.json")


def cmd_compare_algos(cfg: dict) -> None:
    algos = cfg.get("algorithms") or list(H.ALGORITHMS)
    bad = [a for a in algos if a not in H.ALGORITHMS]
    if bad:
        raise ConfigurationError(f"unknown algorithms: {', '.join(bad)}")
    configs = [experiment_config(cfg, a) for a in algos]
    out, jobs = _out_dir(cfg), _jobs(cfg)
    results = []
    for config in configs:
        sets = None
        if _needs_offline(config):
            algo = "ols" if config.algorithm in ("ols", "rpb") else "tlo"
            sets = H.train_offline_all(config, algo, jobs)
        results.append(H.run_experiment(config, sets, jobs))
    _artifacts(results, out)


def cmd_sweep_phi(cfg: dict) -> None:
    config = experiment_config(cfg, "rpb")
    phis = cfg.get("phi_values") or list(PHI_GRID)
    out, jobs = _out_dir(cfg), _jobs(cfg)
    rows = []
    for phi, losses in H.sweep_phi(config, phis, jobs):
        arr = np.asarray(losses, dtype=float)
        rows.append({"phi": phi, "mean": float(arr.mean()), "std": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
                     "losses": [float(x) for x in arr]})
    summary = {"env": config.env, "mode": config.mode, "runs": config.runs, "master_seed": config.master_seed,
               "episodes_per_preference": config.schedule.episodes_per_preference, "phi_sweep": rows}
    H.write_json(summary, out / "summary.json")
    _plots(summary, out)


def _compare(cfg: dict, axis: str) -> None:
    config = experiment_config(cfg, "rpb")
    enum = RobustnessKind if axis == "robustness" else DistanceKind
    variants = cfg.get("variants") or [k.value for k in enum]
    try:
        variants = [enum(v).value for v in variants]
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    out, jobs = _out_dir(cfg), _jobs(cfg)
    rows = H.compare_variants(config, axis, variants, _load_coverage(cfg), jobs)
    summary = {"env": config.env, "mode": config.mode, "runs": config.runs, "master_seed": config.master_seed,
               "episodes_per_preference": config.schedule.episodes_per_preference,
               "variants": {"axis": axis, "rows": [{"name": n, "mean": m, "std": s} for n, m, s in rows]}}
    H.write_json(summary, out / "summary.json")
    _plots(summary, out)


def cmd_export_ccs(cfg: dict) -> None:
    config = experiment_config(cfg, "rpb")
    sets = _load_coverage(cfg)
    if _needs_offline(config) and sets is None:
        raise ConfigurationError("regret robustness needs --coverage-set")
    out, jobs = _out_dir(cfg), _jobs(cfg)
    result = H.run_experiment(config, sets, jobs)
    _artifacts([result], out)
    ccs_dir = out / "ccs"
    ccs_dir.mkdir(exist_ok=True)
    for run in result.runs:
        H.write_json(run.ccs, ccs_dir / f"run_{run.run:03d}.json")


def cmd_plot(args) -> None:
    out = Path(args.out or "out")
    src = Path(args.summary) if args.summary else out / "summary.json"
    try:
        summary = json.loads(src.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read summary {src}") from exc
    if not isinstance(summary, dict):
        raise ConfigurationError(f"summary {src} is not a JSON object")
    try:
        _plots(summary, out)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"summary {src} is not a valid summary") from exc


DISPATCH = {
    "run": cmd_run,
    "train-offline": cmd_train_offline,
    "compare-algos": cmd_compare_algos,
    "sweep-phi": cmd_sweep_phi,
    "compare-metrics": lambda cfg: _compare(cfg, "robustness"),
    "compare-distances": lambda cfg: _compare(cfg, "distance"),
    "export-ccs": cmd_export_ccs,
}


def _one_line(exc: BaseException) -> str:
    text = str(exc).strip()
    return text.splitlines()[0] if text else type(exc).__name__


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return 1
        try:
            if args.command == "plot":
                cmd_plot(args)
                return 0
            doc = load_config_file(args.config) if args.config else {}
            cfg = merge_flags(doc, args)
            experiment_config(cfg)  # validate everything before any work starts
        except (ConfigurationError, ContractError, TypeError, ValueError) as exc:
            raise CliError(_one_line(exc), 1) from exc
        try:
            DISPATCH[args.command](cfg)
        except (ConfigurationError, ContractError) as exc:
            raise CliError(_one_line(exc), 1) from exc
        except Exception as exc:
            raise CliError(f"{type(exc).__name__}: {_one_line(exc)}", 2) from exc
    except CliError as exc:
        print(f"morl-rpb: error: {exc}", file=sys.stderr)
        return exc.status
    return 0


if __name__ == "__main__":
    sys.exit(main())
