"""Acceptance criteria, one test each.

Every test prints a single PASS/FAIL line (collected into the terminal
summary by conftest) and then asserts. The experiment-scale criteria read the
shipped desk configs so the pinned master seed lives in one place.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from morl_rpb import harness as H
from morl_rpb.cli import experiment_config, load_config_file, main
from morl_rpb.core import Preference, preference_distance, robustness
from morl_rpb.envs import UP, load_layout, make_env, perturb
from morl_rpb.learner import LearnerParams, init_policy, run_episode, run_episodes
from morl_rpb.rpb import CcsStore, RpbAgent, SteppingstonePolicyEntry
from tabular_mdp import make_mdp, value_iteration

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
TOL = 1e-9


def report(number, ok, detail, seconds):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail} ({seconds:.1f}s)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def desk(name, algorithm):
    return experiment_config(load_config_file(CONFIGS / name), algorithm)


def segment_samples(result):
    return H.segment_samples(H.compute_metrics(result.records, result.config.schedule))


def execute(config, jobs=1):
    sets = H.train_offline_all(config, jobs=jobs) if config.algorithm in ("ols", "tlo") else None
    return H.run_experiment(config, sets, jobs)


# --- 1 ----------------------------------------------------------------------

def test_criterion_1_formulas():
    t0 = time.perf_counter()
    h = [2.0, 4.0, 2.0, 4.0]  # mean 3, population sd 1
    p1, p2 = Preference.of(0.66, 0.34), Preference.of(0.33, 0.67)
    cos = (0.66 * 0.33 + 0.34 * 0.67) / (math.hypot(0.66, 0.34) * math.hypot(0.33, 0.67))
    checks = {
        "stability": (robustness(h, "stability"), 3.0 / (1.0 + 1e-9)),
        "iod": (robustness(h, "iod"), -1.0 / (3.0 + 1e-9)),
        "cv": (robustness(h, "cv"), -1.0 / (3.0 + 1e-9)),
        "entropy": (robustness([0, 1, 2, 3], "entropy"), -2.0),
        "regret": (robustness(h, "regret", reference_mean=5.0), -2.0),
        "euclidean": (preference_distance(p1, p2, "euclidean"), 0.4666904755831214),
        "hamming": (preference_distance(p1, p2, "hamming"), 2.0),
        "cosine": (preference_distance(p1, p2, "cosine"), 1.0 - cos),
        "manhattan": (preference_distance(p1, p2, "manhattan"), 0.66),
    }
    bad = [k for k, (got, want) in checks.items() if abs(got - want) > TOL]
    dt = time.perf_counter() - t0
    ok = not bad and dt < 1.0
    report(1, ok, f"{len(checks) - len(bad)}/{len(checks)} hand values within {TOL:g}", dt)
    assert ok, bad


# --- 2 ----------------------------------------------------------------------

def test_criterion_2_learner_oracle():
    t0 = time.perf_counter()
    w = Preference.of(0.5, 0.5)
    matches = []
    for shape, seed in ((("grid", 4, 5), 1), (("chain", 10), 2), (("random", 12), 3)):
        mdp = make_mdp(shape, seed, w=w)
        policy = init_policy(mdp.num_states, mdp.num_actions)
        run_episodes(mdp, policy, w, LearnerParams(alpha=0.1, gamma=0.9, epsilon=0.1, episodes=2000),
                     np.random.default_rng(seed))
        optimal = value_iteration(mdp, w, 0.9).argmax(axis=1)[:-1]
        matches.append(float(np.mean(policy.greedy()[:-1] == optimal)))
    dt = time.perf_counter() - t0
    ok = all(m == 1.0 for m in matches) and dt < 10.0
    report(2, ok, f"greedy/optimal agreement {matches} on 3 MDPs", dt)
    assert ok


# --- 3 ----------------------------------------------------------------------

def test_criterion_3_replay_suite():
    t0 = time.perf_counter()
    P = Preference.two
    failures = []

    # gating: consecutive preferences within phi never touch the store
    a = RpbAgent(3, 4, P(0.5), 0.15)
    first = a.current_policy
    for w0 in (0.52, 0.55, 0.5, 0.47, 0.45):
        a.record(1.0)
        a.record(2.0)
        a.on_preference_change(P(w0))
    if len(a.ccs) or a.current_policy is not first:
        failures.append("gating")

    # append-time separation and strict replacement over a scripted schedule
    rng = np.random.default_rng(0)
    a = RpbAgent(3, 4, P(0.5), 0.15)
    for w0 in rng.uniform(0, 1, 60).round(2):
        for v in rng.normal(5, rng.uniform(0.1, 3), 6):
            a.record(v)
        before = list(a.ccs.entries)
        n = len(a.ccs.events)
        a.on_preference_change(P(float(w0)))
        for action, i in a.ccs.events[n:]:
            if action == "append" and any(
                    a.ccs.distance(a.ccs.entries[i].preference, e.preference) <= 0.15 for e in before):
                failures.append("separation")
            if action == "replace" and not a.ccs.entries[i].robustness > before[i].robustness:
                failures.append("strict replacement")
            if action == "keep" and a.ccs.entries[i] is not before[i]:
                failures.append("keep")

    # nearest retrieval with earliest-stored tie-break
    s = CcsStore(0.15)
    for w0 in (0.9, 0.1):
        s.entries.append(SteppingstonePolicyEntry(init_policy(3, 4), P(w0), 1.0))
    if s.retrieve_nearest(P(0.2)).preference != P(0.1) or s.retrieve_nearest(P(0.5)) is not s.entries[0]:
        failures.append("retrieval")

    # phi beyond the largest distance: identical to plain continuing SQ-L
    sched = H.PreferenceSchedule(episodes_per_preference=10)
    cfg = H.ExperimentConfig.for_env("dst", runs=1, schedule=sched, master_seed=3, rpb=H.RpbParams(phi=1.5))
    rpb = H.run_single(cfg, 0)
    env = make_env(H.initial_layout(cfg, 0))
    g = np.random.default_rng(H.run_seeds(3, 0).algo)
    pol = init_policy(env.num_states, env.num_actions)
    plain = [run_episode(env, pol, w, LearnerParams(), g).scalarized_return
             for w in sched.preferences for _ in range(10)]
    if plain != [r.scalarized_return for r in rpb.records]:
        failures.append("phi=1.5 degeneration")

    dt = time.perf_counter() - t0
    ok = not failures and dt < 5.0
    report(3, ok, "gating, separation, strict replacement, retrieval, degeneration"
           + (f"; broken: {sorted(set(failures))}" if failures else ""), dt)
    assert ok


# --- 4 ----------------------------------------------------------------------

def test_criterion_4_environments():
    t0 = time.perf_counter()
    failures = []
    sar = make_env(load_layout("sar"))
    sar.reset(0)
    sar.x, sar.y = 2, 3
    if sar.step(UP).reward != (-5.0, -1.0):
        failures.append("sar fire")
    dst = make_env(load_layout("dst"))
    dst.reset(0)
    dst.x, dst.y = 3, 0
    out = dst.step(UP)
    if out.reward != (-1.0, 0.0) or (dst.x, dst.y) != (3, 0):
        failures.append("dst off-grid")
    rg = make_env(load_layout("rg", seed=11))
    attacks = 0
    for ep in range(10_000):
        rg.reset(ep)
        rg.x, rg.y = 1, 2
        attacks += rg.step(UP).reward[1] < 0
    rate = attacks / 10_000
    if not 0.09 <= rate <= 0.11:
        failures.append(f"rg attack rate {rate}")
    for kind in ("sar", "dst", "rg"):
        cfg = load_layout(kind)
        moved = sum((a.x, a.y) != (b.x, b.y) for a, b in zip(cfg.objects, perturb(cfg, 0.25, 1).objects))
        if moved != math.floor(0.25 * len(cfg.objects)):
            failures.append(f"{kind} perturb moved {moved}")
    dt = time.perf_counter() - t0
    ok = not failures and dt < 10.0
    report(4, ok, f"fire/off-grid/attack rate {rate:.4f}/perturb counts" + (f"; broken: {failures}" if failures else ""),
           dt)
    assert ok


# --- 5 ----------------------------------------------------------------------

def test_criterion_5_stationary_dst():
    t0 = time.perf_counter()
    g = {}
    for algo in ("rpb", "sql", "ols"):
        g[algo] = segment_samples(execute(desk("desk-dst-stationary.json", algo)))[0]
    _, p = H.welch_t_test(g["rpb"], g["sql"])
    mean = {k: float(np.mean(v)) for k, v in g.items()}
    gap = abs(mean["rpb"] - mean["ols"]) / abs(mean["ols"])
    ok = mean["rpb"] > mean["sql"] and p < 0.05 and gap <= 0.10
    dt = time.perf_counter() - t0
    report(5, ok, f"gamma_c rpb {mean['rpb']:.3f} sql {mean['sql']:.3f} ols {mean['ols']:.3f}; "
                  f"rpb>sql p={p:.4f} (<0.05); |rpb-ols|/|ols|={gap:.3f} (<=0.10)", dt)
    assert ok


# --- 6 ----------------------------------------------------------------------

def test_criterion_6_nonstationary_dst():
    t0 = time.perf_counter()
    g, loss = {}, {}
    for algo in ("rpb", "sql", "ols", "tlo"):
        g[algo], loss[algo] = segment_samples(execute(desk("desk-dst-nonstationary.json", algo)))
    mean = {k: float(np.mean(v)) for k, v in g.items()}
    parts, ok = [], True
    for other in ("ols", "tlo", "sql"):
        _, p = H.welch_t_test(g["rpb"], g[other])
        beat = mean["rpb"] > mean[other] and p < 0.05
        ok &= beat
        parts.append(f"vs {other} {mean[other]:.3f} p={p:.4f}")
    lr, ls = float(np.mean(loss["rpb"])), float(np.mean(loss["sql"]))
    ok &= lr < ls
    dt = time.perf_counter() - t0
    report(6, ok, f"gamma_c rpb {mean['rpb']:.3f} " + ", ".join(parts) + f"; loss rpb {lr:.3f} < sql {ls:.3f}", dt)
    assert ok


# --- 7 ----------------------------------------------------------------------

def test_criterion_7_phi_sweep_sar():
    t0 = time.perf_counter()
    doc = load_config_file(CONFIGS / "desk-sar-phi-sweep.json")
    base = experiment_config(doc, "rpb")
    out = H.sweep_phi(base, doc["phi_values"])
    means = {phi: float(np.mean(losses)) for phi, losses in out}
    best = min(means, key=means.get)
    complete = len(out) == 10 and all(len(l) == base.runs * (len(base.schedule) - 1) for _, l in out)
    ok = complete and means[0.5] > means[best]
    dt = time.perf_counter() - t0
    report(7, ok, f"mean loss at 0.5 = {means[0.5]:.3f} vs optimum phi={best} {means[best]:.3f}; "
                  f"{len(out)} distributions", dt)
    assert ok


# --- 8 ----------------------------------------------------------------------

@pytest.mark.parametrize("config,command", [("smoke-dst.json", "run"), ("desk-dst-nonstationary.json", "compare-algos")])
def test_criterion_8_determinism(tmp_path, monkeypatch, config, command):
    monkeypatch.delenv("MORL_SEED", raising=False)
    t0 = time.perf_counter()
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert main([command, "--config", str(CONFIGS / config), "--out", str(out), "--jobs", "1"]) == 0
        outs.append(out)
    names = ["results.csv"] + sorted(str(p.relative_to(outs[0])) for p in (outs[0] / "plots").glob("*.svg"))
    same = all((outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names)
    dt = time.perf_counter() - t0
    report(8, same, f"{config}: {len(names)} files byte-identical across two runs", dt)
    assert same
