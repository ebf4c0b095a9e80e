"""Run every desk-scale experiment config and collect the outputs under one directory.

    python scripts/run_desk_experiments.py --out runs/desk [--scale full] [--only dst]

Each config goes through the same CLI entry point a user would type, so the
artifacts here are byte-identical to running ``morl-rpb`` by hand.
"""

import argparse
import sys
import time
from pathlib import Path

from morl_rpb.cli import main as cli

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

# (config stem, subcommand)
DESK = [
    ("desk-dst-stationary", "compare-algos"),
    ("desk-dst-nonstationary", "compare-algos"),
    ("desk-sar-stationary", "compare-algos"),
    ("desk-sar-nonstationary", "compare-algos"),
    ("desk-rg-stationary", "compare-algos"),
    ("desk-rg-nonstationary", "compare-algos"),
    ("desk-sar-phi-sweep", "sweep-phi"),
    ("desk-dst-metrics", "compare-metrics"),
    ("desk-dst-distances", "compare-distances"),
]


def jobs_for(scale):
    if scale == "desk":
        return DESK
    return [(stem.replace("desk-", "full-"), cmd) for stem, cmd in DESK if (CONFIGS / stem.replace("desk-", "full-")).with_suffix(".json").exists()]


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs")
    ap.add_argument("--scale", choices=["desk", "full"], default="desk")
    ap.add_argument("--only", help="substring filter on config names")
    ap.add_argument("--jobs", type=int)
    args = ap.parse_args(argv)

    failed = 0
    for stem, command in jobs_for(args.scale):
        if args.only and args.only not in stem:
            continue
        argv = [command, "--config", str(CONFIGS / f"{stem}.json"), "--out", str(Path(args.out) / stem)]
        if args.jobs:
            argv += ["--jobs", str(args.jobs)]
        t0 = time.perf_counter()
        code = cli(argv)
        print(f"{stem:28s} {command:18s} exit {code}  {time.perf_counter() - t0:7.1f}s", flush=True)
        failed += code != 0
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
