"""Print the pairwise Welch table stored in one or more summary.json files."""

import json
import sys


def main(paths):
    for path in paths:
        s = json.load(open(path))
        print(f"# {path}  env={s['env']} mode={s['mode']} runs={s['runs']}")
        for algo, block in s["algorithms"].items():
            g = [r["mean"] for r in block["gamma_c"]]
            l = [r["mean"] for r in block["loss"]]
            loss = f"{sum(l) / len(l):8.3f}" if l else "       -"
            print(f"  {algo:4s} gamma_c {sum(g) / len(g):8.3f}  loss {loss}")
        for w in s.get("welch", []):
            mark = "*" if w["p"] < 0.05 else " "
            print(f"  {w['a']:>4s} vs {w['b']:4s} {w['metric']:8s} t={w['t']:7.3f} p={w['p']:.4f} {mark}")


if __name__ == "__main__":
    main(sys.argv[1:])
