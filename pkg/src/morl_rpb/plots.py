"""Plain-text SVG charts for experiment summaries.

Everything is written by hand with fixed number formatting, so identical
input always gives identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=130, top=40, bottom=50)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _f(x: float) -> str:
    return f"{x:.2f}"


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


class _Canvas:
    def __init__(self, title: str, xlabel: str, ylabel: str, lo: float, hi: float):
        if hi <= lo:
            lo, hi = lo - 1.0, hi + 1.0
        pad = 0.05 * (hi - lo)
        self.lo, self.hi = lo - pad, hi + pad
        self.x0, self.x1 = MARGIN["left"], WIDTH - MARGIN["right"]
        self.y0, self.y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH // 2}" y="22" text-anchor="middle" font-size="15">{_esc(title)}</text>',
            f'<text x="{_f((self.x0 + self.x1) / 2)}" y="{HEIGHT - 12}" text-anchor="middle">{_esc(xlabel)}</text>',
            f'<text x="16" y="{_f((self.y0 + self.y1) / 2)}" text-anchor="middle" '
            f'transform="rotate(-90 16 {_f((self.y0 + self.y1) / 2)})">{_esc(ylabel)}</text>',
            f'<line x1="{self.x0}" y1="{self.y0}" x2="{self.x1}" y2="{self.y0}" stroke="black"/>',
            f'<line x1="{self.x0}" y1="{self.y0}" x2="{self.x0}" y2="{self.y1}" stroke="black"/>',
        ]
        for v in np.linspace(self.lo, self.hi, 5):
            y = self.y(v)
            self.parts.append(f'<line x1="{self.x0 - 4}" y1="{_f(y)}" x2="{self.x0}" y2="{_f(y)}" stroke="black"/>')
            self.parts.append(f'<text x="{self.x0 - 6}" y="{_f(y + 4)}" text-anchor="end">{v:.3g}</text>')

    def y(self, v: float) -> float:
        return self.y0 - (v - self.lo) / (self.hi - self.lo) * (self.y0 - self.y1)

    def slot(self, i: int, n: int) -> float:
        return self.x0 + (i + 0.5) * (self.x1 - self.x0) / n

    def xtick(self, x: float, label: str) -> None:
        self.parts.append(f'<line x1="{_f(x)}" y1="{self.y0}" x2="{_f(x)}" y2="{self.y0 + 4}" stroke="black"/>')
        self.parts.append(f'<text x="{_f(x)}" y="{self.y0 + 17}" text-anchor="middle">{_esc(label)}</text>')

    def legend(self, names: Sequence[str]) -> None:
        for i, name in enumerate(names):
            y = self.y1 + 16 * i + 6
            color = PALETTE[i % len(PALETTE)]
            self.parts.append(f'<rect x="{self.x1 + 12}" y="{y - 8}" width="12" height="10" fill="{color}"/>')
            self.parts.append(f'<text x="{self.x1 + 30}" y="{y + 1}">{_esc(name)}</text>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def line_plot(series: Dict[str, Tuple[Sequence[float], Sequence[float]]], labels: Sequence[str],
              title: str, xlabel: str, ylabel: str) -> str:
    """One line per series with a shaded mean +/- std band."""
    lows = [m - s for means, stds in series.values() for m, s in zip(means, stds)]
    highs = [m + s for means, stds in series.values() for m, s in zip(means, stds)]
    c = _Canvas(title, xlabel, ylabel, min(lows), max(highs))
    n = len(labels)
    for i, lab in enumerate(labels):
        c.xtick(c.slot(i, n), lab)
    for k, (name, (means, stds)) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        xs = [c.slot(i, n) for i in range(len(means))]
        upper = [f"{_f(x)},{_f(c.y(m + s))}" for x, m, s in zip(xs, means, stds)]
        lower = [f"{_f(x)},{_f(c.y(m - s))}" for x, m, s in zip(xs, means, stds)]
        c.parts.append(f'<polygon points="{" ".join(upper + lower[::-1])}" fill="{color}" '
                       f'fill-opacity="0.15" stroke="none"/>')
        pts = " ".join(f"{_f(x)},{_f(c.y(m))}" for x, m in zip(xs, means))
        c.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, m in zip(xs, means):
            c.parts.append(f'<circle cx="{_f(x)}" cy="{_f(c.y(m))}" r="3" fill="{color}"/>')
    c.legend(list(series))
    return c.render()


def box_plot(groups: Sequence[Tuple[str, Sequence[float]]], title: str, xlabel: str, ylabel: str) -> str:
    """Box (quartiles), median line and 1.5 IQR whiskers per group."""
    every = [v for _, vals in groups for v in vals]
    c = _Canvas(title, xlabel, ylabel, min(every), max(every))
    n = len(groups)
    half = 0.3 * (c.x1 - c.x0) / n
    for i, (label, vals) in enumerate(groups):
        x = c.slot(i, n)
        c.xtick(x, label)
        v = np.asarray(vals, dtype=float)
        q1, med, q3 = np.percentile(v, [25, 50, 75])
        iqr = q3 - q1
        lo = v[v >= q1 - 1.5 * iqr].min()
        hi = v[v <= q3 + 1.5 * iqr].max()
        c.parts.append(f'<line x1="{_f(x)}" y1="{_f(c.y(lo))}" x2="{_f(x)}" y2="{_f(c.y(hi))}" stroke="black"/>')
        c.parts.append(f'<rect x="{_f(x - half)}" y="{_f(c.y(q3))}" width="{_f(2 * half)}" '
                       f'height="{_f(c.y(q1) - c.y(q3))}" fill="{PALETTE[0]}" fill-opacity="0.4" stroke="black"/>')
        c.parts.append(f'<line x1="{_f(x - half)}" y1="{_f(c.y(med))}" x2="{_f(x + half)}" '
                       f'y2="{_f(c.y(med))}" stroke="black" stroke-width="2"/>')
    return c.render()


def bar_chart(rows: Sequence[Tuple[str, float, float]], title: str, xlabel: str, ylabel: str) -> str:
    """Bars of ``mean`` with +/- ``std`` error whiskers."""
    lo = min(min(m - s, 0.0) for _, m, s in rows)
    hi = max(max(m + s, 0.0) for _, m, s in rows)
    c = _Canvas(title, xlabel, ylabel, lo, hi)
    n = len(rows)
    half = 0.3 * (c.x1 - c.x0) / n
    base = c.y(0.0)
    for i, (label, m, s) in enumerate(rows):
        x = c.slot(i, n)
        c.xtick(x, label)
        top, bottom = min(base, c.y(m)), max(base, c.y(m))
        c.parts.append(f'<rect x="{_f(x - half)}" y="{_f(top)}" width="{_f(2 * half)}" '
                       f'height="{_f(bottom - top)}" fill="{PALETTE[i % len(PALETTE)]}"/>')
        c.parts.append(f'<line x1="{_f(x)}" y1="{_f(c.y(m - s))}" x2="{_f(x)}" y2="{_f(c.y(m + s))}" stroke="black"/>')
    return c.render()


def emit_plots(summary: Union[dict, str, Path], out_dir: Union[str, Path]) -> Tuple[List[Path], List[str]]:
    """Render every chart the summary has data for; returns written files and warnings."""
    if not isinstance(summary, dict):
        summary = json.loads(Path(summary).read_text())
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written, warnings = [], []

    def save(name: str, text: str) -> None:
        path = out / name
        with open(path, "w", newline="") as fh:
            fh.write(text)
        written.append(path)

    algos = summary.get("algorithms") or {}
    env = summary.get("env", "")
    if algos:
        series = {a: ([g["mean"] for g in d["gamma_c"]], [g["std"] for g in d["gamma_c"]])
                  for a, d in algos.items()}
        n = max(len(v[0]) for v in series.values())
        save("gamma_c.svg", line_plot(series, [f"P{i + 1}" for i in range(n)],
                                      f"Converged return per preference ({env})", "preference", "return"))
        losses = {a: ([x["mean"] for x in d["loss"]], [x["std"] for x in d["loss"]])
                  for a, d in algos.items() if d.get("loss")}
        if losses:
            n = max(len(v[0]) for v in losses.values())
            save("loss.svg", line_plot(losses, [f"P{i + 1}>P{i + 2}" for i in range(n)],
                                       f"Loss after preference change ({env})", "transition", "loss"))
        else:
            warnings.append("loss section is empty; loss plot omitted")
    sweep = summary.get("phi_sweep")
    if sweep:
        groups = [(f"{row['phi']:.2f}", row["losses"]) for row in sweep if row["losses"]]
        if groups:
            save("phi_sweep.svg", box_plot(groups, f"Loss by phi ({env})", "phi", "loss"))
    variants = summary.get("variants")
    if variants:
        rows = [(r["name"], r["mean"], r["std"]) for r in variants["rows"]]
        save(f"variants_{variants['axis']}.svg",
             bar_chart(rows, f"Summed medians by {variants['axis']} ({env})", variants["axis"], "sum of medians"))
    return written, warnings
