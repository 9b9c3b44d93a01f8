"""SVG figures from experiment CSVs.

Figures render as self-contained SVGs with no timestamps or random ids, so
re-plotting from the same CSV produces byte-identical output.  Distance
sweeps and anytime curves use up to four panels keyed by (arms, experts);
weight and distance-correlation results render as scatter plots.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

matplotlib.rcParams["svg.hashsalt"] = "cdmlab"

PLOT_KINDS = ("sweep", "ablation", "anytime", "weights", "pcc")

_LINE_STYLES = {
    "wmv": dict(color="tab:orange"),
    "metamab": dict(color="tab:green"),
    "exp4p": dict(color="tab:purple"),
    "metacmab": dict(color="tab:blue"),
    "random": dict(color="gray", alpha=0.8),
    "best_expert": dict(color="black", linestyle="--"),
    "worst_expert": dict(color="black", linestyle=":"),
}

_LABELS = {
    "wmv": "WMV",
    "metamab": "meta-MAB",
    "exp4p": "EXP4.P",
    "metacmab": "meta-CMAB",
    "random": "Random",
    "best_expert": "Best expert",
    "worst_expert": "Worst expert",
}


def read_csv_rows(paths) -> list[dict]:
    rows: list[dict] = []
    for path in paths:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                rows.append(row)
    if not rows:
        raise ValueError("no data rows in input CSV(s)")
    return rows


def _save(fig, out_path) -> None:
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _f(value: str) -> float:
    return float(value)


def _panel_grid(n_panels: int):
    cols = 2 if n_panels > 1 else 1
    rows = math.ceil(n_panels / cols)
    fig, axes = plt.subplots(rows, cols, figsize=(6 * cols, 4.2 * rows), squeeze=False)
    return fig, [ax for row in axes for ax in row]


def _sweep_panels(rows: list[dict]):
    panels = defaultdict(list)
    for row in rows:
        panels[(int(row["arms"]), int(row["experts"]))].append(row)
    return dict(sorted(panels.items()))


def _plot_sweep_panel(ax, rows: list[dict], variant_field: str | None) -> None:
    deltas = sorted({_f(r["delta"]) for r in rows})
    variants = sorted({r[variant_field] for r in rows}) if variant_field else [None]
    algorithms = [a for a in _LABELS if any(r["algorithm"] == a for r in rows)]
    for algorithm in algorithms:
        for variant in variants:
            sel = [
                r
                for r in rows
                if r["algorithm"] == algorithm and (variant is None or r[variant_field] == variant)
            ]
            if not sel:
                continue
            means, stds = [], []
            for d in deltas:
                vals = np.array([_f(r["scaled_reward"]) for r in sel if _f(r["delta"]) == d])
                means.append(vals.mean())
                stds.append(vals.std())
            means = np.array(means)
            stds = np.array(stds)
            style = dict(_LINE_STYLES.get(algorithm, {}))
            label = _LABELS.get(algorithm, algorithm)
            if variant is not None and variant != "full":
                style["linestyle"] = "--"
                label = f"{label} {variant}"
            ax.plot(deltas, means, label=label, **style)
            ax.fill_between(deltas, means - stds, means + stds, alpha=0.15, color=style.get("color"))
    for name, field_name in (("best_expert", "best_expert"), ("worst_expert", "worst_expert")):
        means = []
        for d in deltas:
            vals = np.array([_f(r[field_name]) for r in rows if _f(r["delta"]) == d])
            means.append(vals.mean())
        ax.plot(deltas, means, label=_LABELS[name], **_LINE_STYLES[name])
    baseline = []
    for d in deltas:
        vals = np.array([_f(r["random_baseline"]) for r in rows if _f(r["delta"]) == d])
        baseline.append(vals.mean())
    ax.plot(deltas, baseline, color="red", linestyle="-.", label="Random policy")
    ax.set_xlabel("distance")
    ax.set_ylabel("scaled cumulative reward")


def plot_sweep(rows: list[dict], out_path, variant_field: str | None = None) -> None:
    panels = _sweep_panels(rows)
    fig, axes = _panel_grid(len(panels))
    for ax, ((arms, experts), panel_rows) in zip(axes, panels.items()):
        _plot_sweep_panel(ax, panel_rows, variant_field)
        ax.set_title(f"{arms} arms, {experts} experts")
    for ax in axes[len(panels):]:
        ax.axis("off")
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    _save(fig, out_path)


def plot_anytime(rows: list[dict], out_path) -> None:
    names = sorted({r["algorithm"] for r in rows})
    fig, axes = _panel_grid(1)
    ax = axes[0]
    for name in names:
        sel = sorted((int(r["t"]), _f(r["mean"]), _f(r["std"])) for r in rows if r["algorithm"] == name)
        ts = np.array([s[0] for s in sel])
        means = np.array([s[1] for s in sel])
        stds = np.array([s[2] for s in sel])
        if name == "random_baseline":
            ax.plot(ts, means, color="red", linestyle="-.", label="Random policy")
            continue
        style = _LINE_STYLES.get(name, {})
        ax.plot(ts, means, label=_LABELS.get(name, name), **style)
        ax.fill_between(ts, means - stds, means + stds, alpha=0.15, color=style.get("color"))
    ax.set_xlabel("step")
    ax.set_ylabel("scaled average reward")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, out_path)


def plot_weights(rows: list[dict], out_path) -> None:
    reward = np.array([_f(r["expected_reward"]) for r in rows])
    cmab = np.array([_f(r["metacmab_weight"]) for r in rows])
    exp4p = np.array([_f(r["exp4p_weight"]) for r in rows])
    is_best = np.array([r["is_best"] in ("True", "true", "1") for r in rows])

    fig, axes = plt.subplots(1, 2, figsize=(11, 4.2))
    axes[0].scatter(reward, cmab, s=6, alpha=0.4, color="tab:blue")
    slope, intercept = np.polyfit(reward, cmab, 1)
    xs = np.linspace(reward.min(), reward.max(), 50)
    axes[0].plot(xs, slope * xs + intercept, color="red")
    axes[0].set_xlabel("expert expected reward")
    axes[0].set_ylabel("normalized linear-model weight")

    axes[1].scatter(reward[~is_best], exp4p[~is_best], s=6, alpha=0.4, color="tab:purple")
    axes[1].scatter(reward[is_best], exp4p[is_best], s=10, color="red", label="best expert")
    axes[1].set_xlabel("expert expected reward")
    axes[1].set_ylabel("normalized exponential weight")
    axes[1].legend(fontsize=8)
    fig.tight_layout()
    _save(fig, out_path)


def plot_pcc(rows: list[dict], out_path) -> None:
    d = np.array([_f(r["scaled_distance"]) for r in rows])
    pcc = np.array([_f(r["pcc"]) for r in rows])
    fig, axes = _panel_grid(1)
    ax = axes[0]
    ax.scatter(d, pcc, s=6, alpha=0.4, color="tab:blue")
    slope, intercept = np.polyfit(d, pcc, 1)
    xs = np.linspace(d.min(), d.max(), 50)
    ax.plot(xs, slope * xs + intercept, color="red", label=f"fit: {slope:.2f} d + {intercept:.2f}")
    ax.set_xlabel("scaled distance")
    ax.set_ylabel("value correlation (PCC)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, out_path)


def plot_csv(kind: str, paths, out_path) -> None:
    """Render one figure kind from one or more result CSVs."""
    rows = read_csv_rows(paths)
    if kind == "sweep":
        plot_sweep(rows, out_path)
    elif kind == "ablation":
        plot_sweep(rows, out_path, variant_field="variant")
    elif kind == "anytime":
        plot_anytime(rows, out_path)
    elif kind == "weights":
        plot_weights(rows, out_path)
    elif kind == "pcc":
        plot_pcc(rows, out_path)
    else:
        raise ValueError(f"unknown figure kind {kind!r}")
