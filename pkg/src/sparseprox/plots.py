"""Figure rendering for campaign reports.

Each campaign kind gets one PNG next to its CSV: success-rate curves over
the sweep, per-trial error-versus-work traces for constructed runs, and
calibrated mean MSE bars for noisy runs.  Rendering always uses the Agg
backend so reports work on headless machines.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .bench import mean_mse, success_rates

_COLORS = {
    "l1": "tab:gray",
    "l1_fbs": "tab:gray",
    "dca": "tab:red",
    "fbs": "tab:blue",
    "l1l2_fbs": "tab:blue",
    "admm": "tab:green",
    "l1l2_admm": "tab:green",
    "weighted": "tab:purple",
    "oracle": "black",
}


def _color(name):
    return _COLORS.get(name, "tab:orange")


def plot_success(table, path):
    """Success rate versus sweep value, one curve per method."""
    rates = success_rates(table)
    methods = sorted({m for _, m in rates})
    fig, ax = plt.subplots(figsize=(6, 4))
    for m in methods:
        pts = sorted((s, r) for (s, mm), r in rates.items() if mm == m)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                label=m, color=_color(m))
    ax.set_xlabel("sparsity")
    ax.set_ylabel("success rate")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def read_trace_csv(path):
    """Parse a trace file into a dict of column arrays."""
    lines = open(path).read().splitlines()
    if not lines or lines[0] != "iter,matvecs,objective,rel_err":
        raise ValueError(f"{path}: missing trace header")
    cols = {"iter": [], "matvecs": [], "objective": [], "rel_err": []}
    for line in lines[1:]:
        if not line:
            continue
        it, mv, obj, rel = line.split(",")
        cols["iter"].append(int(it))
        cols["matvecs"].append(int(mv))
        cols["objective"].append(float(obj))
        cols["rel_err"].append(float(rel))
    return {k: np.asarray(v) for k, v in cols.items()}


def plot_constructed(trace_dir, sweep, methods, path, trial=0):
    """Error versus work for one trial per sweep value.

    Mirrors the reference presentation: relative error against the matvec
    count divided by two, one panel per sweep value.
    """
    sweep = list(sweep)
    fig, axes = plt.subplots(1, len(sweep), figsize=(5 * len(sweep), 4),
                             squeeze=False)
    for ax, sv in zip(axes[0], sweep):
        for m in methods:
            try:
                cols = read_trace_csv(f"{trace_dir}/trace_{m}_{sv:g}_{trial}.csv")
            except (OSError, ValueError):
                continue
            mask = np.isfinite(cols["rel_err"]) & (cols["rel_err"] > 0)
            ax.semilogy(cols["matvecs"][mask] / 2.0, cols["rel_err"][mask],
                        label=m, color=_color(m))
        ax.set_title(f"gamma={sv:g}")
        ax.set_xlabel("matvecs / 2")
        ax.set_ylabel("relative error")
        ax.grid(alpha=0.3)
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_noisy(table, path):
    """Calibrated mean MSE versus measurement count, one curve per method."""
    cal = mean_mse(table)
    if not np.isfinite(float(table.metadata.get("calibration_scale", "nan"))):
        cal = mean_mse(table, calibrated=False)
    methods = sorted({m for _, m in cal})
    fig, ax = plt.subplots(figsize=(6, 4))
    for m in methods:
        pts = sorted((s, v) for (s, mm), v in cal.items() if mm == m)
        style = dict(marker="s", linestyle="--") if m == "oracle" else dict(marker="o")
        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=m,
                color=_color(m), **style)
    ax.set_xlabel("measurements M")
    ax.set_ylabel("mean MSE (calibrated)")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_report_figures(kind, table, out_stem, trace_dir=None, sweep=None,
                          methods=None):
    """Write the figure for one campaign; returns the figure path."""
    if kind == "success":
        path = f"{out_stem}_rates.png"
        plot_success(table, path)
    elif kind == "constructed":
        path = f"{out_stem}_traces.png"
        plot_constructed(trace_dir, sweep, methods, path)
    else:
        path = f"{out_stem}_mse.png"
        plot_noisy(table, path)
    return path
