"""Figure rendering for sweep outputs.

Analytic results are drawn as lines, simulation estimates as square
markers with error bars, the critical generation time as a dashed vertical
marker.  Everything is rendered headless to PNG files next to the CSVs.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


_PANELS = [
    # (file stem, csv column, y label, log y)
    ("cbr", "cbr", "channel busy ratio", False),
    ("pdr", "P_s", "packet delivery ratio", False),
    ("access_delay", "ED_ms", "mean access delay (ms)", True),
    ("aoi", "EH_ms", "mean AoI (ms)", True),
    ("energy", "Ebar_mJ", "energy per delivered message (mJ)", True),
    ("throughput", "theta_kbps", "throughput (kbit/s)", True),
    ("throughput_norm", "theta_norm", "normalized throughput", False),
]


def _axis_base(ax, s_inf_ms: float | None, ylabel: str):
    ax.set_xscale("log")
    ax.set_xlabel("mean message generation time S (ms)")
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    if s_inf_ms is not None and math.isfinite(s_inf_ms):
        ax.axvline(s_inf_ms, color="k", linestyle="--", linewidth=1, alpha=0.6)


def _panel(analytic_rows, sim_rows, column, ylabel, logy, s_inf_ms, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    if analytic_rows:
        xs = [r["S_ms"] for r in analytic_rows]
        ys = [r[column] for r in analytic_rows]
        ax.plot(xs, ys, "-", color="tab:blue", label="model")
    if sim_rows:
        xs = [r["S_ms"] for r in sim_rows]
        ys = [r[column] for r in sim_rows]
        errs = [r.get(column + "_ci", float("nan")) for r in sim_rows]
        ax.errorbar(xs, ys, yerr=errs, fmt="s", color="tab:red", capsize=3,
                    markersize=4, linestyle="none", label="simulation")
    if logy:
        ax.set_yscale("log")
    _axis_base(ax, s_inf_ms, ylabel)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _backlog_panel(analytic_rows, sim_rows, s_inf_ms, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    if analytic_rows:
        xs = [r["S_ms"] for r in analytic_rows]
        mean = [r["EQ"] for r in analytic_rows]
        std = [r["StdQ"] for r in analytic_rows]
        ax.plot(xs, mean, "-", color="tab:blue", label="model mean")
        ax.fill_between(xs, [m - s for m, s in zip(mean, std)],
                        [m + s for m, s in zip(mean, std)],
                        color="tab:blue", alpha=0.2, label="model +- std")
    if sim_rows:
        xs = [r["S_ms"] for r in sim_rows]
        ax.errorbar(xs, [r["EQ"] for r in sim_rows],
                    yerr=[r.get("EQ_ci", float("nan")) for r in sim_rows],
                    fmt="s", color="tab:red", capsize=3, markersize=4,
                    linestyle="none", label="simulation")
    _axis_base(ax, s_inf_ms, "backlogged nodes")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _tradeoff_panel(analytic_rows, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = [r["EH_ms"] for r in analytic_rows]
    ys = [r["Ebar_mJ"] for r in analytic_rows]
    ax.plot(xs, ys, "o-", color="tab:blue", markersize=3)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("mean AoI (ms)")
    ax.set_ylabel("energy per delivered message (mJ)")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_sweep_figures(analytic_rows: list[dict], sim_rows: list[dict],
                         out_dir: str | Path,
                         s_inf_ms: float | None = None) -> list[Path]:
    """Render the standard panel set; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for stem, column, ylabel, logy in _PANELS:
        path = out / f"{stem}_vs_S.png"
        _panel(analytic_rows, sim_rows, column, ylabel, logy, s_inf_ms, path)
        written.append(path)
    path = out / "backlog_vs_S.png"
    _backlog_panel(analytic_rows, sim_rows, s_inf_ms, path)
    written.append(path)
    if analytic_rows:
        path = out / "energy_vs_aoi.png"
        _tradeoff_panel(analytic_rows, path)
        written.append(path)
    return written
