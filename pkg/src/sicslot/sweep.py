"""Load sweeps, report files and analytic-vs-simulation comparison.

One CSV row per (S, mode) with a stable versioned schema; a JSON summary
carries the critical-load marker, the AoI/energy trade-off and per-metric
agreement statistics.  Figures are rendered from the same rows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analytic import MetricsReport, critical_rate, evaluate
from .config import SystemConfig
from .pathloss import coverage_radius
from .policy import AccessPolicy
from .sic import SicProfile
from .simulator import SimResult, estimate_metrics, run_replications

CSV_SCHEMA = "sicslot-sweep-csv/1"

CSV_COLUMNS = [
    "S_ms", "mode", "P_s", "theta_msg_s", "theta_norm", "theta_kbps", "cbr",
    "ED_ms", "EH_ms", "zeta_per_s", "Ebar_mJ", "EQ", "StdQ",
]
CI_COLUMNS = [
    "P_s_ci", "theta_msg_s_ci", "theta_norm_ci", "theta_kbps_ci", "cbr_ci",
    "ED_ms_ci", "EH_ms_ci", "Ebar_mJ_ci", "EQ_ci", "StdQ_ci",
]

# metrics the validation claim is judged on, as (csv value, csv ci) pairs
AGREEMENT_METRICS = ["P_s", "cbr", "ED_ms", "EH_ms", "theta_norm"]


def default_s_grid(points: int = 30, lo: float = 1e-3, hi: float = 1.0) -> np.ndarray:
    return np.geomspace(lo, hi, points)


@dataclass(frozen=True)
class SweepSpec:
    """What to sweep and how hard to simulate."""

    S_grid: np.ndarray = field(default_factory=default_s_grid)
    mode: str = "analytic"              # analytic | simulate | both
    replications: int = 10
    horizon_slots: int = 100_000
    warmup_frac: float = 0.1
    confidence: float = 0.95

    def __post_init__(self):
        s = np.asarray(self.S_grid, dtype=float)
        if s.size == 0 or np.any(s <= 0) or np.any(np.diff(s) <= 0):
            raise ValueError("S_grid must be ascending and positive")
        if self.mode not in ("analytic", "simulate", "both"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode != "analytic" and self.replications < 2:
            raise ValueError("simulation sweeps need >= 2 replications")


def _fmt(x: float) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return f"{x:.10g}"


def analytic_row(report: MetricsReport) -> dict:
    row = {
        "S_ms": report.S * 1e3, "mode": "analytic", "P_s": report.P_s,
        "theta_msg_s": report.theta, "theta_norm": report.theta_norm,
        "theta_kbps": report.theta_bps / 1e3, "cbr": report.cbr,
        "ED_ms": report.E_D * 1e3, "EH_ms": report.E_H * 1e3,
        "zeta_per_s": report.zeta, "Ebar_mJ": report.E_bar * 1e3,
        "EQ": report.E_Q, "StdQ": report.Std_Q,
    }
    return {k: v if k == "mode" else float(v) for k, v in row.items()}


def simulated_row(S: float, sim: SimResult, L: float) -> dict:
    m = sim.metrics
    row = {
        "S_ms": S * 1e3, "mode": "simulate", "P_s": m["pdr"].mean,
        "theta_msg_s": m["theta"].mean, "theta_norm": m["theta_norm"].mean,
        "theta_kbps": m["theta"].mean * L / 1e3, "cbr": m["cbr"].mean,
        "ED_ms": m["E_D"].mean * 1e3, "EH_ms": m["E_H"].mean * 1e3,
        "zeta_per_s": math.nan, "Ebar_mJ": m["E_bar"].mean * 1e3,
        "EQ": m["E_Q"].mean, "StdQ": m["Std_Q"].mean,
        "P_s_ci": m["pdr"].ci_half, "theta_msg_s_ci": m["theta"].ci_half,
        "theta_norm_ci": m["theta_norm"].ci_half,
        "theta_kbps_ci": m["theta"].ci_half * L / 1e3,
        "cbr_ci": m["cbr"].ci_half, "ED_ms_ci": m["E_D"].ci_half * 1e3,
        "EH_ms_ci": m["E_H"].ci_half * 1e3, "Ebar_mJ_ci": m["E_bar"].ci_half * 1e3,
        "EQ_ci": m["E_Q"].ci_half, "StdQ_ci": m["Std_Q"].ci_half,
    }
    return {k: v if k == "mode" else float(v) for k, v in row.items()}


def rows_to_csv(rows: list[dict], simulate: bool) -> str:
    cols = CSV_COLUMNS + (CI_COLUMNS if simulate else [])
    lines = [f"# {CSV_SCHEMA}", ",".join(cols)]
    for row in rows:
        lines.append(",".join(_fmt(row.get(col, math.nan)) if col != "mode"
                              else row["mode"] for col in cols))
    return "\n".join(lines) + "\n"


def knee_point(rows: list[dict]) -> dict:
    """AoI/energy trade-off knee: argmin of the normalized product.

    Normalizing each curve by its sweep minimum makes the two axes
    comparable; the argmin of the product is the corner of the L-shaped
    trade-off (and is invariant to the normalization constants).
    """
    eh = np.array([r["EH_ms"] for r in rows])
    eb = np.array([r["Ebar_mJ"] for r in rows])
    crit = (eh / eh.min()) * (eb / eb.min())
    i = int(np.argmin(crit))
    return {
        "S_ms": rows[i]["S_ms"], "EH_ms": rows[i]["EH_ms"],
        "Ebar_mJ": rows[i]["Ebar_mJ"], "criterion": float(crit[i]),
        "index": i,
    }


@dataclass(frozen=True)
class SweepResult:
    analytic_rows: list[dict]
    sim_rows: list[dict]
    summary: dict


def run_sweep(config: SystemConfig, spec: SweepSpec, policy: AccessPolicy,
              profile: SicProfile, out_dir: str | Path | None = None,
              figures: bool = True) -> SweepResult:
    """Sweep the load grid, write CSV/JSON (and figures) if out_dir given."""
    cov_R = coverage_radius(config)
    analytic_rows: list[dict] = []
    sim_rows: list[dict] = []
    for S in np.asarray(spec.S_grid, dtype=float):
        cfg_S = config.with_rate(1.0 / S)
        if spec.mode in ("analytic", "both"):
            analytic_rows.append(analytic_row(
                evaluate(cfg_S, policy, profile, coverage_R=cov_R)))
        if spec.mode in ("simulate", "both"):
            tallies = run_replications(
                cfg_S, policy, spec.replications, spec.horizon_slots,
                warmup_frac=spec.warmup_frac, coverage_R=cov_R,
                root_seed=cfg_S.seed)
            sim_rows.append(simulated_row(
                S, estimate_metrics(tallies, spec.confidence), config.L))

    summary: dict = {
        "schema": "sicslot-sweep-summary/1",
        "mode": spec.mode,
        "S_grid_ms": [float(s * 1e3) for s in spec.S_grid],
        "coverage_R_m": cov_R,
        "policy": {"k_c": policy.k_c, "a_gamma": policy.a_gamma,
                   "b_gamma": policy.b_gamma, "a_D": policy.a_D},
    }
    if analytic_rows:
        # the S_inf marker comes straight from the critical-rate constants
        U_inf, lam_inf, S_inf = critical_rate(policy, config)
        summary["U_inf"] = U_inf
        summary["lambda_inf_per_s"] = lam_inf
        summary["S_inf_ms"] = S_inf * 1e3
        summary["tradeoff"] = {
            "pairs": [{"S_ms": r["S_ms"], "EH_ms": r["EH_ms"],
                       "Ebar_mJ": r["Ebar_mJ"]} for r in analytic_rows],
            "knee": knee_point(analytic_rows),
        }
    if analytic_rows and sim_rows:
        summary["comparison"] = compare_report(analytic_rows, sim_rows)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if analytic_rows:
            (out / "sweep_analytic.csv").write_text(
                rows_to_csv(analytic_rows, simulate=False))
        if sim_rows:
            (out / "sweep_simulate.csv").write_text(
                rows_to_csv(sim_rows, simulate=True))
        (out / "sweep_summary.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n")
        if figures:
            from .figures import render_sweep_figures
            render_sweep_figures(analytic_rows, sim_rows, out,
                                 s_inf_ms=summary.get("S_inf_ms"))
    return SweepResult(analytic_rows=analytic_rows, sim_rows=sim_rows,
                       summary=summary)


def compare_report(analytic_rows: list[dict], sim_rows: list[dict],
                   rel_tol: float = 0.05) -> dict:
    """Per-metric, per-S agreement: relative error and CI containment.

    A cell agrees when the analytic value sits inside the simulated 95%
    interval or within ``rel_tol`` relative error.
    """
    if len(analytic_rows) != len(sim_rows):
        raise ValueError("analytic and simulated sweeps cover different grids")
    for ra, rs in zip(analytic_rows, sim_rows):
        if abs(ra["S_ms"] - rs["S_ms"]) > 1e-9 * max(1.0, ra["S_ms"]):
            raise ValueError(
                f"S grids differ: {ra['S_ms']} vs {rs['S_ms']} ms")
    cells = []
    agree_count = 0
    for ra, rs in zip(analytic_rows, sim_rows):
        for metric in AGREEMENT_METRICS:
            a = ra[metric]
            s = rs[metric]
            ci = rs.get(metric + "_ci", math.nan)
            rel_err = float(abs(a - s) / abs(s)) if s else math.inf
            contained = bool(abs(a - s) <= ci) if not math.isnan(ci) else False
            agrees = bool(contained or rel_err <= rel_tol)
            agree_count += agrees
            cells.append({
                "S_ms": float(ra["S_ms"]), "metric": metric,
                "analytic": float(a), "simulated": float(s),
                "ci_half": None if math.isnan(ci) else float(ci),
                "rel_err": rel_err, "ci_contained": contained,
                "agrees": agrees,
            })
    fraction = agree_count / len(cells) if cells else math.nan
    return {
        "rel_tol": rel_tol,
        "metrics": AGREEMENT_METRICS,
        "cells": cells,
        "agreement_fraction": fraction,
        "cells_total": len(cells),
        "cells_agreeing": agree_count,
    }
