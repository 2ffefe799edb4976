import json
import math
from pathlib import Path

import numpy as np
import pytest

from sicslot.cli import main
from sicslot.policy import dump_policy_artifact, policy_cache_key
from sicslot.sweep import (SweepSpec, compare_report, default_s_grid,
                           knee_point, rows_to_csv, run_sweep)


# ---------------------------------------------------------------------------
# sweep spec and CSV
# ---------------------------------------------------------------------------

def test_default_grid_shape():
    grid = default_s_grid()
    assert grid.size == 30
    assert grid[0] == pytest.approx(1e-3)
    assert grid[-1] == pytest.approx(1.0)


def test_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec(S_grid=np.array([0.2, 0.1]))
    with pytest.raises(ValueError):
        SweepSpec(mode="nope")
    with pytest.raises(ValueError):
        SweepSpec(mode="both", replications=1)


@pytest.fixture(scope="module")
def small_sweep(ctx):
    spec = SweepSpec(S_grid=np.geomspace(5e-3, 0.5, 5), mode="both",
                     replications=3, horizon_slots=8_000)
    return run_sweep(ctx.config, spec, ctx.policy, ctx.profile)


def test_sweep_row_counts(small_sweep):
    assert len(small_sweep.analytic_rows) == 5
    assert len(small_sweep.sim_rows) == 5


def test_csv_schema_and_versioning(small_sweep):
    text = rows_to_csv(small_sweep.analytic_rows, simulate=False)
    lines = text.splitlines()
    assert lines[0] == "# sicslot-sweep-csv/1"
    assert lines[1].startswith("S_ms,mode,P_s,")
    assert len(lines) == 2 + 5
    sim_text = rows_to_csv(small_sweep.sim_rows, simulate=True)
    assert "P_s_ci" in sim_text.splitlines()[1]


def test_csv_bodies_reproducible(ctx, small_sweep):
    spec = SweepSpec(S_grid=np.geomspace(5e-3, 0.5, 5), mode="both",
                     replications=3, horizon_slots=8_000)
    again = run_sweep(ctx.config, spec, ctx.policy, ctx.profile)
    a = rows_to_csv(small_sweep.sim_rows, simulate=True)
    b = rows_to_csv(again.sim_rows, simulate=True)
    assert a == b


def test_summary_marks_critical_load(small_sweep, ctx):
    from sicslot.analytic import critical_rate
    _, _, S_inf = critical_rate(ctx.policy, ctx.config)
    assert small_sweep.summary["S_inf_ms"] == pytest.approx(S_inf * 1e3)
    knee = small_sweep.summary["tradeoff"]["knee"]
    assert {"S_ms", "EH_ms", "Ebar_mJ"} <= set(knee)


def test_monotone_cbr_column(small_sweep):
    cbr = [r["cbr"] for r in small_sweep.analytic_rows]
    assert all(b <= a + 1e-12 for a, b in zip(cbr, cbr[1:]))


# ---------------------------------------------------------------------------
# comparison
# ---------------------------------------------------------------------------

def test_compare_identical_rows_is_perfect(small_sweep):
    rows = small_sweep.analytic_rows
    fake_sim = []
    for r in rows:
        s = dict(r)
        s["mode"] = "simulate"
        for m in ("P_s", "cbr", "ED_ms", "EH_ms", "theta_norm"):
            s[m + "_ci"] = 0.1
        fake_sim.append(s)
    cmp = compare_report(rows, fake_sim)
    assert cmp["agreement_fraction"] == 1.0
    assert all(c["rel_err"] == 0.0 for c in cmp["cells"])
    assert all(c["ci_contained"] for c in cmp["cells"])


def test_compare_flags_containment(small_sweep):
    cmp = compare_report(small_sweep.analytic_rows, small_sweep.sim_rows)
    assert 0.0 <= cmp["agreement_fraction"] <= 1.0
    assert cmp["cells_total"] == 5 * 5
    for cell in cmp["cells"]:
        if cell["ci_contained"]:
            assert cell["agrees"]


def test_compare_rejects_grid_mismatch(small_sweep):
    with pytest.raises(ValueError):
        compare_report(small_sweep.analytic_rows, small_sweep.sim_rows[:-1])
    shifted = [dict(r) for r in small_sweep.sim_rows]
    shifted[0]["S_ms"] *= 2
    with pytest.raises(ValueError, match="grids differ"):
        compare_report(small_sweep.analytic_rows, shifted)


def test_knee_point_invariant_to_scaling(small_sweep):
    rows = small_sweep.analytic_rows
    knee = knee_point(rows)
    scaled = [dict(r, Ebar_mJ=r["Ebar_mJ"] * 7.0) for r in rows]
    assert knee_point(scaled)["S_ms"] == knee["S_ms"]


# ---------------------------------------------------------------------------
# file outputs and figures
# ---------------------------------------------------------------------------

def test_sweep_writes_outputs(ctx, tmp_path):
    spec = SweepSpec(S_grid=np.geomspace(0.01, 0.2, 3), mode="both",
                     replications=2, horizon_slots=4_000)
    run_sweep(ctx.config, spec, ctx.policy, ctx.profile, out_dir=tmp_path)
    assert (tmp_path / "sweep_analytic.csv").exists()
    assert (tmp_path / "sweep_simulate.csv").exists()
    summary = json.loads((tmp_path / "sweep_summary.json").read_text())
    assert summary["schema"] == "sicslot-sweep-summary/1"
    assert "comparison" in summary
    pngs = sorted(p.name for p in tmp_path.glob("*.png"))
    assert "pdr_vs_S.png" in pngs
    assert "aoi_vs_S.png" in pngs
    assert "energy_vs_aoi.png" in pngs
    assert "backlog_vs_S.png" in pngs
    assert len(pngs) == 9


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def cli_artifact(ctx, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    path = out / f"policy-{policy_cache_key(ctx.config)}.txt"
    path.write_text(dump_policy_artifact(ctx.policy, ctx.profile, "test"))
    return out, path


def test_cli_policy_show(cli_artifact, capsys):
    out, path = cli_artifact
    assert main(["policy", "show", "--policy", str(path)]) == 0
    captured = capsys.readouterr().out
    assert "k_c" in captured
    assert "gamma_k" in captured


def test_cli_analytic_run(cli_artifact, capsys):
    out, path = cli_artifact
    rc = main(["analytic", "run", "--policy", str(path), "--S", "0.05",
               "--out", str(out)])
    assert rc == 0
    captured = capsys.readouterr().out
    assert "P_s" in captured and "E[H]" in captured and "S_inf" in captured


def test_cli_simulate_run(cli_artifact, capsys):
    out, path = cli_artifact
    rc = main(["simulate", "run", "--policy", str(path), "--S", "0.05",
               "--replications", "2", "--horizon", "3000", "--out", str(out)])
    assert rc == 0
    captured = capsys.readouterr().out
    assert "pdr" in captured
    assert "conservation gap (all replications): 0" in captured


def test_cli_sweep_and_compare(cli_artifact, capsys):
    out, path = cli_artifact
    rc = main(["sweep", "--policy", str(path), "--mode", "both",
               "--s-grid", "10,50,200", "--replications", "2",
               "--horizon", "3000", "--out", str(out), "--no-figures"])
    assert rc == 0
    analytic_csv = out / "sweep_analytic.csv"
    sim_csv = out / "sweep_simulate.csv"
    assert analytic_csv.exists() and sim_csv.exists()
    capsys.readouterr()
    rc = main(["compare", str(analytic_csv), str(sim_csv), "--out", str(out)])
    captured = capsys.readouterr().out
    assert "cells agree" in captured
    assert (out / "comparison.json").exists()
    assert rc in (0, 1)
    # comparing the analytic sweep against itself agrees perfectly
    rc = main(["compare", str(analytic_csv), str(analytic_csv),
               "--out", str(out)])
    assert rc == 0


def test_cli_config_parsing(tmp_path, cli_artifact, capsys):
    out, path = cli_artifact
    cfg_file = tmp_path / "small.cfg"
    cfg_file.write_text("n = 50\nlam = 100.0\n")
    rc = main(["analytic", "run", "--config", str(cfg_file),
               "--policy", str(path), "--out", str(out)])
    assert rc == 0
    assert "lam = 100.0" in capsys.readouterr().out


def test_cli_policy_show_requires_artifact(capsys):
    assert main(["policy", "show"]) == 2


def test_cli_reuses_cached_policy_artifact(cli_artifact, capsys):
    # out/ already holds policy-<hash>.txt, so no rebuild happens
    out, _ = cli_artifact
    rc = main(["analytic", "run", "--S", "0.02", "--out", str(out)])
    assert rc == 0
    assert "P_s" in capsys.readouterr().out


def test_policy_override_artifact_drives_simulator(ctx, tmp_path, capsys):
    # frozen (p, gamma) override without any SIC profile section
    from sicslot.policy import AccessPolicy, load_policy_artifact

    pol = AccessPolicy.frozen(ctx.config, p=0.5, gamma=2.0)
    text = dump_policy_artifact(pol, None, "override")
    path = tmp_path / "override.txt"
    path.write_text(text)
    loaded, profile = load_policy_artifact(text)
    assert profile is None
    assert np.array_equal(loaded.p, pol.p)
    rc = main(["simulate", "run", "--policy", str(path), "--S", "0.05",
               "--replications", "2", "--horizon", "2000",
               "--out", str(tmp_path)])
    assert rc == 0
    assert "pdr" in capsys.readouterr().out
    # the analytic model cannot run from an override-only artifact
    rc = main(["analytic", "run", "--policy", str(path), "--S", "0.05",
               "--out", str(tmp_path)])
    assert rc == 2


def test_analytic_sweep_covers_default_grid(ctx):
    rows = ctx.analytic_sweep().analytic_rows
    assert len(rows) == 30
