"""Command-line interface.

Subcommands: ``policy build|show``, ``analytic run``, ``simulate run``,
``sweep``, ``compare``, ``accept``.  Policy artifacts are cached by a
content hash of everything that influences them, so repeated runs skip the
Monte Carlo optimization.  Worker count for simulation replications comes
from the SICSLOT_WORKERS environment variable only.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .acceptance import AcceptanceContext, format_results, run_acceptance
from .analytic import evaluate
from .config import SystemConfig, dump_config, parse_config
from .pathloss import coverage_radius
from .policy import (build_policy, dump_policy_artifact, load_policy_artifact,
                     policy_cache_key)
from .simulator import estimate_metrics, run_replications
from .sweep import SweepSpec, compare_report, default_s_grid, run_sweep


def _load_config(args) -> SystemConfig:
    cfg = parse_config(args.config) if args.config else SystemConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "S", None) is not None:
        cfg = cfg.with_rate(1.0 / args.S)
    return cfg.validate()


def _policy_paths(out_dir: Path, cfg: SystemConfig) -> Path:
    return out_dir / f"policy-{policy_cache_key(cfg)}.txt"


def _get_policy(args, cfg: SystemConfig):
    """Load the policy artifact if present, else build and cache it."""
    if getattr(args, "policy", None):
        return load_policy_artifact(Path(args.policy).read_text())
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache = _policy_paths(out_dir, cfg)
    if cache.exists():
        return load_policy_artifact(cache.read_text())
    policy, profile, _ = build_policy(cfg)
    cache.write_text(dump_policy_artifact(policy, profile,
                                          policy_cache_key(cfg)))
    print(f"policy artifact cached at {cache}", file=sys.stderr)
    return policy, profile


def _s_grid(args) -> np.ndarray:
    if args.s_grid:
        vals = sorted(float(v) for v in args.s_grid.split(","))
        return np.array(vals) * 1e-3
    return default_s_grid(args.s_points)


def cmd_policy(args) -> int:
    cfg = _load_config(args)
    if args.action == "build":
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        policy, profile, table = build_policy(cfg)
        path = _policy_paths(out_dir, cfg)
        path.write_text(dump_policy_artifact(policy, profile,
                                             policy_cache_key(cfg)))
        print(f"wrote {path}")
        print(f"k_c = {policy.k_c}, a_gamma = {policy.a_gamma:.4f}, "
              f"b_gamma = {policy.b_gamma:.4f}, a_D = {policy.a_D:.4f}")
        return 0
    # show
    if not args.policy:
        print("policy show needs --policy <artifact>", file=sys.stderr)
        return 2
    policy, profile = load_policy_artifact(Path(args.policy).read_text())
    print(f"k_c = {policy.k_c}, a_gamma = {policy.a_gamma:.4f}, "
          f"b_gamma = {policy.b_gamma:.4f}, a_D = {policy.a_D:.4f}")
    print(f"{'k':>4} {'p_k':>8} {'gamma_k':>10} {'T_k_ms':>8}")
    for k in range(policy.n + 1):
        print(f"{k:>4} {policy.p[k]:>8.4f} {policy.gamma[k]:>10.4f} "
              f"{policy.T[k] * 1e3:>8.3f}")
    return 0


def cmd_analytic(args) -> int:
    cfg = _load_config(args)
    policy, profile = _get_policy(args, cfg)
    if profile is None:
        print("analytic run needs an artifact with the SIC profile section",
              file=sys.stderr)
        return 2
    rep = evaluate(cfg, policy, profile)
    print(dump_config(cfg), end="")
    print(f"b          = {rep.b:.6f}")
    print(f"E[Q]       = {rep.E_Q:.3f} +- std {rep.Std_Q:.3f}")
    print(f"P_s        = {rep.P_s:.4f}")
    print(f"theta      = {rep.theta:.4f} msg/s  (norm {rep.theta_norm:.4f}, "
          f"{rep.theta_bps / 1e3:.2f} kbit/s)")
    print(f"CBR        = {rep.cbr:.4f}")
    print(f"E[D]       = {rep.E_D * 1e3:.3f} ms")
    print(f"E[H]       = {rep.E_H * 1e3:.3f} ms  (zeta {rep.zeta:.4f} 1/s)")
    print(f"E_bar      = {rep.E_bar * 1e3:.4f} mJ/msg")
    print(f"S_inf      = {rep.S_inf * 1e3:.2f} ms  (U_inf {rep.U_inf:.3f})")
    print(f"coverage R = {rep.coverage_R:.1f} m")
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    policy, _ = _get_policy(args, cfg)
    tallies = run_replications(cfg, policy, args.replications,
                               args.horizon, root_seed=cfg.seed)
    sim = estimate_metrics(tallies)
    print(f"replications = {sim.replications}, horizon = {args.horizon} slots")
    for name in ("pdr", "theta", "theta_norm", "cbr", "E_D", "E_H", "E_bar",
                 "E_Q", "Std_Q"):
        est = sim[name]
        print(f"{name:>10} = {est.mean:.6g} +- {est.ci_half:.3g}")
    gap = sum(t.conservation_gap() for t in tallies)
    print(f"conservation gap (all replications): {gap}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    policy, profile = _get_policy(args, cfg)
    if profile is None and args.mode != "simulate":
        print("analytic sweeps need an artifact with the SIC profile section",
              file=sys.stderr)
        return 2
    spec = SweepSpec(S_grid=_s_grid(args), mode=args.mode,
                     replications=args.replications,
                     horizon_slots=args.horizon)
    result = run_sweep(cfg, spec, policy, profile, out_dir=args.out,
                       figures=not args.no_figures)
    print(f"wrote sweep outputs to {args.out}")
    if "comparison" in result.summary:
        frac = result.summary["comparison"]["agreement_fraction"]
        print(f"analytic-vs-simulation agreement: {frac:.1%}")
    return 0


def cmd_compare(args) -> int:
    analytic_rows = _read_csv_rows(Path(args.analytic))
    sim_rows = _read_csv_rows(Path(args.simulated))
    cmp = compare_report(analytic_rows, sim_rows)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.json").write_text(json.dumps(cmp, indent=2) + "\n")
    frac = cmp["agreement_fraction"]
    print(f"{cmp['cells_agreeing']}/{cmp['cells_total']} cells agree "
          f"({frac:.1%}); report at {out / 'comparison.json'}")
    return 0 if frac >= 0.90 else 1


def cmd_accept(args) -> int:
    cfg = _load_config(args)
    ctx = AcceptanceContext(config=cfg, replications=args.replications,
                            horizon_slots=args.horizon)
    results = run_acceptance(ctx, skip_simulation=args.skip_simulation)
    print(format_results(results))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = [{
        "criterion": r.cid, "name": r.name, "passed": r.passed,
        "subchecks": [{"name": s.name, "passed": s.passed,
                       "detail": s.detail} for s in r.subchecks],
    } for r in results]
    (out / "acceptance.json").write_text(json.dumps(payload, indent=2) + "\n")
    return 0 if all(r.passed for r in results) else 1


def _read_csv_rows(path: Path) -> list[dict]:
    lines = [l for l in path.read_text().splitlines()
             if l and not l.startswith("#")]
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        row = {}
        for key, val in zip(header, line.split(",")):
            if key == "mode":
                row[key] = val
            else:
                row[key] = float(val) if val else float("nan")
        rows.append(row)
    return rows


def _add_common(p, with_policy: bool = True):
    p.add_argument("--config", help="config file (flat key = value)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, help="override the RNG seed")
    if with_policy:
        p.add_argument("--policy", help="policy artifact to load instead of building")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sicslot",
        description="Adaptive slotted random access with SIC: model, "
                    "simulator and experiment harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("policy", help="build or inspect the access policy")
    p.add_argument("action", choices=["build", "show"])
    _add_common(p)
    p.set_defaults(func=cmd_policy)

    p = sub.add_parser("analytic", help="run the analytic model at one load")
    p.add_argument("action", choices=["run"])
    _add_common(p)
    p.add_argument("--S", type=float, help="mean generation time (s)")
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("simulate", help="run the simulator at one load")
    p.add_argument("action", choices=["run"])
    _add_common(p)
    p.add_argument("--S", type=float, help="mean generation time (s)")
    p.add_argument("--replications", type=int, default=10)
    p.add_argument("--horizon", type=int, default=100_000,
                   help="slots per replication")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="sweep the load grid")
    _add_common(p)
    p.add_argument("--mode", choices=["analytic", "simulate", "both"],
                   default="analytic")
    p.add_argument("--s-grid", help="comma-separated S values in ms")
    p.add_argument("--s-points", type=int, default=30,
                   help="points on the default log grid")
    p.add_argument("--replications", type=int, default=10)
    p.add_argument("--horizon", type=int, default=100_000)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="compare sweep CSVs "
                                       "(exit 1 on weak agreement)")
    p.add_argument("analytic", help="analytic sweep CSV")
    p.add_argument("simulated", help="simulated sweep CSV")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("accept", help="run the acceptance criteria")
    _add_common(p, with_policy=False)
    p.add_argument("--replications", type=int, default=10)
    p.add_argument("--horizon", type=int, default=100_000)
    p.add_argument("--skip-simulation", action="store_true",
                   help="skip the simulation-backed criteria (4 and 7)")
    p.set_defaults(func=cmd_accept)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
