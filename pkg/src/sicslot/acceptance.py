"""Acceptance suite: the reference-scenario regression criteria.

Each criterion is a function over a shared :class:`AcceptanceContext`, so
expensive artifacts (policy build, simulation sweeps) are computed once.
Every check pins its reference tolerance; the suite reports pass/fail per
criterion and an overall verdict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from itertools import product as iter_product

import numpy as np

from . import analytic as an
from .config import SystemConfig
from .pathloss import coverage_radius
from .policy import AccessPolicy, build_policy, slot_duration
from .sic import sic_decode_count
from .simulator import estimate_metrics, run_replications
from .sweep import SweepSpec, compare_report, default_s_grid, knee_point, run_sweep


@dataclass
class Subcheck:
    name: str
    passed: bool
    detail: str


@dataclass
class CriterionResult:
    cid: int
    name: str
    passed: bool
    subchecks: list[Subcheck] = field(default_factory=list)

    @property
    def detail(self) -> str:
        return "; ".join(f"{s.name}: {s.detail}" for s in self.subchecks)


def _check(name: str, ok: bool, detail: str) -> Subcheck:
    return Subcheck(name=name, passed=bool(ok), detail=detail)


def _within(value: float, target: float, tol: float) -> bool:
    return bool(abs(value - target) <= tol)


class AcceptanceContext:
    """Lazily built shared artifacts for the acceptance criteria."""

    def __init__(self, config: SystemConfig | None = None,
                 replications: int = 10, horizon_slots: int = 100_000,
                 sweep_points: int = 30):
        self.config = config or SystemConfig()
        self.replications = replications
        self.horizon_slots = horizon_slots
        self.sweep_points = sweep_points
        self._policy = None
        self._profile = None
        self._table = None
        self._cov_R = None
        self._analytic_sweep = None
        self._both_sweep = None

    # -- cached artifacts ----------------------------------------------------

    @property
    def policy(self) -> AccessPolicy:
        self._ensure_policy()
        return self._policy

    @property
    def profile(self):
        self._ensure_policy()
        return self._profile

    @property
    def table(self):
        self._ensure_policy()
        return self._table

    def _ensure_policy(self):
        if self._policy is None:
            self._policy, self._profile, self._table = build_policy(self.config)

    @property
    def coverage_R(self) -> float:
        if self._cov_R is None:
            self._cov_R = coverage_radius(self.config)
        return self._cov_R

    def analytic_at(self, S: float) -> an.MetricsReport:
        cfg = self.config.with_rate(1.0 / S)
        return an.evaluate(cfg, self.policy, self.profile,
                           coverage_R=self.coverage_R)

    def simulate_at(self, S: float):
        cfg = self.config.with_rate(1.0 / S)
        tallies = run_replications(cfg, self.policy, self.replications,
                                   self.horizon_slots,
                                   coverage_R=self.coverage_R)
        return estimate_metrics(tallies)

    def analytic_sweep(self):
        if self._analytic_sweep is None:
            spec = SweepSpec(S_grid=default_s_grid(self.sweep_points),
                             mode="analytic")
            self._analytic_sweep = run_sweep(self.config, spec, self.policy,
                                             self.profile)
        return self._analytic_sweep

    def both_sweep(self):
        if self._both_sweep is None:
            spec = SweepSpec(S_grid=default_s_grid(self.sweep_points),
                             mode="both", replications=self.replications,
                             horizon_slots=self.horizon_slots)
            self._both_sweep = run_sweep(self.config, spec, self.policy,
                                         self.profile)
        return self._both_sweep


# ---------------------------------------------------------------------------
# Criteria
# ---------------------------------------------------------------------------

def criterion_policy_fit(ctx: AcceptanceContext) -> CriterionResult:
    pol = ctx.policy
    checks = [
        _check("k_c", pol.k_c == 6, f"fitted {pol.k_c}, target 6 exactly"),
        _check("a_gamma", _within(pol.a_gamma, 0.39, 0.03),
               f"fitted {pol.a_gamma:.4f}, target 0.39 +- 0.03"),
        _check("b_gamma", _within(pol.b_gamma, 0.78, 0.08),
               f"fitted {pol.b_gamma:.4f}, target 0.78 +- 0.08"),
        _check("a_D", _within(pol.a_D, 0.89, 0.03),
               f"fitted {pol.a_D:.4f}, target 0.89 +- 0.03"),
    ]
    return CriterionResult(1, "policy fit constants",
                           all(c.passed for c in checks), checks)


def criterion_slot_time(ctx: AcceptanceContext) -> CriterionResult:
    T1 = slot_duration(ctx.config, ctx.config.gamma_max)
    ok = bool(abs(T1 - 1.8e-3) < 1e-12)
    return CriterionResult(2, "minimum busy slot time", ok, [
        _check("T_1", ok, f"{T1 * 1e3:.6f} ms, target 1.8 ms exactly")])


def criterion_critical_constants(ctx: AcceptanceContext) -> CriterionResult:
    U_inf, _, S_inf = an.critical_rate(ctx.policy, ctx.config)
    checks = [
        _check("U_inf", _within(U_inf, 2.99, 0.10),
               f"{U_inf:.4f} bit/s/Hz, target 2.99 +- 0.10"),
        _check("S_inf", _within(S_inf * 1e3, 67.0, 5.0),
               f"{S_inf * 1e3:.2f} ms, target 67 +- 5 ms"),
    ]
    return CriterionResult(3, "critical-load constants",
                           all(c.passed for c in checks), checks)


def criterion_heavy_traffic(ctx: AcceptanceContext) -> CriterionResult:
    checks = []
    for S in (1e-3, 3e-3, 10e-3):
        rep = ctx.analytic_at(S)
        sim = ctx.simulate_at(S)
        checks.append(_check(
            f"analytic PDR @{S * 1e3:g}ms", _within(rep.P_s, 0.89, 0.02),
            f"{rep.P_s:.4f}, target 0.89 +- 0.02"))
        checks.append(_check(
            f"simulated PDR @{S * 1e3:g}ms",
            _within(sim["pdr"].mean, 0.89, 0.02),
            f"{sim['pdr'].mean:.4f} +- {sim['pdr'].ci_half:.4f}, target 0.89 +- 0.02"))
        checks.append(_check(
            f"analytic CBR @{S * 1e3:g}ms", rep.cbr >= 0.98,
            f"{rep.cbr:.4f}, target >= 0.98"))
        checks.append(_check(
            f"simulated CBR @{S * 1e3:g}ms", sim["cbr"].mean >= 0.98,
            f"{sim['cbr'].mean:.4f}, target >= 0.98"))
        if S == 10e-3:
            checks.append(_check(
                "analytic E[Q] @10ms", _within(rep.E_Q, 25.0, 2.0),
                f"{rep.E_Q:.2f}, target 25 +- 2"))
    return CriterionResult(4, "heavy-traffic plateau (sim)",
                           all(c.passed for c in checks), checks)


def criterion_light_traffic(ctx: AcceptanceContext) -> CriterionResult:
    rep = ctx.analytic_at(1.0)
    ok = bool(_within(rep.theta_norm, 0.90, 0.01))
    return CriterionResult(5, "light-traffic normalized throughput", ok, [
        _check("theta_norm @1000ms", ok,
               f"{rep.theta_norm:.4f}, target 0.90 +- 0.01")])


def criterion_tradeoff_knee(ctx: AcceptanceContext) -> CriterionResult:
    rows = ctx.analytic_sweep().analytic_rows
    knee = knee_point(rows)
    checks = [
        _check("knee S", abs(knee["S_ms"] - 53.0) <= 0.15 * 53.0,
               f"{knee['S_ms']:.1f} ms, target 53 ms +- 15%"),
        _check("knee E[H]", abs(knee["EH_ms"] - 101.0) <= 0.10 * 101.0,
               f"{knee['EH_ms']:.1f} ms, target 101 ms +- 10%"),
        _check("knee E_bar", abs(knee["Ebar_mJ"] - 0.06) <= 0.15 * 0.06,
               f"{knee['Ebar_mJ']:.4f} mJ, target 0.06 mJ +- 15%"),
    ]
    return CriterionResult(6, "AoI/energy trade-off knee",
                           all(c.passed for c in checks), checks)


def criterion_agreement(ctx: AcceptanceContext) -> CriterionResult:
    sweep = ctx.both_sweep()
    cmp = compare_report(sweep.analytic_rows, sweep.sim_rows)
    frac = cmp["agreement_fraction"]
    ok = bool(frac >= 0.90)
    worst = sorted((c for c in cmp["cells"] if not c["agrees"]),
                   key=lambda c: -c["rel_err"])[:3]
    worst_txt = ", ".join(
        f"{c['metric']}@{c['S_ms']:.3g}ms rel_err={c['rel_err']:.1%}"
        for c in worst) or "none"
    return CriterionResult(7, "analytic-vs-simulation agreement (sim)", ok, [
        _check("agreement", ok,
               f"{cmp['cells_agreeing']}/{cmp['cells_total']} cells "
               f"({frac:.1%}), target >= 90%; worst misses: {worst_txt}")])


def _central_diff1(f, h: float) -> float:
    return (f(-h) - f(h)) / (2.0 * h)


def _central_diff2(f, h: float) -> float:
    return (f(h) - 2.0 * f(0.0) + f(-h)) / h ** 2


def _brute_force_sic(snrs, gamma) -> int:
    """Largest decodable prefix, each prefix re-checked from scratch.

    Exact rational arithmetic; no sequential state, so it cannot share a
    bug with the production early-exit loop.
    """
    best = 0
    for ell in range(1, len(snrs) + 1):
        if all(Fraction(snrs[j]) >= Fraction(gamma)
               * (1 + sum(Fraction(s) for s in snrs[j + 1:]))
               for j in range(ell)):
            best = ell
    return best


def criterion_properties(ctx: AcceptanceContext) -> CriterionResult:
    checks = []
    policy = ctx.policy
    cfg = ctx.config

    # transform normalization + finite-difference moment consistency
    fd_ok = True
    fd_detail = []
    norm_ok = True
    for S in (1e-3, 0.1, 1.0):
        lam = 1.0 / S
        backlog = an.solve_backlog_fixed_point(policy, lam, cfg.n)
        moments = an.transforms(backlog, policy, lam)
        for name, phi in (("X", moments.phi_X), ("Xp", moments.phi_Xp),
                          ("C", moments.phi_C), ("R", moments.phi_R),
                          ("V", moments.phi_V), ("Y", moments.phi_Y)):
            norm_ok &= abs(phi(0.0) - 1.0) < 1e-12
        norm_ok &= abs(backlog.q.sum() - 1.0) < 1e-12
        norm_ok &= abs(backlog.w.sum() - 1.0) < 1e-12
        pairs = [
            ("E[C]", moments.E_C, _central_diff1(moments.phi_C, 1e-3 / moments.E_C)),
            ("E[C2]", moments.E_C2, _central_diff2(moments.phi_C, 1e-3 / moments.E_C)),
            ("E[R]", moments.E_R, _central_diff1(moments.phi_R, 1e-3 / moments.E_R)),
            ("E[R2]", moments.E_R2, _central_diff2(moments.phi_R, 1e-3 / moments.E_R)),
            ("E[V]", moments.E_V, _central_diff1(moments.phi_V, 1e-3 / moments.E_V)),
        ]
        for name, closed, fd in pairs:
            rel = abs(fd - closed) / abs(closed)
            if rel > 1e-5:
                fd_ok = False
                fd_detail.append(f"{name}@S={S:g}: rel {rel:.2e}")
        # composition identity
        fd_ok &= abs(moments.E_Y - (moments.E_C + moments.E_R)) < 1e-12 * moments.E_Y
    checks.append(_check("transform normalization", norm_ok,
                         "phi(0)=1, pmfs sum to 1 @1e-12"))
    checks.append(_check("finite-difference moments", fd_ok,
                         "tol 1e-5" + ("; " + ", ".join(fd_detail) if fd_detail else "")))

    # fixed point residual and uniqueness scan
    resid_ok = True
    sign_ok = True
    for S in (1e-3, 0.1, 1.0):
        lam = 1.0 / S
        backlog = an.solve_backlog_fixed_point(policy, lam, cfg.n)
        T_idle = policy.T[:cfg.n]
        p_shift = policy.p[1:cfg.n + 1]

        def fmap(b):
            q = an.backlog_pdf(b, cfg.n, tagged_excluded=True)
            omx = float(np.dot(q, -np.expm1(-lam * T_idle)))
            return 1.0 / (1.0 + float(np.dot(q, p_shift)) / omx)

        resid_ok &= abs(fmap(backlog.b) - backlog.b) < 1e-10
        grid = np.linspace(1e-6, 1 - 1e-6, 10_000)
        g = np.array([fmap(b) - b for b in grid])
        sign_ok &= int(np.sum(np.diff(np.sign(g)) != 0)) == 1
    checks.append(_check("fixed-point residual", resid_ok, "|F(b)-b| < 1e-10"))
    checks.append(_check("fixed-point uniqueness", sign_ok,
                         "single sign change on 1e4-point grid"))

    # heavy/light traffic limits of b
    b_light = an.solve_backlog_fixed_point(policy, 1e-6, cfg.n).b
    heavy = an.solve_backlog_fixed_point(policy, 1e6, cfg.n)
    ceiling = 1.0 / (1.0 + heavy.p_bar_prime)
    limits_ok = b_light < 1e-3 and abs(heavy.b - ceiling) < 1e-3
    checks.append(_check("b limits", limits_ok,
                         f"light b={b_light:.2e} (<1e-3), heavy |b-ceiling|="
                         f"{abs(heavy.b - ceiling):.2e} (<1e-3)"))

    # power-control normalization of the SIC profile
    prof = ctx.profile
    dev = np.abs(prof.mh[1] - (1.0 - cfg.epsilon))
    band = 3.0 * np.maximum(prof.stderr[1], 1e-12)
    m1_ok = bool(np.all(dev <= band))
    checks.append(_check("m_1 = 1-epsilon", m1_ok,
                         f"max dev {dev.max():.2e} vs 3*stderr"))

    # SIC decoder vs brute force on enumerated rational triples
    grid_vals = [Fraction(i, 4) for i in range(0, 13)]
    gammas = [Fraction(1, 2), Fraction(1, 1), Fraction(2, 1)]
    sic_ok = True
    for a, b, c in iter_product(grid_vals, repeat=3):
        if not (a >= b >= c):
            continue
        for gam in gammas:
            got = sic_decode_count(np.array([a, b, c], dtype=float), float(gam))
            want = _brute_force_sic([a, b, c], gam)
            if got != want:
                sic_ok = False
    checks.append(_check("SIC brute-force oracle", sic_ok,
                         "exhaustive quarter-grid triples, 3 thresholds"))
    return CriterionResult(8, "property suites",
                           all(c.passed for c in checks), checks)


def criterion_coverage(ctx: AcceptanceContext) -> CriterionResult:
    cfg = ctx.config
    R = ctx.coverage_R
    r16 = coverage_radius(replace(cfg, P_tx_max=cfg.P_tx_max * 16.0), tol=1e-4)
    base = coverage_radius(cfg, tol=1e-4)
    ratio_p = r16 / base
    r_half_gamma = coverage_radius(replace(cfg, gamma_max=cfg.gamma_max / 2.0),
                                   tol=1e-4)
    ratio_g = r_half_gamma / base
    checks = [
        _check("x16 power -> x2 radius", abs(ratio_p / 2.0 - 1.0) <= 1e-3,
               f"ratio {ratio_p:.5f}, target 2 +- 1e-3 rel"),
        _check("gamma_max/2 -> 2^(1/4) radius",
               abs(ratio_g / 2 ** 0.25 - 1.0) <= 1e-3,
               f"ratio {ratio_g:.5f}, target {2 ** 0.25:.5f} +- 1e-3 rel"),
        _check("reported radius", True,
               f"R = {R:.1f} m under the plain d^-4 two-ray default; the "
               "876 m reference value needs calibrated path-loss constants "
               "(path_gain_scale)"),
    ]
    return CriterionResult(9, "coverage-radius scaling",
                           all(c.passed for c in checks), checks)


CRITERIA = [
    criterion_policy_fit,
    criterion_slot_time,
    criterion_critical_constants,
    criterion_heavy_traffic,
    criterion_light_traffic,
    criterion_tradeoff_knee,
    criterion_agreement,
    criterion_properties,
    criterion_coverage,
]


def run_acceptance(ctx: AcceptanceContext | None = None,
                   skip_simulation: bool = False) -> list[CriterionResult]:
    """Run every criterion; simulation-backed ones can be skipped for speed."""
    ctx = ctx or AcceptanceContext()
    results = []
    for crit in CRITERIA:
        if skip_simulation and crit in (criterion_heavy_traffic,
                                        criterion_agreement):
            continue
        results.append(crit(ctx))
    return results


def format_results(results: list[CriterionResult]) -> str:
    lines = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"[{status}] criterion {r.cid}: {r.name}")
        for s in r.subchecks:
            mark = "ok " if s.passed else "FAIL"
            lines.append(f"    {mark} {s.name}: {s.detail}")
    n_pass = sum(r.passed for r in results)
    lines.append(f"{n_pass}/{len(results)} criteria passed")
    return "\n".join(lines)
