import math
from dataclasses import replace

import numpy as np
import pytest

from sicslot import analytic as an
from sicslot.config import SystemConfig
from sicslot.policy import AccessPolicy, slot_duration
from sicslot.sic import SicProfile


def _frozen(config, p, gamma, T=None):
    return AccessPolicy.frozen(config, p=p, gamma=gamma, T=T)


# ---------------------------------------------------------------------------
# backlog pmf
# ---------------------------------------------------------------------------

def test_symmetric_binomial():
    pmf = an.backlog_pdf(0.5, 3, tagged_excluded=True)
    assert pmf == pytest.approx([0.25, 0.5, 0.25], abs=1e-15)


def test_zero_backlog_is_point_mass():
    for excluded in (True, False):
        pmf = an.backlog_pdf(0.0, 7, tagged_excluded=excluded)
        assert pmf[0] == 1.0
        assert pmf[1:].sum() == 0.0


def test_full_backlog_is_point_mass_at_top():
    pmf = an.backlog_pdf(1.0, 7, tagged_excluded=False)
    assert pmf[-1] == 1.0


def test_backlog_pdf_matches_bernoulli_convolution_oracle():
    # direct convolution of 50 Bernoulli(0.3) factors
    b, n = 0.3, 50
    pmf = np.array([1.0])
    for _ in range(n):
        nxt = np.zeros(pmf.size + 1)
        nxt[:-1] += pmf * (1 - b)
        nxt[1:] += pmf * b
        pmf = nxt
    got = an.backlog_pdf(b, n, tagged_excluded=False)
    assert np.max(np.abs(got - pmf)) < 1e-12


def test_backlog_pdf_validates():
    with pytest.raises(ValueError):
        an.backlog_pdf(1.5, 3, True)
    with pytest.raises(ValueError):
        an.backlog_pdf(0.5, 0, True)


# ---------------------------------------------------------------------------
# slot transforms
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def mid_load_state(full_policy_module, table_config_module):
    cfg = table_config_module
    lam = 1.0 / 0.05
    backlog = an.solve_backlog_fixed_point(full_policy_module, lam, cfg.n)
    moments = an.transforms(backlog, full_policy_module, lam)
    return cfg, lam, backlog, moments


@pytest.fixture(scope="session")
def table_config_module(table_config):
    return table_config


@pytest.fixture(scope="session")
def full_policy_module(full_policy):
    return full_policy


def test_phi_slot_normalized_at_zero(mid_load_state, full_policy_module):
    _, _, backlog, _ = mid_load_state
    for flag in (True, False):
        assert an.phi_slot(0.0, backlog, full_policy_module, flag) == \
            pytest.approx(1.0, abs=1e-12)


def test_phi_slot_single_atom_case(table_config):
    cfg = replace(table_config, n=1)
    pol = _frozen(cfg, p=1.0, gamma=2.0, T=cfg.T_oh)
    backlog = an.BacklogModel(b=0.0, q=np.array([1.0]), w=np.array([1.0, 0.0]),
                              p_bar_prime=1.0, T_bar_prime=cfg.T_oh)
    lam = 10.0
    got = an.phi_slot(lam, backlog, pol, tagged_backlogged=False)
    assert got == pytest.approx(math.exp(-lam * cfg.T_oh), rel=1e-12)


def test_phi_slot_derivative_matches_finite_difference(mid_load_state,
                                                       full_policy_module):
    cfg, _, backlog, _ = mid_load_state
    pol = full_policy_module
    h = 1e-6 / np.max(pol.T)
    fd = (an.phi_slot(h, backlog, pol, False)
          - an.phi_slot(-h, backlog, pol, False)) / (2 * h)
    expected = -float(np.dot(backlog.q, pol.T[:cfg.n]))
    assert fd == pytest.approx(expected, rel=1e-6)


def test_transform_vectorized_matches_scalar(mid_load_state):
    _, _, _, moments = mid_load_state
    s = np.array([0.0, 0.5, 5.0, 50.0])
    for phi in (moments.phi_X, moments.phi_C, moments.phi_R, moments.phi_V,
                moments.phi_Y):
        vec = phi(s)
        assert vec == pytest.approx([phi(float(v)) for v in s], rel=1e-12)


# ---------------------------------------------------------------------------
# fixed point
# ---------------------------------------------------------------------------

def test_light_traffic_backlog_vanishes(full_policy, table_config):
    model = an.solve_backlog_fixed_point(full_policy, 1e-6, table_config.n)
    assert model.b < 1e-3


def test_heavy_traffic_backlog_ceiling(full_policy, table_config):
    model = an.solve_backlog_fixed_point(full_policy, 1e6, table_config.n)
    assert abs(model.b - 1.0 / (1.0 + model.p_bar_prime)) < 1e-3


def test_backlog_at_reference_heavy_point(full_policy, table_config):
    model = an.solve_backlog_fixed_point(full_policy, 100.0, table_config.n)
    assert model.b * table_config.n == pytest.approx(25.0, abs=2.0)


def test_fixed_point_residual_small(full_policy, table_config):
    cfg = table_config
    for lam in (1.0, 20.0, 1000.0):
        model = an.solve_backlog_fixed_point(full_policy, lam, cfg.n)
        q = an.backlog_pdf(model.b, cfg.n, tagged_excluded=True)
        omx = float(np.dot(q, -np.expm1(-lam * full_policy.T[:cfg.n])))
        pbar = float(np.dot(q, full_policy.p[1:cfg.n + 1]))
        residual = 1.0 / (1.0 + pbar / omx) - model.b
        assert abs(residual) < 1e-10


def test_fixed_point_map_crosses_once(full_policy, table_config):
    cfg = table_config
    lam = 10.0
    T_idle = full_policy.T[:cfg.n]
    p_shift = full_policy.p[1:cfg.n + 1]
    grid = np.linspace(1e-6, 1 - 1e-6, 10_000)
    g = np.empty(grid.size)
    for i, b in enumerate(grid):
        q = an.backlog_pdf(b, cfg.n, tagged_excluded=True)
        omx = float(np.dot(q, -np.expm1(-lam * T_idle)))
        g[i] = 1.0 / (1.0 + float(np.dot(q, p_shift)) / omx) - b
    assert int(np.sum(np.diff(np.sign(g)) != 0)) == 1


def test_pmfs_normalized(mid_load_state):
    _, _, backlog, _ = mid_load_state
    assert backlog.q.sum() == pytest.approx(1.0, abs=1e-12)
    assert backlog.w.sum() == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# contention / idle moments against single-atom closed forms
# ---------------------------------------------------------------------------

def _single_atom_state(cfg, p, T, lam):
    pol = _frozen(cfg, p=p, gamma=1.0, T=T)
    backlog = an.solve_backlog_fixed_point(pol, lam, cfg.n)
    moments = an.transforms(backlog, pol, lam)
    return pol, backlog, moments


def test_single_atom_contention_moments(table_config):
    # frozen k-independent tables: C is geometric over slots of length T
    T, p, lam = 2e-3, 0.25, 5.0
    _, backlog, moments = _single_atom_state(table_config, p, T, lam)
    assert moments.E_C == pytest.approx(T / p, rel=1e-12)
    assert moments.E_C2 == pytest.approx(T * T * (2 - p) / p ** 2, rel=1e-12)


def test_transmit_immediately_reduces_to_slot_law(table_config):
    T, lam = 2e-3, 5.0
    _, backlog, moments = _single_atom_state(table_config, 1.0, T, lam)
    assert moments.E_C == pytest.approx(moments.E_Xp, rel=1e-12)
    s = np.linspace(0.0, 200.0, 7)
    assert moments.phi_C(s) == pytest.approx(moments.phi_Xp(s), rel=1e-12)


def test_single_atom_idle_moments_match_geometric_oracle(table_config):
    T, lam = 2e-3, 5.0
    _, backlog, moments = _single_atom_state(table_config, 0.5, T, lam)
    # N slots to the first arrival is geometric with success 1 - e^{-lam T}
    succ = -math.expm1(-lam * T)
    assert moments.E_R == pytest.approx(T / succ, rel=1e-12)
    assert moments.E_N == pytest.approx(1.0 / succ, rel=1e-12)
    # second moment from the geometric sum: E[(NT)^2] = T^2 (2-s)/s^2
    assert moments.E_R2 == pytest.approx(T * T * (2 - succ) / succ ** 2, rel=1e-12)


def test_idle_time_saturates_at_one_slot_for_fast_arrivals(table_config):
    T = 2e-3
    _, _, moments = _single_atom_state(table_config, 0.5, T, 1e6)
    assert moments.E_R == pytest.approx(T, rel=1e-6)


def test_moment_transform_consistency(mid_load_state):
    _, _, _, m = mid_load_state
    checks = [
        (m.E_C, m.phi_C, 1), (m.E_C2, m.phi_C, 2),
        (m.E_R, m.phi_R, 1), (m.E_R2, m.phi_R, 2),
        (m.E_V, m.phi_V, 1),
    ]
    for closed, phi, order in checks:
        h = 1e-3 / (m.E_C if phi is m.phi_C else m.E_R if phi is m.phi_R
                    else m.E_V)
        if order == 1:
            fd = (phi(-h) - phi(h)) / (2 * h)
        else:
            fd = (phi(h) - 2.0 * phi(0.0) + phi(-h)) / h ** 2
        assert fd == pytest.approx(closed, rel=1e-5)


def test_interdeparture_is_sum_of_pieces(mid_load_state):
    _, _, _, m = mid_load_state
    assert m.E_Y == pytest.approx(m.E_C + m.E_R, rel=1e-14)
    assert m.E_Y2 == pytest.approx(m.E_C2 + 2 * m.E_C * m.E_R + m.E_R2, rel=1e-14)
    s = np.array([0.0, 1.0, 10.0, 300.0])
    assert m.phi_Y(s) == pytest.approx(m.phi_C(s) * m.phi_R(s), rel=1e-12)


def test_contention_requires_transmission(table_config):
    pol = _frozen(table_config, p=0.0, gamma=1.0)
    backlog = an.BacklogModel(
        b=0.5, q=an.backlog_pdf(0.5, table_config.n, True),
        w=an.backlog_pdf(0.5, table_config.n, False),
        p_bar_prime=0.0, T_bar_prime=1.0)
    with pytest.raises(an.ModelError):
        an.contention_moments(backlog, pol, 1.0)


# ---------------------------------------------------------------------------
# access delay
# ---------------------------------------------------------------------------

def test_phi_v_normalized(mid_load_state):
    _, _, _, m = mid_load_state
    assert m.phi_V(0.0) == pytest.approx(1.0, abs=1e-12)


def test_last_arrival_residual_vanishes_under_heavy_load(table_config):
    # lam*T >> 1: the last arrival lands just before the slot ends
    T = 2e-3
    lam = 1e5
    _, _, m = _single_atom_state(table_config, 0.5, T, lam)
    expected = 1.0 / lam - T * math.exp(-lam * T) / -math.expm1(-lam * T)
    assert m.E_V == pytest.approx(expected, rel=1e-9)
    assert m.E_V == pytest.approx(1.0 / lam, rel=1e-3)


def test_mean_delay_is_contention_plus_residual(mid_load_state,
                                                full_policy_module):
    _, lam, backlog, m = mid_load_state
    _, E_D = an.access_delay(backlog, full_policy_module, lam)
    assert E_D == pytest.approx(m.E_C + m.E_V, rel=1e-12)


def test_residual_nonnegative_across_sweep(full_policy, table_config):
    for S in np.geomspace(1e-3, 1.0, 12):
        lam = 1.0 / S
        backlog = an.solve_backlog_fixed_point(full_policy, lam, table_config.n)
        m = an.transforms(backlog, full_policy, lam)
        assert m.E_V >= 0.0
        assert m.E_Vp >= 0.0


def test_time_reversibility_identity(full_policy, table_config):
    # E[V] + E[V'] equals the mean of the arrival-conditioned slot length
    cfg = table_config
    for S in np.geomspace(1e-3, 1.0, 8):
        lam = 1.0 / S
        backlog = an.solve_backlog_fixed_point(full_policy, lam, cfg.n)
        m = an.transforms(backlog, full_policy, lam)
        T = full_policy.T[:cfg.n]
        omx = float(np.dot(backlog.q, -np.expm1(-lam * T)))
        e_xhat = float(np.dot(backlog.q, T * -np.expm1(-lam * T))) / omx
        assert m.E_V + m.E_Vp == pytest.approx(e_xhat, rel=1e-10)


# ---------------------------------------------------------------------------
# success probability, throughput, CBR
# ---------------------------------------------------------------------------

def _point_mass_backlog(n, k):
    w = np.zeros(n + 1)
    w[k] = 1.0
    q = np.zeros(n)
    q[min(k, n - 1)] = 1.0
    return an.BacklogModel(b=k / n, q=q, w=w, p_bar_prime=1.0, T_bar_prime=1.0)


def test_single_node_success_is_power_control_target(full_profile):
    cfg = SystemConfig(n=1)
    pol = AccessPolicy.from_constants(cfg, k_c=6, a_gamma=0.39, b_gamma=0.78)
    backlog = an.solve_backlog_fixed_point(pol, 100.0, 1)
    ps = an.success_probability(backlog, pol, full_profile)
    assert ps == pytest.approx(0.9, abs=2e-3)


def test_point_mass_success_reduces_to_mean_decoded_fraction(full_profile,
                                                             table_config):
    pol = AccessPolicy.from_constants(table_config, k_c=6, a_gamma=0.39,
                                      b_gamma=0.78)
    k = 20
    backlog = _point_mass_backlog(table_config.n, k)
    ps = an.success_probability(backlog, pol, full_profile)
    expected = full_profile.mh_at(k, pol.gamma[k]) / k
    assert ps == pytest.approx(expected, rel=1e-12)


def test_success_requires_some_transmitters(full_profile, table_config):
    pol = AccessPolicy.from_constants(table_config, k_c=6, a_gamma=0.39,
                                      b_gamma=0.78)
    backlog = _point_mass_backlog(table_config.n, 0)
    with pytest.raises(an.ModelError):
        an.success_probability(backlog, pol, full_profile)


def test_throughput_identities():
    theta, theta_norm, theta_bps = an.throughput(0.9, 1.0, 2.0, 4000.0)
    assert theta == pytest.approx(0.9)
    assert theta_norm == pytest.approx(0.45)
    assert theta_bps == pytest.approx(3600.0)
    with pytest.raises(ValueError):
        an.throughput(0.9, 0.0, 2.0, 4000.0)


def test_throughput_normalized_bounded_over_sweep(ctx):
    for S in np.geomspace(1e-3, 1.0, 10):
        rep = ctx.analytic_at(S)
        assert 0.0 <= rep.theta_norm <= 1.0 - ctx.config.epsilon + 0.01


def test_cbr_zero_when_nobody_backlogged(full_policy, table_config):
    backlog = _point_mass_backlog(table_config.n, 0)
    assert an.channel_busy_ratio(backlog, full_policy) == 0.0


def test_cbr_certain_transmitters_reduction(table_config):
    # p = 1 everywhere: only the empty slot is quiet
    pol = _frozen(table_config, p=1.0, gamma=2.0)
    b = 0.2
    backlog = an.BacklogModel(
        b=b, q=an.backlog_pdf(b, table_config.n, True),
        w=an.backlog_pdf(b, table_config.n, False),
        p_bar_prime=1.0, T_bar_prime=float(pol.T[1]))
    w0 = backlog.w[0]
    denom = float(np.dot(backlog.w, pol.T))
    assert an.channel_busy_ratio(backlog, pol) == \
        pytest.approx(1.0 - w0 * pol.T[0] / denom, rel=1e-12)


def test_cbr_saturates_under_heavy_load(ctx):
    rep = ctx.analytic_at(1e-3)
    assert rep.cbr == pytest.approx(1.0, abs=0.02)


# ---------------------------------------------------------------------------
# AoI
# ---------------------------------------------------------------------------

def _deterministic_y(T):
    def phi(s):
        arr = np.exp(-np.asarray(s, dtype=float) * T)
        return float(arr) if arr.ndim == 0 else arr
    return phi


def test_aoi_deterministic_cycle_no_losses():
    T = 0.5
    E_H, zeta, ccdf = an.aoi_metrics(_deterministic_y(T), E_D=0.2, E_Y=T,
                                     E_Y2=T * T, P_s=1.0, min_T=T, lam=1.0)
    assert E_H == pytest.approx(0.2 + T / 2)
    assert math.isinf(zeta)
    assert ccdf(E_H - 0.01) == 1.0
    assert ccdf(E_H + 0.01) == 0.0


def test_aoi_deterministic_cycle_with_losses():
    T, Ps = 0.5, 0.7
    E_H, zeta, ccdf = an.aoi_metrics(_deterministic_y(T), E_D=0.2, E_Y=T,
                                     E_Y2=T * T, P_s=Ps, min_T=T, lam=100.0)
    # e^{zeta T} = 1/(1-Ps) has the closed-form root
    assert zeta == pytest.approx(-math.log(1 - Ps) / T, rel=1e-9)
    assert E_H == pytest.approx(0.2 + T / 2 + T * (1 / Ps - 1))
    assert ccdf(E_H) == pytest.approx(math.exp(-1.0))
    assert ccdf(-1.0) == 1.0


def test_aoi_reference_point(ctx):
    rep = ctx.analytic_at(0.053)
    assert rep.E_H * 1e3 == pytest.approx(101.0, rel=0.10)


def test_aoi_tail_rate_positive_and_finite_midsweep(ctx, full_policy):
    rep = ctx.analytic_at(0.1)
    assert 0.0 < rep.zeta < math.inf


def test_aoi_minimum_sits_in_heavy_traffic(ctx):
    rows = ctx.analytic_sweep().analytic_rows
    eh = np.array([r["EH_ms"] for r in rows])
    s = np.array([r["S_ms"] for r in rows])
    s_inf = ctx.analytic_sweep().summary["S_inf_ms"]
    assert s[int(np.argmin(eh))] <= s_inf
    light = eh[s >= s_inf]
    assert np.all(np.diff(light) > 0)


def test_monotone_metrics_over_sweep(ctx):
    rows = ctx.analytic_sweep().analytic_rows
    cbr = [r["cbr"] for r in rows]
    eq = [r["EQ"] for r in rows]
    assert np.all(np.diff(cbr) <= 1e-12)
    assert np.all(np.diff(eq) <= 1e-12)


def test_delivery_notch_exists(ctx):
    # classic slotted-ALOHA dip between the SIC plateau and the clean
    # light-traffic limit
    rows = ctx.analytic_sweep().analytic_rows
    ps = np.array([r["P_s"] for r in rows])
    assert ps.min() < ps[0] - 0.05
    assert ps.min() < ps[-1] - 0.05
    assert ps[0] > 0.75 and ps[-1] > 0.85


# ---------------------------------------------------------------------------
# energy
# ---------------------------------------------------------------------------

def test_energy_reduces_to_transmit_only(monkeypatch, full_policy,
                                         full_profile, table_config):
    g_const = 1e-9
    monkeypatch.setattr("sicslot.analytic.mean_inverse_gain",
                        lambda cfg, R: 1.0 / g_const)
    cfg = replace(table_config, E_g=0.0, P_a=0.0, P_d=0.0)
    lam = 20.0
    backlog = an.solve_backlog_fixed_point(full_policy, lam, cfg.n)
    m = an.transforms(backlog, full_policy, lam)
    ps = an.success_probability(backlog, full_policy, full_profile)
    E_tx, E_d, E_bar = an.energy_per_delivered(backlog, full_policy, lam, cfg,
                                               coverage_R=700.0, moments=m,
                                               P_s=ps)
    ptx = cfg.P_N * full_policy.gamma[1:cfg.n + 1] / (cfg.c * g_const)
    expected_tx = float(np.dot(backlog.q, ptx * full_policy.T[1:cfg.n + 1]))
    assert E_tx == pytest.approx(expected_tx, rel=1e-12)
    assert E_d == pytest.approx(E_tx, rel=1e-12)
    assert E_bar == pytest.approx(E_tx / ps, rel=1e-12)


def test_energy_reference_point(ctx):
    rep = ctx.analytic_at(0.053)
    assert rep.E_bar * 1e3 == pytest.approx(0.06, rel=0.20)


def test_critical_rate_identity(table_config):
    pol = AccessPolicy.from_constants(table_config, k_c=6,
                                      a_gamma=0.4, b_gamma=0.8,
                                      a_D=0.4 * math.log(2.0))
    U_inf, lam_inf, S_inf = an.critical_rate(pol, table_config)
    assert U_inf == pytest.approx(1.0, rel=1e-12)
    assert lam_inf == pytest.approx(table_config.W / (table_config.n * table_config.L))
    assert S_inf == pytest.approx(1.0 / lam_inf)


def test_critical_rate_reference_values(ctx):
    rep = ctx.analytic_at(0.05)
    assert rep.U_inf == pytest.approx(3.0, abs=0.15)
    assert rep.S_inf == pytest.approx(0.065, abs=0.007)
