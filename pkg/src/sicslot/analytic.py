"""Mean-field analytic model: backlog fixed point, transforms, metrics.

A tagged node alternates between idle stretches (R: whole slots until a
message arrives) and busy stretches (C: slots spent backlogged through the
end of its transmission).  Treating the other nodes' backlog states as
i.i.d. Bernoulli(b) makes slot lengths i.i.d. and everything tractable
through Laplace transforms of the slot-time law.  The backlogged
probability b solves a scalar fixed-point equation with a unique root,
found here by bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaln
from scipy.stats import binom as binom_dist

from .config import SystemConfig
from .pathloss import coverage_radius, mean_inverse_gain
from .policy import AccessPolicy
from .sic import SicProfile


class ModelError(RuntimeError):
    """Raised when the model equations cannot be satisfied numerically."""


# ---------------------------------------------------------------------------
# Backlog distribution and fixed point
# ---------------------------------------------------------------------------

def backlog_pdf(b: float, n: int, tagged_excluded: bool) -> np.ndarray:
    """Binomial backlog pmf over {0..n-1} (tagged excluded) or {0..n}.

    Log-space evaluation keeps the tails sane up to n ~ 1e4.
    """
    if not 0.0 <= b <= 1.0:
        raise ValueError(f"b must be in [0, 1], got {b}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    m = n - 1 if tagged_excluded else n
    ks = np.arange(m + 1)
    if b == 0.0:
        pmf = np.zeros(m + 1)
        pmf[0] = 1.0
        return pmf
    if b == 1.0:
        pmf = np.zeros(m + 1)
        pmf[-1] = 1.0
        return pmf
    log_pmf = (gammaln(m + 1) - gammaln(ks + 1) - gammaln(m - ks + 1)
               + ks * math.log(b) + (m - ks) * math.log1p(-b))
    return np.exp(log_pmf)


@dataclass(frozen=True)
class BacklogModel:
    """Solved mean-field backlog state for one (policy, lambda) pair."""

    b: float
    q: np.ndarray            # tagged-excluded pmf over k = 0..n-1
    w: np.ndarray            # all-node pmf over k = 0..n
    p_bar_prime: float       # sum q_k p_{k+1}
    T_bar_prime: float       # sum q_k T_{k+1} (s)


def _one_minus_phi_x(lam: float, q: np.ndarray, T_idle: np.ndarray) -> float:
    # 1 - sum q_k e^{-lam T_k} without cancellation at small lam
    return float(np.dot(q, -np.expm1(-lam * T_idle)))


def solve_backlog_fixed_point(policy: AccessPolicy, lam: float, n: int,
                              tol: float = 1e-12) -> BacklogModel:
    """Unique root of b = 1 / (1 + p_bar' / (1 - phi_X(lambda))).

    Bisection on F(b) - b over (0, 1); the map is continuous with exactly
    one crossing, so bracketing is robust even where iteration would not
    contract.
    """
    if not lam > 0:
        raise ValueError(f"lam must be > 0, got {lam}")
    T_idle = policy.T[:n]        # slot lengths seen by an idle tagged node
    p_shift = policy.p[1:n + 1]  # transmit probs with the tagged node added

    def fixed_point_map(b: float) -> float:
        q = backlog_pdf(b, n, tagged_excluded=True)
        omx = _one_minus_phi_x(lam, q, T_idle)
        pbar = float(np.dot(q, p_shift))
        if omx <= 0.0:
            return 0.0
        return 1.0 / (1.0 + pbar / omx)

    lo, hi = 1e-15, 1.0 - 1e-15
    g_lo = fixed_point_map(lo) - lo
    g_hi = fixed_point_map(hi) - hi
    if not (g_lo > 0 and g_hi < 0):
        raise ModelError(
            f"fixed-point bracket failed: g({lo})={g_lo:.3g}, g({hi})={g_hi:.3g}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g_mid = fixed_point_map(mid) - mid
        if g_mid > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16 and abs(g_mid) < tol:
            break
    b = 0.5 * (lo + hi)
    if abs(fixed_point_map(b) - b) > max(tol, 1e-10):
        raise ModelError(f"fixed-point residual too large at b={b}")
    q = backlog_pdf(b, n, tagged_excluded=True)
    w = backlog_pdf(b, n, tagged_excluded=False)
    return BacklogModel(
        b=b, q=q, w=w,
        p_bar_prime=float(np.dot(q, p_shift)),
        T_bar_prime=float(np.dot(q, policy.T[1:n + 1])))


# ---------------------------------------------------------------------------
# Slot-time transforms and moments
# ---------------------------------------------------------------------------

def _scalar_or_array(f: Callable[[np.ndarray], np.ndarray]) -> Callable:
    """Lift an array-in/array-out transform to accept scalars too."""
    def wrapped(s):
        scalar = np.asarray(s).ndim == 0
        out = f(np.atleast_1d(np.asarray(s, dtype=float)))
        return float(out[0]) if scalar else out
    return wrapped


def phi_slot(s, backlog: BacklogModel, policy: AccessPolicy,
             tagged_backlogged: bool):
    """Laplace transform of the slot-time law seen by the tagged node.

    Idle tagged node: sum q_k e^{-s T_k}; backlogged tagged node shifts the
    table by one because the tagged node itself counts.
    """
    n = backlog.q.size
    T = policy.T[1:n + 1] if tagged_backlogged else policy.T[:n]

    @_scalar_or_array
    def phi(s_arr):
        return np.exp(-np.multiply.outer(s_arr, T)) @ backlog.q

    return phi(s)


@dataclass(frozen=True)
class LtMoments:
    """Means, second moments and transforms of the renewal-cycle pieces.

    X / X': slot time with the tagged node idle / backlogged; C: busy
    stretch; R: idle stretch; V / V': end-of-slot residual after the last /
    first arrival of the activating slot; Y = C + R: inter-departure time;
    N and M: slot counts inside R and C (geometric).
    """

    E_X: float
    E_X2: float
    E_Xp: float
    E_Xp2: float
    E_C: float
    E_C2: float
    E_R: float
    E_R2: float
    E_V: float
    E_Vp: float
    E_Y: float
    E_Y2: float
    E_N: float
    E_M: float
    phi_X: Callable
    phi_Xp: Callable
    phi_C: Callable
    phi_R: Callable
    phi_V: Callable
    phi_Y: Callable


def transforms(backlog: BacklogModel, policy: AccessPolicy, lam: float) -> LtMoments:
    """All cycle transforms and closed-form moments for a solved backlog."""
    n = backlog.q.size
    q = backlog.q
    T_idle = policy.T[:n]
    T_busy = policy.T[1:n + 1]
    p_busy = policy.p[1:n + 1]

    E_X = float(np.dot(q, T_idle))
    E_X2 = float(np.dot(q, T_idle ** 2))
    E_Xp = backlog.T_bar_prime
    E_Xp2 = float(np.dot(q, T_busy ** 2))
    pbar = backlog.p_bar_prime
    omx = _one_minus_phi_x(lam, q, T_idle)
    dphi_x_lam = float(np.dot(q, -T_idle * np.exp(-lam * T_idle)))

    def _phi_x_arr(s_arr: np.ndarray) -> np.ndarray:
        return np.exp(-np.multiply.outer(s_arr, T_idle)) @ q

    @_scalar_or_array
    def phi_X(s_arr):
        return _phi_x_arr(s_arr)

    @_scalar_or_array
    def phi_Xp(s_arr):
        return np.exp(-np.multiply.outer(s_arr, T_busy)) @ q

    def _phi_c_arr(s_arr: np.ndarray) -> np.ndarray:
        ex = np.exp(-np.multiply.outer(s_arr, T_busy))
        num = ex @ (q * p_busy)
        den = 1.0 - ex @ (q * (1.0 - p_busy))
        # den <= 0 marks divergence of E[e^{-sC}] along the negative axis
        return np.where(den > 0.0, num / np.where(den > 0, den, 1.0), np.inf)

    @_scalar_or_array
    def phi_C(s_arr):
        return _phi_c_arr(s_arr)

    def _phi_r_arr(s_arr: np.ndarray) -> np.ndarray:
        shifted = _phi_x_arr(s_arr + lam)
        den = 1.0 - shifted
        num = _phi_x_arr(s_arr) - shifted
        return np.where(den > 0.0, num / np.where(den > 0, den, 1.0), np.inf)

    @_scalar_or_array
    def phi_R(s_arr):
        return _phi_r_arr(s_arr)

    @_scalar_or_array
    def phi_V(s_arr):
        return lam * (1.0 - _phi_x_arr(s_arr + lam)) / ((s_arr + lam) * omx)

    @_scalar_or_array
    def phi_Y(s_arr):
        return _phi_c_arr(s_arr) * _phi_r_arr(s_arr)

    E_C = E_Xp / pbar
    E_C2 = (E_Xp2 + 2.0 * E_C * float(np.dot(q, (1.0 - p_busy) * T_busy))) / pbar
    E_R = E_X / omx
    E_R2 = E_X2 / omx - 2.0 * E_X * dphi_x_lam / omx ** 2
    E_V = 1.0 / lam + dphi_x_lam / omx
    E_Vp = E_X / omx - 1.0 / lam
    E_Y = E_C + E_R
    E_Y2 = E_C2 + 2.0 * E_C * E_R + E_R2
    return LtMoments(
        E_X=E_X, E_X2=E_X2, E_Xp=E_Xp, E_Xp2=E_Xp2, E_C=E_C, E_C2=E_C2,
        E_R=E_R, E_R2=E_R2, E_V=E_V, E_Vp=E_Vp, E_Y=E_Y, E_Y2=E_Y2,
        E_N=1.0 / omx, E_M=1.0 / pbar,
        phi_X=phi_X, phi_Xp=phi_Xp, phi_C=phi_C, phi_R=phi_R, phi_V=phi_V,
        phi_Y=phi_Y)


def contention_moments(backlog: BacklogModel, policy: AccessPolicy,
                       lam: float) -> tuple[Callable, float, float]:
    """(phi_C, E[C], E[C^2]) for the busy stretch of the tagged node."""
    if backlog.p_bar_prime <= 0.0:
        raise ModelError("p_bar' = 0: the tagged node can never transmit")
    m = transforms(backlog, policy, lam)
    return m.phi_C, m.E_C, m.E_C2


def idle_moments(backlog: BacklogModel, policy: AccessPolicy,
                 lam: float) -> tuple[Callable, float, float]:
    """(phi_R, E[R], E[R^2]) for the idle stretch of the tagged node."""
    m = transforms(backlog, policy, lam)
    return m.phi_R, m.E_R, m.E_R2


def access_delay(backlog: BacklogModel, policy: AccessPolicy,
                 lam: float) -> tuple[Callable, float]:
    """(phi_D, E[D]): delay from the held message's birth to transmit end."""
    m = transforms(backlog, policy, lam)

    def phi_D(s):
        return m.phi_C(s) * m.phi_V(s)

    return phi_D, m.E_C + m.E_V


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def success_probability(backlog: BacklogModel, policy: AccessPolicy,
                        profile: SicProfile) -> float:
    """Decoded-per-transmitted ratio across the backlog distribution."""
    n = policy.n
    mh_at_gamma = profile.mh_matrix_at(policy.gamma[1:])   # (n_max+1, n)
    num = 0.0
    den = 0.0
    for k in range(1, n + 1):
        pk = policy.p[k]
        wk = backlog.w[k]
        if wk == 0.0 or pk == 0.0:
            continue
        pmf = binom_dist.pmf(np.arange(k + 1), k, pk)
        num += wk * float(np.dot(pmf[1:], mh_at_gamma[1:k + 1, k - 1]))
        den += wk * k * pk
    if den <= 0.0:
        raise ModelError("no transmissions in the backlog mixture")
    return num / den


def throughput(P_s: float, E_Y: float, lam: float,
               L: float) -> tuple[float, float, float]:
    """Net message throughput (msg/s), normalized, and bit/s."""
    if not E_Y > 0:
        raise ValueError(f"E[Y] must be > 0, got {E_Y}")
    theta = P_s / E_Y
    return theta, theta / lam, L * theta


def channel_busy_ratio(backlog: BacklogModel, policy: AccessPolicy) -> float:
    """Fraction of time at least one node transmits (overhead included)."""
    n = policy.n
    ks = np.arange(n + 1)
    idle_prob = (1.0 - policy.p) ** ks        # p[0] = 0 makes the k=0 term 1
    denom = float(np.dot(backlog.w, policy.T))
    num = float(np.dot(backlog.w, idle_prob * policy.T))
    return 1.0 - num / denom


def aoi_tail_rate(phi_Y: Callable, P_s: float, min_T: float,
                  lam: float) -> float:
    """Dominant-pole decay rate: smallest zeta with phi_Y(-zeta) = 1/(1-P_s).

    E[e^{zeta Y}] grows monotonically until the transform diverges, so an
    expanding bracket plus bisection always finds the root; P_s = 1 has no
    pole and returns +inf.
    """
    if not 0.0 < P_s <= 1.0:
        raise ValueError(f"P_s must be in (0, 1], got {P_s}")
    if P_s >= 1.0 - 1e-15:
        return math.inf
    target = 1.0 / (1.0 - P_s)

    def grow(z: float) -> float:
        val = phi_Y(-z)
        return val if np.isfinite(val) and val > 0 else math.inf

    lo = 1e-9
    while grow(lo) >= target:
        lo *= 0.01
        if lo < 1e-300:
            return math.inf
    cap = min(lam, 1e6 / min_T)
    hi = min(2.0 * lo, cap)
    while grow(hi) < target:
        hi = min(hi * 2.0, cap)
        if hi >= cap and grow(cap) < target:
            hi = cap * (1 - 1e-12)
            if grow(hi) < target:
                raise ModelError("AoI tail bracket exceeded transform validity")
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if grow(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def aoi_metrics(phi_Y: Callable, E_D: float, E_Y: float, E_Y2: float,
                P_s: float, min_T: float, lam: float
                ) -> tuple[float, float, Callable]:
    """Mean age, tail decay rate and the shifted-exponential CCDF proxy."""
    E_H = E_D + E_Y2 / (2.0 * E_Y) + E_Y * (1.0 / P_s - 1.0)
    zeta = aoi_tail_rate(phi_Y, P_s, min_T, lam)

    def ccdf(t):
        t_arr = np.asarray(t, dtype=float)
        if math.isinf(zeta):
            out = np.where(t_arr <= E_H, 1.0, 0.0)
        else:
            out = np.minimum(1.0, np.exp(-zeta * (t_arr - E_H) - 1.0))
        return float(out) if out.ndim == 0 else out

    return E_H, zeta, ccdf


def energy_per_delivered(backlog: BacklogModel, policy: AccessPolicy,
                         lam: float, config: SystemConfig, coverage_R: float,
                         moments: LtMoments, P_s: float
                         ) -> tuple[float, float, float]:
    """(E_tx, E_d, E_bar): transmit, per-cycle, and per-delivered energy.

    The MAC powers up at the first arrival of the activating slot, so the
    active window per cycle is V' + C; dozing covers the rest of R.  Each
    transmission is billed the distance-averaged power-control output for
    its threshold, and every generated message (delivered or dropped) costs
    E_g.
    """
    n = policy.n
    E_Vp = moments.E_Vp
    if E_Vp < -1e-9 * moments.E_X:
        raise ModelError(f"E[V'] = {E_Vp} < 0: inconsistent arrival model")
    E_Vp = max(E_Vp, 0.0)
    inv_gain = mean_inverse_gain(config, coverage_R)
    ptx = config.P_N * (policy.gamma[1:n + 1] / config.c) * inv_gain
    E_tx = float(np.dot(backlog.q, ptx * policy.T[1:n + 1]))
    E_d = (config.P_d * (moments.E_R - E_Vp)
           + config.P_a * (E_Vp + moments.E_C) + E_tx)
    E_bar = (config.E_g * lam * moments.E_Y + E_d) / P_s
    return E_tx, E_d, E_bar


def critical_rate(policy: AccessPolicy, config: SystemConfig
                  ) -> tuple[float, float, float]:
    """(U_inf, lambda_inf, S_inf): asymptotic sum rate and critical load.

    For large k the per-slot spectral efficiency tends to
    a_D / (a_gamma * ln 2); dividing the channel rate by n nodes and L bits
    per message gives the critical per-node generation rate.
    """
    if not np.isfinite(policy.a_D) or not np.isfinite(policy.a_gamma):
        raise ValueError("policy constants not fitted")
    U_inf = policy.a_D / (policy.a_gamma * math.log(2.0))
    lam_inf = config.W * U_inf / (config.n * config.L)
    return U_inf, lam_inf, 1.0 / lam_inf


# ---------------------------------------------------------------------------
# One-shot evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricsReport:
    """All analytic metrics for one load point."""

    S: float                 # mean generation time (s)
    lam: float
    b: float
    E_Q: float
    Std_Q: float
    P_s: float
    theta: float             # msg/s per node
    theta_norm: float
    theta_bps: float
    cbr: float
    E_D: float               # s
    E_H: float               # s
    zeta: float              # 1/s
    E_tx: float              # J per transmission cycle
    E_d: float               # J per inter-departure cycle
    E_bar: float             # J per delivered message
    U_inf: float
    lambda_inf: float
    S_inf: float
    coverage_R: float


def evaluate(config: SystemConfig, policy: AccessPolicy, profile: SicProfile,
             coverage_R: float | None = None) -> MetricsReport:
    """Run the whole analytic pipeline at the config's load point."""
    lam = config.lam
    n = config.n
    backlog = solve_backlog_fixed_point(policy, lam, n)
    moments = transforms(backlog, policy, lam)
    P_s = success_probability(backlog, policy, profile)
    theta, theta_norm, theta_bps = throughput(P_s, moments.E_Y, lam, config.L)
    cbr = channel_busy_ratio(backlog, policy)
    _, E_D = access_delay(backlog, policy, lam)
    min_T = float(np.min(policy.T[policy.T > 0]))
    E_H, zeta, _ = aoi_metrics(moments.phi_Y, E_D, moments.E_Y, moments.E_Y2,
                               P_s, min_T, lam)
    if coverage_R is None:
        coverage_R = coverage_radius(config)
    E_tx, E_d, E_bar = energy_per_delivered(backlog, policy, lam, config,
                                            coverage_R, moments, P_s)
    U_inf, lam_inf, S_inf = critical_rate(policy, config)
    return MetricsReport(
        S=config.S, lam=lam, b=backlog.b, E_Q=n * backlog.b,
        Std_Q=math.sqrt(n * backlog.b * (1.0 - backlog.b)),
        P_s=P_s, theta=theta, theta_norm=theta_norm, theta_bps=theta_bps,
        cbr=cbr, E_D=E_D, E_H=E_H, zeta=zeta, E_tx=E_tx, E_d=E_d, E_bar=E_bar,
        U_inf=U_inf, lambda_inf=lam_inf, S_inf=S_inf, coverage_R=coverage_R)
