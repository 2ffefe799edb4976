"""Adaptive access policy: per-backlog sum-rate maximization and fits.

For k backlogged nodes the policy picks a transmission probability p_k and
a decode threshold gamma_k by maximizing the per-slot sum rate
``U_k(p, gamma) = log2(1+gamma) * sum_h m_h(gamma) Binom(h; k, p)`` on a
(p, gamma) grid.  The raw per-k argmax table is then summarized by a
breakpoint k_c (below it: transmit one node at a time at gamma_max; at or
above it: everybody transmits at a threshold ~ 1/(a_gamma*k + b_gamma)),
and by the asymptotic decoded-per-slot slope a_D.
"""

from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from .config import SystemConfig
from .sic import SicProfile, build_sic_profile, default_gamma_grid


def slot_duration(config: SystemConfig, gamma: float | None) -> float:
    """Slot length for decode threshold gamma; ``None`` means an idle slot.

    A slot fits one packet at spectral efficiency log2(1+gamma) plus the
    fixed overhead; with nobody backlogged only the overhead remains.
    """
    if gamma is None:
        return config.T_oh
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    return config.T_oh + config.L / (config.W * math.log2(1.0 + gamma))


def sum_rate(k: int, p: float, gamma: float, profile: SicProfile) -> float:
    """Sum rate U_k(p, gamma) in bit/s/Hz.

    Mixture of mean decoded counts over the binomial number of actual
    transmitters among the k backlogged nodes.
    """
    if not 1 <= k <= profile.n_max:
        raise ValueError(f"k must be in [1, {profile.n_max}], got {k}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    hs = np.arange(k + 1)
    weights = binom.pmf(hs, k, p)
    means = np.array([profile.mh_at(h, gamma) for h in hs])
    return float(math.log2(1.0 + gamma) * np.dot(weights, means))


def default_p_grid(points: int = 200) -> np.ndarray:
    """Uniform p grid on (0, 1]; includes p = 1 exactly."""
    return np.arange(1, points + 1) / points


@dataclass(frozen=True)
class PolicyPoint:
    k: int
    p: float
    gamma: float
    sum_rate: float
    decoded_mean: float


def _argmax_table(k: int, pmf: np.ndarray, mh: np.ndarray,
                  log2_term: np.ndarray, p_grid: np.ndarray,
                  gamma_grid: np.ndarray) -> PolicyPoint:
    dbar = pmf @ mh[: k + 1]                   # (P, G)
    u = log2_term[None, :] * dbar
    # exact ties break toward larger gamma, then larger p: scan the
    # axis-flipped transpose so the preferred candidate is found first
    flipped = u.T[::-1, ::-1]
    gi_r, pi_r = np.unravel_index(np.argmax(flipped), flipped.shape)
    gi = gamma_grid.size - 1 - gi_r
    pi = p_grid.size - 1 - pi_r
    return PolicyPoint(k=k, p=float(p_grid[pi]), gamma=float(gamma_grid[gi]),
                       sum_rate=float(u[pi, gi]), decoded_mean=float(dbar[pi, gi]))


def optimize_policy(k: int, profile: SicProfile, gamma_max: float,
                    p_grid: np.ndarray | None = None) -> PolicyPoint:
    """Exhaustive grid argmax of the sum rate over p x gamma for one k."""
    if p_grid is None:
        p_grid = default_p_grid()
    p_grid = np.asarray(p_grid, dtype=float)
    mask = profile.gamma_grid <= gamma_max * (1 + 1e-12)
    gamma_grid = profile.gamma_grid[mask]
    if p_grid.size == 0 or gamma_grid.size == 0:
        raise ValueError("empty optimization grid")
    mh = profile.mh[:, mask]
    log2_term = np.log2(1.0 + gamma_grid)
    pmf = binom.pmf(np.arange(k + 1)[None, :], k, p_grid[:, None])
    return _argmax_table(k, pmf, mh, log2_term, p_grid, gamma_grid)


def build_policy_table(profile: SicProfile, n: int, gamma_max: float,
                       p_grid: np.ndarray | None = None) -> list[PolicyPoint]:
    """Raw per-k argmax table for k = 1..n."""
    if p_grid is None:
        p_grid = default_p_grid()
    p_grid = np.asarray(p_grid, dtype=float)
    mask = profile.gamma_grid <= gamma_max * (1 + 1e-12)
    gamma_grid = profile.gamma_grid[mask]
    mh = profile.mh[:, mask]
    log2_term = np.log2(1.0 + gamma_grid)
    table = []
    for k in range(1, n + 1):
        pmf = binom.pmf(np.arange(k + 1)[None, :], k, p_grid[:, None])
        table.append(_argmax_table(k, pmf, mh, log2_term, p_grid, gamma_grid))
    return table


@dataclass(frozen=True)
class PolicyFit:
    k_c: int
    a_gamma: float
    b_gamma: float
    a_D: float


def fit_policy_constants(table: list[PolicyPoint], gamma_max: float) -> PolicyFit:
    """Closed-form constants from a raw argmax table.

    k_c is the first k whose optimum switches to the transmit-all branch
    (p* rounds to 1 with an interior gamma*); 1/gamma* is fitted affine in
    k over k >= k_c; a_D is the least-squares slope of the mean decoded
    count versus k over the top half of the k range.
    """
    n = len(table)
    k_c = None
    for pt in table:
        if round(pt.p) == 1 and pt.gamma < gamma_max:
            k_c = pt.k
            break
    if k_c is None:
        raise ValueError("no transmit-all breakpoint found; raise n or gamma grid span")

    tail = [pt for pt in table if pt.k >= k_c]
    if len(tail) < 3:
        raise ValueError(f"need >= 3 points beyond k_c for the 1/gamma fit, have {len(tail)}")
    ks = np.array([pt.k for pt in tail], dtype=float)
    inv_gamma = np.array([1.0 / pt.gamma for pt in tail])
    a_gamma, b_gamma = np.polyfit(ks, inv_gamma, 1)

    top = [pt for pt in table if pt.k > n // 2]
    if len(top) < 3:
        raise ValueError(f"need >= 3 points in the top half for the a_D fit, have {len(top)}")
    ks_top = np.array([pt.k for pt in top], dtype=float)
    dbar = np.array([pt.decoded_mean for pt in top])
    a_D = np.polyfit(ks_top, dbar, 1)[0]
    return PolicyFit(k_c=int(k_c), a_gamma=float(a_gamma),
                     b_gamma=float(b_gamma), a_D=float(a_D))


@dataclass(frozen=True)
class AccessPolicy:
    """Per-backlog-count access tables plus the fitted constants.

    Arrays are indexed by the backlog count k = 0..n; p[0] = 0 and T[0] is
    the overhead-only idle slot.  gamma[0] is a placeholder (no threshold
    exists without transmitters).
    """

    p: np.ndarray
    gamma: np.ndarray
    T: np.ndarray
    k_c: int
    a_gamma: float
    b_gamma: float
    a_D: float

    @property
    def n(self) -> int:
        return self.p.size - 1

    @classmethod
    def from_constants(cls, config: SystemConfig, k_c: int, a_gamma: float,
                       b_gamma: float, a_D: float = float("nan"),
                       gamma_floor: float = 1e-3) -> "AccessPolicy":
        """Closed-form policy tables from (k_c, a_gamma, b_gamma)."""
        n = config.n
        ks = np.arange(n + 1)
        p = np.where(ks < k_c, 1.0 / np.maximum(ks, 1), 1.0)
        p[0] = 0.0
        gamma = np.where(ks < k_c, config.gamma_max,
                         1.0 / (a_gamma * ks + b_gamma))
        gamma = np.clip(gamma, gamma_floor, config.gamma_max)
        gamma[0] = 0.0
        T = np.array([config.T_oh] +
                     [slot_duration(config, g) for g in gamma[1:]])
        return cls(p=p, gamma=gamma, T=T, k_c=int(k_c), a_gamma=float(a_gamma),
                   b_gamma=float(b_gamma), a_D=float(a_D))

    @classmethod
    def from_table(cls, config: SystemConfig, table: list[PolicyPoint],
                   fit: PolicyFit) -> "AccessPolicy":
        """Raw argmax policy tables (no closed-form smoothing)."""
        n = config.n
        if len(table) != n:
            raise ValueError(f"table covers k=1..{len(table)}, config has n={n}")
        p = np.zeros(n + 1)
        gamma = np.zeros(n + 1)
        T = np.full(n + 1, config.T_oh)
        for pt in table:
            p[pt.k] = pt.p
            gamma[pt.k] = pt.gamma
            T[pt.k] = slot_duration(config, pt.gamma)
        return cls(p=p, gamma=gamma, T=T, k_c=fit.k_c, a_gamma=fit.a_gamma,
                   b_gamma=fit.b_gamma, a_D=fit.a_D)

    @classmethod
    def frozen(cls, config: SystemConfig, p: float, gamma: float,
               T: float | None = None) -> "AccessPolicy":
        """k-independent (p, gamma, T) tables, for oracle experiments.

        The idle slot also takes T so every slot has the same length; p may
        be 0 to silence the channel.
        """
        n = config.n
        if T is None:
            T = slot_duration(config, gamma) if gamma > 0 else config.T_oh
        pol_p = np.full(n + 1, float(p))
        pol_p[0] = 0.0
        pol_g = np.full(n + 1, float(gamma))
        pol_g[0] = 0.0
        pol_T = np.full(n + 1, float(T))
        return cls(p=pol_p, gamma=pol_g, T=pol_T, k_c=0, a_gamma=float("nan"),
                   b_gamma=float("nan"), a_D=float("nan"))


def policy_cache_key(config: SystemConfig, gamma_points: int = 200,
                     p_points: int = 200) -> str:
    """Content hash of everything the policy build depends on."""
    payload = "|".join(
        f"{name}={getattr(config, name)!r}"
        for name in ("n", "epsilon", "gamma_max", "L", "W", "T_oh",
                     "seed", "mc_trials"))
    payload += f"|gamma_points={gamma_points}|p_points={p_points}|schema=1"
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def build_policy(config: SystemConfig, profile: SicProfile | None = None,
                 fitted: bool = True) -> tuple[AccessPolicy, SicProfile, list[PolicyPoint]]:
    """Full pipeline: SIC profile -> per-k argmax -> fits -> policy tables.

    ``fitted=True`` returns the closed-form tables (the form used for all
    evaluations); ``fitted=False`` keeps the raw argmax tables.
    """
    if profile is None:
        profile = build_sic_profile(
            config.n, config.epsilon, seed=config.seed, trials=config.mc_trials,
            gamma_grid=default_gamma_grid(config.gamma_max))
    table = build_policy_table(profile, config.n, config.gamma_max)
    fit = fit_policy_constants(table, config.gamma_max)
    if fitted:
        policy = AccessPolicy.from_constants(
            config, fit.k_c, fit.a_gamma, fit.b_gamma, fit.a_D,
            gamma_floor=float(profile.gamma_grid[0]))
    else:
        policy = AccessPolicy.from_table(config, table, fit)
    return policy, profile, table


# ---------------------------------------------------------------------------
# Policy artifact (structured text, versioned)
# ---------------------------------------------------------------------------

ARTIFACT_VERSION = "sicslot-policy/1"


def dump_policy_artifact(policy: AccessPolicy, profile: SicProfile | None,
                         cache_key: str = "") -> str:
    """Render policy tables (and the SIC profile, if any) as versioned text.

    Profile-less artifacts serve as policy overrides for the simulator,
    which never touches m_h; the analytic model refuses to run without the
    profile section.
    """
    out = io.StringIO()
    out.write(f"format = {ARTIFACT_VERSION}\n")
    out.write(f"cache_key = {cache_key}\n")
    out.write("[constants]\n")
    out.write(f"n = {policy.n}\n")
    out.write(f"k_c = {policy.k_c}\n")
    out.write(f"a_gamma = {float(policy.a_gamma)!r}\n")
    out.write(f"b_gamma = {float(policy.b_gamma)!r}\n")
    out.write(f"a_D = {float(policy.a_D)!r}\n")
    if profile is not None:
        out.write(f"epsilon = {float(profile.epsilon)!r}\n")
        out.write(f"trials = {profile.trials}\n")
        out.write(f"seed = {profile.seed}\n")
    out.write("[policy]\n")
    out.write("# k p gamma T\n")
    for k in range(policy.n + 1):
        out.write(f"{k} {float(policy.p[k])!r} {float(policy.gamma[k])!r} "
                  f"{float(policy.T[k])!r}\n")
    if profile is not None:
        out.write("[sic-profile]\n")
        out.write("gamma " + " ".join(repr(float(g)) for g in profile.gamma_grid) + "\n")
        for h in range(profile.n_max + 1):
            out.write(f"mh {h} " + " ".join(repr(float(v)) for v in profile.mh[h]) + "\n")
        for h in range(profile.n_max + 1):
            out.write(f"stderr {h} "
                      + " ".join(repr(float(v)) for v in profile.stderr[h]) + "\n")
    return out.getvalue()


def load_policy_artifact(text: str) -> tuple[AccessPolicy, SicProfile | None]:
    """Parse an artifact produced by :func:`dump_policy_artifact`."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith("format = "):
        raise ValueError("not a sicslot policy artifact")
    version = lines[0].partition("=")[2].strip()
    if version != ARTIFACT_VERSION:
        raise ValueError(f"unsupported artifact version {version!r}")
    section = None
    constants: dict[str, float] = {}
    rows: list[tuple[int, float, float, float]] = []
    gamma_grid = None
    mh_rows: dict[int, np.ndarray] = {}
    se_rows: dict[int, np.ndarray] = {}
    for raw in lines[1:]:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            section = line.strip("[]")
            continue
        if section is None:
            continue  # header metadata (cache_key etc.)
        if section == "constants":
            key, _, val = line.partition("=")
            constants[key.strip()] = float(val.strip()) if val.strip() else float("nan")
        elif section == "policy":
            k, p, g, t = line.split()
            rows.append((int(k), float(p), float(g), float(t)))
        elif section == "sic-profile":
            parts = line.split()
            if parts[0] == "gamma":
                gamma_grid = np.array([float(v) for v in parts[1:]])
            elif parts[0] == "mh":
                mh_rows[int(parts[1])] = np.array([float(v) for v in parts[2:]])
            elif parts[0] == "stderr":
                se_rows[int(parts[1])] = np.array([float(v) for v in parts[2:]])
    n = int(constants["n"])
    p = np.zeros(n + 1)
    gamma = np.zeros(n + 1)
    T = np.zeros(n + 1)
    for k, pv, gv, tv in rows:
        p[k], gamma[k], T[k] = pv, gv, tv
    policy = AccessPolicy(p=p, gamma=gamma, T=T, k_c=int(constants["k_c"]),
                          a_gamma=constants["a_gamma"],
                          b_gamma=constants["b_gamma"], a_D=constants["a_D"])
    if gamma_grid is None:
        return policy, None
    n_max = max(mh_rows)
    mh = np.vstack([mh_rows[h] for h in range(n_max + 1)])
    stderr = np.vstack([se_rows[h] for h in range(n_max + 1)])
    profile = SicProfile(gamma_grid=gamma_grid, mh=mh, stderr=stderr,
                         trials=int(constants.get("trials", 0)),
                         epsilon=float(constants.get("epsilon", float("nan"))),
                         seed=int(constants.get("seed", 0)))
    return policy, profile
