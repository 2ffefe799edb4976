"""Slot-level Monte Carlo simulation of the full system.

Each node is a two-state machine (idle / backlogged) holding at most one
message.  Slots stretch with the backlog count, Poisson arrivals are
dropped while a node is engaged, fading is i.i.d. Rayleigh power per slot,
and the base station runs the sequential SIC chain on each slot's
transmissions.  The replication kernel is numba-compiled; tallies are
bit-reproducible for a fixed (seed, config, policy) regardless of how
replications are scheduled.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.stats import t as student_t

from .config import SystemConfig
from .pathloss import coverage_radius, two_ray_gain
from .policy import AccessPolicy


def sample_node_distances(n: int, coverage_R: float, rng: np.random.Generator,
                          r_min: float = 1.0) -> np.ndarray:
    """Area-uniform radii over the coverage disc, clipped below at r_min."""
    if coverage_R <= r_min:
        raise ValueError(f"coverage_R {coverage_R} must exceed r_min {r_min}")
    r = coverage_R * np.sqrt(rng.uniform(0.0, 1.0, size=n))
    return np.maximum(r, r_min)


@njit(cache=True)
def _sic_chain(fades_desc: np.ndarray, gamma: float, c: float) -> int:
    """Decoded count for descending raw fades.

    Power control scales each fade by gamma/c, so the threshold test
    reduces to g >= c + gamma * (sum of weaker fades).
    """
    tail = 0.0
    for j in range(fades_desc.size):
        tail += fades_desc[j]
    count = 0
    for j in range(fades_desc.size):
        tail -= fades_desc[j]
        if fades_desc[j] < c + gamma * tail:
            break
        count += 1
    return count


@njit(cache=True)
def _run_kernel(seed: int, horizon: int, warmup_slots: int, n: int,
                lam: float, p_tab: np.ndarray, g_tab: np.ndarray,
                T_tab: np.ndarray, c: float, ptx_coef: np.ndarray,
                P_a: float, P_d: float, E_g: float):
    np.random.seed(seed)

    backlogged = np.zeros(n, dtype=np.bool_)
    is_tx = np.zeros(n, dtype=np.bool_)
    newly = np.zeros(n, dtype=np.bool_)
    birth = np.zeros(n)
    ref_birth = np.full(n, np.nan)
    prev_delivery = np.zeros(n)
    fades = np.empty(n)
    tx_idx = np.empty(n, dtype=np.int64)

    # post-warmup tallies
    time_pw = 0.0
    busy_time = 0.0
    slots_pw = 0
    sum_k = 0.0
    sum_k2 = 0.0
    hist = np.zeros(n + 1, dtype=np.int64)
    attempts = 0
    successes = 0
    generated = 0
    dropped = 0
    failures = 0
    delay_sum = 0.0
    delay_count = 0
    energy = 0.0
    aoi_area = 0.0
    aoi_time = 0.0
    # full-horizon conservation counters
    gen_all = 0
    drop_all = 0
    fail_all = 0
    succ_all = 0
    # lag-1 transmit-indicator statistics (post-warmup)
    prev_x = np.zeros(n, dtype=np.int8)
    sum_x = np.zeros(n, dtype=np.int64)
    sum_prod = np.zeros(n, dtype=np.int64)

    t = 0.0
    warmup_t = 0.0
    for s in range(horizon):
        pw = s >= warmup_slots
        if s == warmup_slots:
            warmup_t = t
        k = 0
        for i in range(n):
            if backlogged[i]:
                k += 1
        T = T_tab[k]
        t_end = t + T
        pk = p_tab[k]
        gk = g_tab[k]

        # transmission draws and SIC decoding
        ntx = 0
        for i in range(n):
            is_tx[i] = False
            if backlogged[i] and np.random.random() < pk:
                tx_idx[ntx] = i
                is_tx[i] = True
                ntx += 1
        decoded = 0
        if ntx > 0:
            for j in range(ntx):
                fades[j] = np.random.exponential(1.0)
            order = np.argsort(fades[:ntx])[::-1]
            decoded = _sic_chain(fades[:ntx][order], gk, c)
            for j in range(ntx):
                i = tx_idx[order[j]]
                if j < decoded:
                    succ_all += 1
                    if pw:
                        successes += 1
                        delay_sum += t_end - birth[i]
                        delay_count += 1
                    if not np.isnan(ref_birth[i]):
                        lo = prev_delivery[i]
                        if lo < warmup_t:
                            lo = warmup_t
                        if pw and t_end > lo:
                            g_ref = ref_birth[i]
                            aoi_area += 0.5 * ((t_end - g_ref) ** 2
                                               - (lo - g_ref) ** 2)
                            aoi_time += t_end - lo
                    ref_birth[i] = birth[i]
                    prev_delivery[i] = t_end
                else:
                    fail_all += 1
                    if pw:
                        failures += 1
            if pw:
                attempts += ntx

        # arrivals, drops and per-node baseline energy
        arrivals_slot = 0
        for i in range(n):
            newly[i] = False
            m = np.random.poisson(lam * T)
            arrivals_slot += m
            gen_all += m
            if backlogged[i]:
                drop_all += m
                if pw:
                    dropped += m
                    energy += P_a * T
            elif m >= 1:
                # order statistics of the m uniform arrival epochs
                last = t + T * np.random.random() ** (1.0 / m)
                if m == 1:
                    first = last
                else:
                    first = t + (last - t) * (1.0 - np.random.random() ** (1.0 / (m - 1)))
                drop_all += m - 1
                if pw:
                    dropped += m - 1
                    energy += P_d * (first - t) + P_a * (t_end - first)
                birth[i] = last
                newly[i] = True
            else:
                if pw:
                    energy += P_d * T
        if pw:
            energy += E_g * arrivals_slot

        # transmit power, then state updates at the slot boundary
        for j in range(ntx):
            i = tx_idx[j]
            if pw:
                energy += ptx_coef[i] * gk * T
            backlogged[i] = False
        for i in range(n):
            if newly[i]:
                backlogged[i] = True

        if pw:
            slots_pw += 1
            time_pw += T
            sum_k += k
            sum_k2 += k * k
            hist[k] += 1
            if ntx > 0:
                busy_time += T
            for i in range(n):
                xi = 1 if is_tx[i] else 0
                if slots_pw > 1:
                    sum_prod[i] += xi * prev_x[i]
                sum_x[i] += xi
                prev_x[i] = xi

        t = t_end

    # flush trailing AoI segments up to the horizon end
    for i in range(n):
        if not np.isnan(ref_birth[i]):
            lo = prev_delivery[i]
            if lo < warmup_t:
                lo = warmup_t
            if t > lo:
                g_ref = ref_birth[i]
                aoi_area += 0.5 * ((t - g_ref) ** 2 - (lo - g_ref) ** 2)
                aoi_time += t - lo

    pending = 0
    for i in range(n):
        if backlogged[i]:
            pending += 1

    return (time_pw, busy_time, slots_pw, sum_k, sum_k2, hist, attempts,
            successes, generated, dropped, failures, delay_sum, delay_count,
            energy, aoi_area, aoi_time, gen_all, drop_all, fail_all, succ_all,
            pending, sum_x, sum_prod, t, warmup_t)


@dataclass(frozen=True)
class ReplicationTallies:
    """Raw per-replication tallies (post-warmup unless noted)."""

    seed: int
    horizon_slots: int
    warmup_slots: int
    n: int
    lam: float
    time: float
    busy_time: float
    slots: int
    sum_k: float
    sum_k2: float
    backlog_hist: np.ndarray
    attempts: int
    successes: int
    generated: int
    dropped: int
    failures: int
    delay_sum: float
    delay_count: int
    energy: float
    aoi_area: float
    aoi_time: float
    gen_all: int            # full horizon
    drop_all: int           # full horizon
    fail_all: int           # full horizon
    succ_all: int           # full horizon
    pending_end: int
    tx_count_per_node: np.ndarray
    tx_lag1_prod_per_node: np.ndarray
    clock_end: float
    warmup_end: float

    # -- point estimates ---------------------------------------------------

    def pdr(self) -> float:
        return self.successes / self.attempts if self.attempts else math.nan

    def theta(self) -> float:
        """Delivered messages per second per node."""
        return self.successes / (self.time * self.n) if self.time else math.nan

    def theta_norm(self) -> float:
        return self.theta() / self.lam

    def cbr(self) -> float:
        return self.busy_time / self.time if self.time else math.nan

    def mean_delay(self) -> float:
        return self.delay_sum / self.delay_count if self.delay_count else math.nan

    def mean_aoi(self) -> float:
        return self.aoi_area / self.aoi_time if self.aoi_time else math.nan

    def energy_per_delivered(self) -> float:
        return self.energy / self.successes if self.successes else math.nan

    def mean_q(self) -> float:
        return self.sum_k / self.slots if self.slots else math.nan

    def std_q(self) -> float:
        if not self.slots:
            return math.nan
        m = self.mean_q()
        return math.sqrt(max(self.sum_k2 / self.slots - m * m, 0.0))

    def conservation_gap(self) -> int:
        """generated - delivered - dropped - decode-failed - in-flight."""
        return (self.gen_all - self.succ_all - self.fail_all - self.drop_all
                - self.pending_end)

    def tx_lag1_autocorr(self) -> np.ndarray:
        """Per-node lag-1 autocorrelation of the transmit indicator."""
        slots = self.slots
        if slots < 2:
            return np.full(self.n, math.nan)
        mean = self.tx_count_per_node / slots
        var = mean * (1.0 - mean)
        cov = self.tx_lag1_prod_per_node / (slots - 1) - mean ** 2
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(var > 0, cov / var, np.nan)


def _replication_seeds(root_seed: int, replications: int) -> list[int]:
    ss = np.random.SeedSequence(root_seed)
    return [int(s) for s in ss.generate_state(2 * replications)[::2]]


def run_replication(config: SystemConfig, policy: AccessPolicy, seed: int,
                    horizon_slots: int, warmup_frac: float = 0.1,
                    coverage_R: float | None = None,
                    distances: np.ndarray | None = None) -> ReplicationTallies:
    """Simulate one replication and return its raw tallies.

    ``seed`` fully determines the node placement and every random draw.
    """
    warmup_slots = int(horizon_slots * warmup_frac)
    if horizon_slots <= warmup_slots:
        raise ValueError(
            f"horizon {horizon_slots} not longer than warmup {warmup_slots}")
    n = config.n
    if distances is None:
        if coverage_R is None:
            coverage_R = coverage_radius(config)
        dist_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
        distances = sample_node_distances(n, coverage_R, dist_rng, config.r_min)
    gains = np.array([two_ray_gain(r, config) for r in distances])
    ptx_coef = config.P_N / (config.c * gains)
    kernel_seed = int(np.random.SeedSequence([seed, 0]).generate_state(1)[0])

    out = _run_kernel(kernel_seed, int(horizon_slots), warmup_slots, n,
                      config.lam, np.ascontiguousarray(policy.p),
                      np.ascontiguousarray(policy.gamma),
                      np.ascontiguousarray(policy.T), config.c,
                      np.ascontiguousarray(ptx_coef),
                      config.P_a, config.P_d, config.E_g)
    (time_pw, busy_time, slots_pw, sum_k, sum_k2, hist, attempts, successes,
     generated, dropped, failures, delay_sum, delay_count, energy, aoi_area,
     aoi_time, gen_all, drop_all, fail_all, succ_all, pending, sum_x,
     sum_prod, clock_end, warmup_end) = out
    return ReplicationTallies(
        seed=seed, horizon_slots=int(horizon_slots), warmup_slots=warmup_slots,
        n=n, lam=config.lam, time=time_pw, busy_time=busy_time,
        slots=int(slots_pw), sum_k=sum_k, sum_k2=sum_k2,
        backlog_hist=np.asarray(hist), attempts=int(attempts),
        successes=int(successes), generated=int(generated),
        dropped=int(dropped), failures=int(failures), delay_sum=delay_sum,
        delay_count=int(delay_count), energy=energy, aoi_area=aoi_area,
        aoi_time=aoi_time, gen_all=int(gen_all), drop_all=int(drop_all),
        fail_all=int(fail_all), succ_all=int(succ_all),
        pending_end=int(pending), tx_count_per_node=np.asarray(sum_x),
        tx_lag1_prod_per_node=np.asarray(sum_prod), clock_end=clock_end,
        warmup_end=warmup_end)


def _replication_job(args) -> ReplicationTallies:
    config, policy, seed, horizon_slots, warmup_frac, coverage_R = args
    return run_replication(config, policy, seed, horizon_slots,
                           warmup_frac=warmup_frac, coverage_R=coverage_R)


def run_replications(config: SystemConfig, policy: AccessPolicy,
                     replications: int, horizon_slots: int,
                     warmup_frac: float = 0.1,
                     coverage_R: float | None = None,
                     root_seed: int | None = None) -> list[ReplicationTallies]:
    """Run independent replications; SICSLOT_WORKERS > 1 uses processes.

    Results come back ordered by replication index, so the aggregate is
    identical however the work was scheduled.
    """
    if root_seed is None:
        root_seed = config.seed
    if coverage_R is None:
        coverage_R = coverage_radius(config)
    seeds = _replication_seeds(root_seed, replications)
    jobs = [(config, policy, s, horizon_slots, warmup_frac, coverage_R)
            for s in seeds]
    workers = int(os.environ.get("SICSLOT_WORKERS", "1"))
    if workers > 1 and replications > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_replication_job, jobs))
    return [_replication_job(job) for job in jobs]


@dataclass(frozen=True)
class MetricEstimate:
    mean: float
    ci_half: float
    replications: int

    def contains(self, value: float) -> bool:
        return abs(value - self.mean) <= self.ci_half


@dataclass(frozen=True)
class SimResult:
    """Across-replication estimates with Student-t confidence intervals."""

    metrics: dict[str, MetricEstimate]
    backlog_hist: np.ndarray
    replications: int
    confidence: float

    def __getitem__(self, name: str) -> MetricEstimate:
        return self.metrics[name]


_METRIC_FUNCS = {
    "pdr": ReplicationTallies.pdr,
    "theta": ReplicationTallies.theta,
    "theta_norm": ReplicationTallies.theta_norm,
    "cbr": ReplicationTallies.cbr,
    "E_D": ReplicationTallies.mean_delay,
    "E_H": ReplicationTallies.mean_aoi,
    "E_bar": ReplicationTallies.energy_per_delivered,
    "E_Q": ReplicationTallies.mean_q,
    "Std_Q": ReplicationTallies.std_q,
}


def estimate_metrics(replications: list[ReplicationTallies],
                     confidence: float = 0.95) -> SimResult:
    """Aggregate raw tallies into mean +- t-interval per metric."""
    if len(replications) < 2:
        raise ValueError("need at least 2 replications for confidence intervals")
    horizons = {r.horizon_slots for r in replications}
    if len(horizons) != 1:
        raise ValueError(f"replications have unequal horizons: {sorted(horizons)}")
    r_count = len(replications)
    t_mult = float(student_t.ppf(0.5 + confidence / 2.0, r_count - 1))
    metrics = {}
    for name, func in _METRIC_FUNCS.items():
        vals = np.array([func(r) for r in replications], dtype=float)
        if np.isnan(vals).any():
            metrics[name] = MetricEstimate(math.nan, math.nan, r_count)
            continue
        mean = float(vals.mean())
        half = t_mult * float(vals.std(ddof=1)) / math.sqrt(r_count)
        metrics[name] = MetricEstimate(mean, half, r_count)
    hist = np.sum([r.backlog_hist for r in replications], axis=0)
    return SimResult(metrics=metrics, backlog_hist=hist,
                     replications=r_count, confidence=confidence)
