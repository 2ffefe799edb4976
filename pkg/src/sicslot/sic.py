"""Ideal successive interference cancellation and its Monte Carlo profile.

The receiver decodes superposed packets strongest-first; packet ``l`` is
decoded iff every stronger packet has been decoded and its SNIR against the
residual (weaker) interference plus unit noise clears the threshold.  The
mean decoded count with ``h`` simultaneous transmitters, ``m_h(gamma)``, has
no usable closed form and is estimated by simulation over a gamma grid.
Power control scales every fade by S0 = gamma/c with c = -ln(1-epsilon), so
``m_1(gamma) = 1 - epsilon`` for every gamma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator


def sic_decode_count(sorted_snrs, gamma: float) -> int:
    """Number of packets decoded from noise-normalized received SNRs.

    ``sorted_snrs`` must be in descending order (ties allowed).  Decoding
    stops at the first failure: the count is the largest l such that every
    packet j <= l satisfies snr_j / (1 + sum of weaker snrs) >= gamma.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    snrs = np.asarray(sorted_snrs, dtype=float)
    if snrs.ndim != 1:
        raise ValueError("expected a 1-D sequence of received SNRs")
    if snrs.size == 0:
        return 0
    if np.any(np.diff(snrs) > 0):
        raise ValueError("received SNRs must be sorted in descending order")
    tail = float(np.sum(snrs))
    count = 0
    for s in snrs:
        tail -= s
        if s < gamma * (1.0 + tail):
            break
        count += 1
    return count


def decode_counts_from_fades(fades: np.ndarray, gamma: float, c: float) -> np.ndarray:
    """Vectorized decoded counts for a (trials, h) matrix of raw fade gains.

    Works on unscaled Exp(1) fades: with power control the SIC condition
    snr_l/(1+interference) >= gamma reduces to g_l >= c + gamma * (sum of
    weaker fades).
    """
    g = np.sort(fades, axis=1)[:, ::-1]
    weaker = np.cumsum(g[:, ::-1], axis=1)[:, ::-1] - g
    ok = g >= c + gamma * weaker
    return np.cumprod(ok, axis=1).sum(axis=1)


def estimate_mh(h: int, gamma: float, epsilon: float, trials: int,
                rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo estimate of m_h(gamma): (sample mean, standard error).

    Each trial draws h Rayleigh power fades Exp(1), scales them by
    S0 = gamma/c, sorts descending with a random tie-break and applies the
    SIC chain.  h = 0 returns (0, 0) by convention.
    """
    if h < 0:
        raise ValueError(f"h must be >= 0, got {h}")
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if h == 0:
        return 0.0, 0.0
    c = -math.log(1.0 - epsilon)
    s0 = gamma / c
    counts = np.empty(trials, dtype=np.int64)
    chunk = max(1, min(trials, 10_000_000 // max(h, 1)))
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        fades = rng.exponential(1.0, size=(m, h))
        # random tie-break: permute columns before the (stable) sort
        perm = rng.permutation(h)
        snrs = np.sort(fades[:, perm] * s0, axis=1)[:, ::-1]
        tail = np.cumsum(snrs[:, ::-1], axis=1)[:, ::-1] - snrs
        ok = snrs >= gamma * (1.0 + tail)
        counts[done:done + m] = np.cumprod(ok, axis=1).sum(axis=1)
        done += m
    mean = float(counts.mean())
    if trials == 1:
        return mean, 0.0
    return mean, float(counts.std(ddof=1) / math.sqrt(trials))


@dataclass(frozen=True)
class SicProfile:
    """m_h(gamma) table over an ascending gamma grid, with standard errors.

    ``mh[h, j]`` is the mean decoded count with h transmitters at
    ``gamma_grid[j]``; row 0 is identically zero.
    """

    gamma_grid: np.ndarray           # (G,)
    mh: np.ndarray                   # (n+1, G)
    stderr: np.ndarray               # (n+1, G)
    trials: int
    epsilon: float
    seed: int

    @property
    def n_max(self) -> int:
        return self.mh.shape[0] - 1

    def interpolator(self, h: int) -> PchipInterpolator:
        """Monotone cubic interpolant of m_h on the log-gamma axis."""
        return PchipInterpolator(np.log(self.gamma_grid), self.mh[h])

    def mh_at(self, h: int, gamma) -> np.ndarray | float:
        """m_h at arbitrary gamma inside the grid hull (PCHIP in log gamma)."""
        gamma = np.asarray(gamma, dtype=float)
        lo, hi = self.gamma_grid[0], self.gamma_grid[-1]
        if np.any(gamma < lo * (1 - 1e-12)) or np.any(gamma > hi * (1 + 1e-12)):
            raise ValueError(
                f"gamma outside profile grid hull [{lo:.4g}, {hi:.4g}]")
        out = self.interpolator(h)(np.log(np.clip(gamma, lo, hi)))
        return float(out) if out.ndim == 0 else out

    def mh_matrix_at(self, gammas: np.ndarray) -> np.ndarray:
        """m_h for all h at per-k thresholds: returns (n_max+1, len(gammas))."""
        return np.vstack([self.mh_at(h, gammas) for h in range(self.n_max + 1)])


def default_gamma_grid(gamma_max: float, points: int = 200,
                       gamma_min: float = 1e-3) -> np.ndarray:
    """Logarithmic gamma grid; the last point is exactly gamma_max."""
    grid = np.geomspace(gamma_min, gamma_max, points)
    grid[-1] = gamma_max
    return grid


def build_sic_profile(n: int, epsilon: float, seed: int,
                      trials: int = 100_000,
                      gamma_grid: np.ndarray | None = None,
                      gamma_max: float | None = None) -> SicProfile:
    """Estimate m_h(gamma) for all h <= n over the whole gamma grid.

    One batch of (trials, n) fades serves every cell: the prefix of h
    columns is an i.i.d. h-transmitter sample, and for a fixed sorted sample
    the SIC chain survives position l iff gamma <= (g_l - c)/interference,
    so per-position critical thresholds give the counts for every gamma at
    once.  Sharing fades across gamma makes each m_h exactly non-increasing
    in gamma; cells are correlated across gamma but each cell remains an
    unbiased `trials`-sample estimate with a valid standard error.
    """
    if gamma_grid is None:
        if gamma_max is None:
            raise ValueError("need gamma_grid or gamma_max")
        gamma_grid = default_gamma_grid(gamma_max)
    gamma_grid = np.asarray(gamma_grid, dtype=float)
    if gamma_grid.size == 0 or np.any(np.diff(gamma_grid) <= 0) or gamma_grid[0] <= 0:
        raise ValueError("gamma_grid must be ascending and positive")
    c = -math.log(1.0 - epsilon)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    fades = rng.exponential(1.0, size=(trials, n))

    npts = gamma_grid.size
    mh = np.zeros((n + 1, npts))
    m2 = np.zeros((n + 1, npts))
    for h in range(1, n + 1):
        g = np.sort(fades[:, :h], axis=1)[:, ::-1]
        weaker = np.cumsum(g[:, ::-1], axis=1)[:, ::-1] - g
        with np.errstate(divide="ignore", invalid="ignore"):
            crit = (g - c) / weaker
        last = weaker <= 0.0
        crit[last] = np.where(g[last] >= c, np.inf, -np.inf)
        run = np.minimum.accumulate(crit, axis=1)
        # count(gamma) = #{l: run_l >= gamma}; run is non-increasing in l, so
        # count^2 = sum_l (2l+1) 1{run_l >= gamma} gives the second moment.
        for pos in range(h):
            col = np.sort(run[:, pos])
            p_ge = (trials - np.searchsorted(col, gamma_grid, side="left")) / trials
            mh[h] += p_ge
            m2[h] += (2 * pos + 1) * p_ge

    var = np.maximum(m2 - mh ** 2, 0.0)
    stderr = np.sqrt(var / trials) if trials > 1 else np.zeros_like(var)
    return SicProfile(gamma_grid=gamma_grid, mh=mh, stderr=stderr,
                      trials=trials, epsilon=epsilon, seed=seed)
