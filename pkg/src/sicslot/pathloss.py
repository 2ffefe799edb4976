"""Two-ray ground path loss, coverage radius and the mean inverse gain."""

from __future__ import annotations

from scipy.integrate import quad

from .config import SystemConfig


def two_ray_gain(r: float, config: SystemConfig) -> float:
    """Deterministic path gain at distance r (far-field d^-4 law).

    ``path_gain_scale`` is a calibration knob on top of the plain
    (h_tx*h_rx)^2 / r^4 asymptote.
    """
    if not r > 0:
        raise ValueError(f"distance must be > 0, got {r}")
    return config.path_gain_scale * (config.h_tx * config.h_rx) ** 2 / r ** 4


def coverage_radius(config: SystemConfig, tol: float = 0.1) -> float:
    """Largest R at which a cell-edge node can still meet power control.

    The worst case is a node at distance R targeting gamma_max: it needs
    G_d(R) * P_tx_max / P_N >= gamma_max / c.  Solved by bisection to
    ``tol`` meters (G_d is monotone decreasing).
    """
    target = config.gamma_max / config.c

    def margin(r: float) -> float:
        return two_ray_gain(r, config) * config.P_tx_max / config.P_N - target

    lo = 1.0
    if margin(lo) < 0:
        raise ValueError("coverage inequality unsatisfiable even at R = 1 m")
    hi = 2.0 * lo
    while margin(hi) >= 0:
        hi *= 2.0
        if hi > 1e9:
            raise ValueError("coverage radius exceeds 1e9 m; check parameters")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if margin(mid) >= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def mean_inverse_gain(config: SystemConfig, radius: float) -> float:
    """Area-uniform average of 1/G_d over the cell, excluding r < r_min.

    This is the expectation of the per-node power-control boost for nodes
    scattered uniformly over the disc of the given radius.
    """
    if radius <= config.r_min:
        raise ValueError(f"radius {radius} must exceed r_min {config.r_min}")

    def integrand(r: float) -> float:
        return (1.0 / two_ray_gain(r, config)) * (2.0 * r / radius ** 2)

    value, _ = quad(integrand, config.r_min, radius, epsrel=1e-8, limit=200)
    return value


def tx_power(r: float, gamma: float, config: SystemConfig) -> float:
    """Transmit power a node at distance r uses for decode threshold gamma."""
    return config.P_N * gamma / (config.c * two_ray_gain(r, config))


def mean_tx_power(gamma: float, config: SystemConfig, radius: float) -> float:
    """Mean transmit power over uniformly scattered nodes at threshold gamma."""
    return config.P_N * (gamma / config.c) * mean_inverse_gain(config, radius)


def required_radius_closed_form(config: SystemConfig) -> float:
    """d^-4 closed form of the coverage radius, for cross-checking."""
    num = config.path_gain_scale * (config.h_tx * config.h_rx) ** 2
    return (num * config.P_tx_max * config.c /
            (config.P_N * config.gamma_max)) ** 0.25


def scaling_check(config: SystemConfig, power_factor: float = 16.0) -> tuple[float, float]:
    """Radius ratio under a transmit-power scale; d^-4 gives factor^(1/4)."""
    from dataclasses import replace

    base = coverage_radius(config, tol=1e-4)
    boosted = coverage_radius(
        replace(config, P_tx_max=config.P_tx_max * power_factor), tol=1e-4)
    return boosted / base, power_factor ** 0.25


__all__ = [
    "two_ray_gain", "coverage_radius", "mean_inverse_gain", "tx_power",
    "mean_tx_power", "required_radius_closed_form", "scaling_check",
]
