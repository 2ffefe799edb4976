"""Adaptive slotted random access with an ideal SIC receiver.

The package models the same system twice: a closed-form mean-field
analytic pipeline and a slot-level Monte Carlo simulator, plus the access
policy optimizer and a sweep/validation harness that ties them together.
"""

from .analytic import (
    BacklogModel,
    LtMoments,
    MetricsReport,
    ModelError,
    access_delay,
    aoi_metrics,
    backlog_pdf,
    channel_busy_ratio,
    contention_moments,
    critical_rate,
    energy_per_delivered,
    evaluate,
    idle_moments,
    phi_slot,
    solve_backlog_fixed_point,
    success_probability,
    throughput,
    transforms,
)
from .config import ConfigError, SystemConfig, dump_config, parse_config
from .pathloss import coverage_radius, mean_inverse_gain, two_ray_gain
from .policy import (
    AccessPolicy,
    PolicyFit,
    PolicyPoint,
    build_policy,
    build_policy_table,
    fit_policy_constants,
    optimize_policy,
    slot_duration,
    sum_rate,
)
from .sic import SicProfile, build_sic_profile, estimate_mh, sic_decode_count
from .simulator import (
    SimResult,
    estimate_metrics,
    run_replication,
    run_replications,
    sample_node_distances,
)
from .sweep import SweepSpec, compare_report, knee_point, run_sweep

__version__ = "0.1.0"

__all__ = [
    "AccessPolicy", "BacklogModel", "ConfigError", "LtMoments",
    "MetricsReport", "ModelError", "PolicyFit", "PolicyPoint", "SicProfile",
    "SimResult", "SweepSpec", "SystemConfig", "access_delay", "aoi_metrics",
    "backlog_pdf", "build_policy", "build_policy_table", "build_sic_profile",
    "channel_busy_ratio", "compare_report", "contention_moments",
    "coverage_radius", "critical_rate", "dump_config", "energy_per_delivered",
    "estimate_metrics", "estimate_mh", "evaluate", "fit_policy_constants",
    "idle_moments", "knee_point", "mean_inverse_gain", "optimize_policy",
    "parse_config", "phi_slot", "run_replication", "run_replications",
    "run_sweep", "sample_node_distances", "sic_decode_count", "slot_duration",
    "solve_backlog_fixed_point", "success_probability", "sum_rate",
    "throughput", "transforms", "two_ray_gain",
]
