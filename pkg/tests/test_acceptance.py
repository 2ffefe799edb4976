"""Acceptance criteria for the reference scenario, one test per criterion.

Every tolerance is pinned to its reference value.  Criteria 4 and 7 drive
the full Monte Carlo simulator (10 replications x 1e5 slots per load
point) and dominate the suite's runtime.
"""

import pytest

from sicslot import acceptance as acc


def _run(criterion, ctx):
    result = criterion(ctx)
    status = "PASS" if result.passed else "FAIL"
    print(f"[{status}] criterion {result.cid}: {result.name}")
    for sub in result.subchecks:
        mark = "ok  " if sub.passed else "FAIL"
        print(f"    {mark} {sub.name}: {sub.detail}")
    assert result.passed, f"criterion {result.cid} ({result.name}): {result.detail}"


def test_criterion_1_policy_fit(ctx):
    _run(acc.criterion_policy_fit, ctx)


def test_criterion_2_slot_time(ctx):
    _run(acc.criterion_slot_time, ctx)


def test_criterion_3_critical_constants(ctx):
    _run(acc.criterion_critical_constants, ctx)


@pytest.mark.slow
def test_criterion_4_heavy_traffic_plateau(ctx):
    _run(acc.criterion_heavy_traffic, ctx)


def test_criterion_5_light_traffic_throughput(ctx):
    _run(acc.criterion_light_traffic, ctx)


def test_criterion_6_tradeoff_knee(ctx):
    _run(acc.criterion_tradeoff_knee, ctx)


@pytest.mark.slow
def test_criterion_7_analytic_vs_simulation(ctx):
    _run(acc.criterion_agreement, ctx)


def test_criterion_8_property_suites(ctx):
    _run(acc.criterion_properties, ctx)


def test_criterion_9_coverage_scaling(ctx):
    _run(acc.criterion_coverage, ctx)
