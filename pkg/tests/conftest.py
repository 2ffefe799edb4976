from __future__ import annotations

import numpy as np
import pytest

from sicslot.acceptance import AcceptanceContext
from sicslot.config import SystemConfig
from sicslot.sic import build_sic_profile, default_gamma_grid


@pytest.fixture(scope="session")
def ctx() -> AcceptanceContext:
    """Shared reference-scenario context; artifacts build lazily."""
    return AcceptanceContext()


@pytest.fixture(scope="session")
def table_config() -> SystemConfig:
    return SystemConfig()


@pytest.fixture(scope="session")
def full_policy(ctx):
    return ctx.policy


@pytest.fixture(scope="session")
def full_profile(ctx):
    return ctx.profile


@pytest.fixture(scope="session")
def full_table(ctx):
    return ctx.table


@pytest.fixture(scope="session")
def small_profile():
    """Cheap profile for unit tests that only need plausible m_h values."""
    return build_sic_profile(n=10, epsilon=0.1, seed=7, trials=20_000,
                             gamma_grid=default_gamma_grid(31.0, points=80))


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
