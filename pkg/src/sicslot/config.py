"""Scenario configuration: parameter container, file parsing and dumping.

Config files are flat ``key = value`` text.  Blank lines and ``#`` comments
are ignored.  Unknown keys are rejected so typos cannot silently fall back
to defaults.  An empty file yields the reference scenario (50 nodes, 500-byte
packets on a 1 MHz channel, see ``DEFAULTS``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


class ConfigError(ValueError):
    """Raised for malformed or physically invalid configuration input."""


@dataclass(frozen=True)
class SystemConfig:
    """All scenario parameters.

    Times are seconds, powers watts, energies joules, rates 1/s.  ``lam`` is
    the per-node message generation rate; its reciprocal is the mean message
    generation time S.
    """

    n: int = 50                      # node count
    lam: float = 10.0                # per-node message generation rate (1/s)
    L: float = 4000.0                # packet length (bits) = 500 bytes
    W: float = 1e6                   # channel bandwidth (Hz)
    T_oh: float = 1e-3               # slot overhead time (s)
    gamma_max: float = 31.0          # max target SNIR (linear)
    epsilon: float = 0.1             # single-transmitter decode-failure target
    P_N: float = dbm_to_watt(-107.0) # noise power (W)
    P_a: float = 1e-3                # active power (W)
    P_d: float = 1e-5                # doze power (W)
    P_tx_max: float = 0.1            # max transmit power (W)
    E_g: float = 1e-5                # message-generation energy (J)
    h_tx: float = 1.0                # node antenna height (m)
    h_rx: float = 4.0                # base-station antenna height (m)
    path_gain_scale: float = 1.0     # calibration factor on the two-ray gain
    r_min: float = 1.0               # near-field exclusion radius (m)
    seed: int = 20240801             # root RNG seed
    mc_trials: int = 100_000         # Monte Carlo trials per (h, gamma) cell

    @property
    def S(self) -> float:
        """Mean message generation time 1/lambda (s)."""
        return 1.0 / self.lam

    @property
    def c(self) -> float:
        """Power-control constant -ln(1 - epsilon)."""
        return -math.log(1.0 - self.epsilon)

    def validate(self) -> "SystemConfig":
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if not self.lam > 0:
            raise ConfigError(f"lam must be > 0, got {self.lam}")
        for name in ("L", "W", "T_oh", "gamma_max"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError(f"epsilon must be in (0, 1), got {self.epsilon}")
        for name in ("P_N", "P_a", "P_d", "P_tx_max", "E_g"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.P_d > self.P_a:
            raise ConfigError(f"P_d ({self.P_d}) must not exceed P_a ({self.P_a})")
        for name in ("h_tx", "h_rx", "path_gain_scale", "r_min"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.mc_trials < 1:
            raise ConfigError(f"mc_trials must be >= 1, got {self.mc_trials}")
        return self

    def with_rate(self, lam: float) -> "SystemConfig":
        return replace(self, lam=lam).validate()


DEFAULTS = SystemConfig()

_INT_KEYS = {"n", "seed", "mc_trials"}

_KEY_UNITS = {
    "n": "nodes",
    "lam": "1/s (mean generation time S = 1/lam)",
    "L": "bits",
    "W": "Hz",
    "T_oh": "s",
    "gamma_max": "linear SNIR",
    "epsilon": "probability",
    "P_N": "W (-107 dBm = 1.9953e-14 W)",
    "P_a": "W",
    "P_d": "W",
    "P_tx_max": "W",
    "E_g": "J",
    "h_tx": "m",
    "h_rx": "m",
    "path_gain_scale": "dimensionless (two-ray gain calibration)",
    "r_min": "m",
    "seed": "RNG seed",
    "mc_trials": "trials per (h, gamma) cell",
}

_FIELD_NAMES = [f.name for f in fields(SystemConfig)]


def parse_config(path: str | Path) -> SystemConfig:
    """Read a flat key = value config file; unknown keys are errors.

    Missing keys take their defaults, so an empty file is the reference
    scenario.
    """
    text = Path(path).read_text()
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _FIELD_NAMES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = int(val) if key in _INT_KEYS else float(val)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {val!r}") from exc
    try:
        return SystemConfig(**values).validate()  # type: ignore[arg-type]
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def dump_config(config: SystemConfig) -> str:
    """Render the resolved configuration; parse(dump(c)) == c.

    Derived constants appear as comments so the dump stays round-trippable.
    """
    lines = ["# resolved sicslot configuration"]
    for name in _FIELD_NAMES:
        value = getattr(config, name)
        rendered = str(value) if name in _INT_KEYS else repr(float(value))
        lines.append(f"{name} = {rendered}  # {_KEY_UNITS[name]}")
    lines.append(f"# derived: c = -ln(1-epsilon) = {config.c:.6g}")
    lines.append(f"# derived: S = 1/lam = {config.S:.6g} s")
    return "\n".join(lines) + "\n"
