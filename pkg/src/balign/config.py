"""System parameters and simulation knobs."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def db_to_lin(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def lin_to_db(x):
    return 10.0 * np.log10(x)


class ConfigError(ValueError):
    """Raised when a configuration value is out of range or inconsistent."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


@dataclass(frozen=True)
class SystemConfig:
    """Link parameters (mmWave 60 GHz setup) plus simulation-only knobs.

    Defaults are the desk-scale configuration: 256 subcarriers and a
    181 x 11 x 11 grid. :meth:`full_scale` returns the 2048-subcarrier,
    400 x 20 x 20 variant.
    """

    carrier_hz: float = 60e9
    n_subcarriers: int = 256
    subcarrier_spacing_hz: float = 480e3
    n_symbols: int = 14
    cp_fraction: float = 0.07
    n_bs_antennas: int = 64
    n_irs_elements: int = 64
    n_bs_rf: int = 4
    n_ue_rf: int = 4
    tx_power_w: float = 1e-3
    noise_power_w: float = dbm_to_watt(-84.0)
    n_window: int = 5
    n_slots: int = 32

    # estimator grid
    n_grid_angle: int = 181
    n_grid_delay: int = 11
    n_grid_doppler: int = 11
    fov_deg: float = 87.0
    max_doppler_hz: float = 20e3

    # codebooks
    n_sectors_ue: int = 16
    n_sectors_bs: int = 16
    design_grid_size: int = 128
    ripple_db: float = 3.0
    max_design_iter: int = 500
    design_tol: float = 1e-6

    # scenario
    distance_m: float = 10.0
    speed_mps: float = 0.0
    random_phases: bool = False

    # behaviour switches
    tx_mode: str = "omni"  # "omni" | "sector"
    irs_phase_rule: str = "matched"  # "matched" | "literal"
    bs_reflecting_only: bool = False
    irs_control: bool = True
    rcs_model: str = "analytic"  # "analytic" | "hypothetical" | "metallic"
    rcs_hypothetical_dbsm: float = -5.0

    def __post_init__(self):
        self.validate()

    # derived quantities
    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def cp_duration(self) -> float:
        return self.cp_fraction / self.subcarrier_spacing_hz

    @property
    def symbol_duration(self) -> float:
        return 1.0 / self.subcarrier_spacing_hz + self.cp_duration

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def full_scale(cls, **changes) -> "SystemConfig":
        base = dict(n_subcarriers=2048, n_grid_angle=400, n_grid_delay=20,
                    n_grid_doppler=20)
        base.update(changes)
        return cls(**base)

    def validate(self) -> None:
        positive_ints = ("n_subcarriers", "n_symbols", "n_bs_antennas", "n_irs_elements",
                         "n_bs_rf", "n_ue_rf", "n_slots", "n_grid_angle", "n_grid_delay",
                         "n_grid_doppler", "n_sectors_ue", "n_sectors_bs",
                         "design_grid_size", "max_design_iter")
        for name in positive_ints:
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}", name)
        positive = ("carrier_hz", "subcarrier_spacing_hz", "tx_power_w", "noise_power_w",
                    "distance_m", "ripple_db", "design_tol")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}", name)
        if not 0 <= self.cp_fraction < 1:
            raise ConfigError("cp_fraction must lie in [0, 1)", "cp_fraction")
        if self.n_window < 2:
            raise ConfigError("n_window must be at least 2", "n_window")
        if not 0 < self.fov_deg <= 90:
            raise ConfigError("fov_deg must lie in (0, 90]", "fov_deg")
        if self.max_doppler_hz < 0:
            raise ConfigError("max_doppler_hz must be nonnegative", "max_doppler_hz")
        if self.speed_mps < 0:
            raise ConfigError("speed_mps must be nonnegative", "speed_mps")
        if self.n_ue_rf > self.n_sectors_ue:
            raise ConfigError("n_ue_rf cannot exceed n_sectors_ue", "n_ue_rf")
        if self.n_bs_rf > self.n_sectors_bs:
            raise ConfigError("n_bs_rf cannot exceed n_sectors_bs", "n_bs_rf")
        choices = {"tx_mode": ("omni", "sector"), "irs_phase_rule": ("matched", "literal"),
                   "rcs_model": ("analytic", "hypothetical", "metallic")}
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}",
                                  name)


@dataclass(frozen=True)
class ParamGrid:
    """Search grid for (angle, delay, Doppler); delays/Dopplers in two-way units."""

    angles: np.ndarray
    delays: np.ndarray
    dopplers: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("angles", "delays", "dopplers"):
            values = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if values.size == 0:
                raise ConfigError(f"grid axis {name} is empty", name)
            if np.any(np.diff(values) < 0):
                raise ConfigError(f"grid axis {name} must be sorted", name)
            object.__setattr__(self, name, values)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.angles.size, self.delays.size, self.dopplers.size)

    @classmethod
    def from_config(cls, cfg: SystemConfig) -> "ParamGrid":
        fov = np.deg2rad(cfg.fov_deg)
        return cls(
            angles=np.linspace(-fov, fov, cfg.n_grid_angle),
            delays=np.linspace(0.0, cfg.cp_duration, cfg.n_grid_delay),
            dopplers=np.linspace(-cfg.max_doppler_hz, cfg.max_doppler_hz, cfg.n_grid_doppler),
        )

    @property
    def angle_step(self) -> float:
        return float(self.angles[1] - self.angles[0]) if self.angles.size > 1 else 0.0
