"""Line-of-sight link model: attenuations, two-way coefficient, RCS, link budget."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .array import _check, steer
from .config import SPEED_OF_LIGHT, SystemConfig, db_to_lin, lin_to_db
from .hirs import IrsState, reflection_matrix


@dataclass(frozen=True)
class ScenarioTruth:
    theta: float
    phi: float
    distance: float
    tau0: float
    nu0: float
    h_dl: complex
    h_ul: complex


@dataclass(frozen=True)
class LinkBudget:
    wavelength: float
    tx_power: float
    noise_power: float

    def __post_init__(self):
        if min(self.wavelength, self.tx_power, self.noise_power) <= 0:
            raise ValueError("link budget quantities must be positive")

    @classmethod
    def from_config(cls, cfg: SystemConfig) -> "LinkBudget":
        return cls(cfg.wavelength, cfg.tx_power_w, cfg.noise_power_w)


def rcs_bbf(cfg: SystemConfig) -> float:
    """Surface RCS before beamforming from the patch-array aperture model, m^2."""
    lam = cfg.wavelength
    aperture = (lam / 2) * cfg.n_irs_elements
    return 4 * np.pi * aperture**2 * (lam / 2) ** 2 / lam**2


def rcs_model_value(cfg: SystemConfig) -> float:
    """RCS before beamforming used by the link model for ``cfg.rcs_model``."""
    if cfg.rcs_model == "hypothetical":
        return float(db_to_lin(cfg.rcs_hypothetical_dbsm))
    return rcs_bbf(cfg)


def irs_gain(phi: float, reflection) -> float:
    """``|b^T(phi) Phi^H b(phi)|``; ``reflection`` is an IrsState or a matrix."""
    mat = reflection_matrix(reflection) if isinstance(reflection, IrsState) else np.asarray(reflection)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("reflection matrix must be square")
    b = steer(mat.shape[0], phi)
    return float(abs(b @ mat.conj().T @ b))


def two_way_coeff(phi: float, reflection, h_dl: complex, h_ul: complex) -> complex:
    mat = reflection_matrix(reflection) if isinstance(reflection, IrsState) else np.asarray(reflection)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("reflection matrix must be square")
    b = steer(mat.shape[0], phi)
    return complex(h_dl * h_ul * (b @ mat.conj().T @ b))


def rcs_effective(phi: float, reflection, cfg: SystemConfig) -> float:
    return rcs_bbf(cfg) * np.cos(phi) * irs_gain(phi, reflection)


def snr_bbf_linear(distance: float, budget: LinkBudget) -> float:
    if distance <= 0:
        raise ValueError("distance must be positive")
    return budget.wavelength**2 / (4 * np.pi * distance) ** 2 * budget.tx_power / budget.noise_power


def snr_bbf(distance: float, budget: LinkBudget) -> float:
    """UE SNR without beamforming at either end, dB."""
    return float(lin_to_db(snr_bbf_linear(distance, budget)))


def distance_for_snr(snr_db: float, budget: LinkBudget) -> float:
    """Inverse of :func:`snr_bbf`."""
    snr = float(db_to_lin(snr_db))
    return budget.wavelength / (4 * np.pi) * np.sqrt(budget.tx_power / (budget.noise_power * snr))


def make_scenario(distance: float, theta: float, phi: float, speed: float,
                  cfg: SystemConfig, rng: np.random.Generator | None = None) -> ScenarioTruth:
    """Ground-truth LOS parameters for a UE at ``distance`` metres.

    Per-leg phases are ``exp(-j 2 pi fc d / c)``; with ``cfg.random_phases``
    (and an ``rng``) an extra i.i.d. uniform phase is applied to each leg.
    """
    if distance <= 0:
        raise ValueError("distance must be positive")
    theta = float(_check(1, theta))
    phi = float(_check(1, phi))
    lam = cfg.wavelength
    fc = cfg.carrier_hz
    phase = np.exp(-2j * np.pi * fc * distance / SPEED_OF_LIGHT)
    dl_phase = ul_phase = phase
    if cfg.random_phases and rng is not None:
        dl_phase = dl_phase * np.exp(2j * np.pi * rng.random())
        ul_phase = ul_phase * np.exp(2j * np.pi * rng.random())
    h_dl = lam / (4 * np.pi * distance) * dl_phase
    h_ul = np.sqrt(rcs_model_value(cfg) * np.cos(phi) / (4 * np.pi)) / distance * ul_phase
    return ScenarioTruth(
        theta=theta,
        phi=phi,
        distance=float(distance),
        tau0=2 * distance / SPEED_OF_LIGHT,
        nu0=2 * speed * fc / SPEED_OF_LIGHT,
        h_dl=complex(h_dl),
        h_ul=complex(h_ul),
    )
