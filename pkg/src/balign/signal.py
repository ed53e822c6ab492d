"""OFDM pilots and post-DFT observation synthesis at the UE and the BS."""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .array import steer
from .channel import ScenarioTruth, two_way_coeff
from .config import SystemConfig
from .hirs import IrsState, sensing_matrix


@dataclass(frozen=True)
class TimingConstants:
    delta_f: float
    t_cp: float

    @property
    def t_o(self) -> float:
        return 1.0 / self.delta_f + self.t_cp

    @classmethod
    def from_config(cls, cfg: SystemConfig) -> "TimingConstants":
        return cls(cfg.subcarrier_spacing_hz, cfg.cp_duration)

    def check_cp(self, tau0: float) -> bool:
        ok = self.t_cp >= tau0
        if not ok:
            warnings.warn(f"cyclic prefix {self.t_cp:.3e}s shorter than delay {tau0:.3e}s",
                          RuntimeWarning, stacklevel=2)
        return ok


def gen_pilots(n_symbols: int, n_subcarriers: int, power: float,
               rng: np.random.Generator) -> np.ndarray:
    """QPSK pilots of constant power, shape (N, M)."""
    bits = rng.integers(0, 4, size=(n_symbols, n_subcarriers))
    return np.sqrt(power) * np.exp(1j * (np.pi / 4 + np.pi / 2 * bits))


def phase_term(n, m, tau, nu, timing: TimingConstants):
    """``exp(-j pi (m df tau - n To nu))``: UE phase with half two-way delay/Doppler."""
    return np.exp(-1j * np.pi * (np.multiply(m, timing.delta_f * tau)
                                 - np.multiply(n, timing.t_o * nu)))


def phase_term_bs(n, m, tau, nu, timing: TimingConstants):
    """``exp(j 2 pi (n To nu - m df tau))``: full two-way phase at the BS."""
    return np.exp(2j * np.pi * (np.multiply(n, timing.t_o * nu)
                                - np.multiply(m, timing.delta_f * tau)))


def _phase_grid(shape, tau, nu, timing, fn):
    n = np.arange(shape[0])[:, None]
    m = np.arange(shape[1])[None, :]
    return fn(n, m, tau, nu, timing)


def _noise(shape, power, rng):
    if power == 0 or rng is None:
        return np.zeros(shape, dtype=complex)
    return np.sqrt(power / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def synth_ue(truth: ScenarioTruth, irs_state: IrsState, combiner: np.ndarray, f: np.ndarray,
             pilots: np.ndarray, noise_power: float, rng: np.random.Generator | None,
             timing: TimingConstants) -> np.ndarray:
    """UE observations ``y[n, m]`` after sensing and combining, shape (N, M, L_rf)."""
    n_el = irs_state.n_elements
    if combiner.shape[0] != n_el:
        raise ValueError(f"combiner has {combiner.shape[0]} rows, surface has {n_el} elements")
    if f.shape[0] == 0:
        raise ValueError("empty transmit beam")
    V = sensing_matrix(irs_state) @ combiner
    g_dl = truth.h_dl * (steer(f.shape[0], truth.theta) @ f)
    gain = g_dl * (V.conj().T @ steer(n_el, truth.phi))
    t = _phase_grid(pilots.shape, truth.tau0, truth.nu0, timing, phase_term)
    clean = (pilots * t)[..., None] * gain
    return clean + _noise(clean.shape, noise_power, rng)


def synth_bs(truth: ScenarioTruth, irs_state: IrsState, bs_combiner: np.ndarray,
             f: np.ndarray, pilots: np.ndarray, noise_power: float,
             rng: np.random.Generator | None, timing: TimingConstants) -> np.ndarray:
    """BS backscatter observations ``r[n, m]``, shape (N, M, N_rf)."""
    n_a = bs_combiner.shape[0]
    if f.shape[0] != n_a:
        raise ValueError("transmit beam and BS combiner sizes differ")
    a = steer(n_a, truth.theta)
    g_ul = two_way_coeff(truth.phi, irs_state, truth.h_dl, truth.h_ul) * (a @ f)
    gain = g_ul * (bs_combiner.conj().T @ a)
    t = _phase_grid(pilots.shape, truth.tau0, truth.nu0, timing, phase_term_bs)
    clean = (pilots * t)[..., None] * gain
    return clean + _noise(clean.shape, noise_power, rng)


_MAGIC = b"BALOBS1\0"


def dump_observation(path, obs: np.ndarray) -> None:
    """Raw dump: magic, uint32 ndim, uint64 dims, then interleaved little-endian float64."""
    obs = np.asarray(obs, dtype=np.complex128)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", obs.ndim))
        fh.write(struct.pack(f"<{obs.ndim}Q", *obs.shape))
        fh.write(obs.astype("<c16").tobytes())


def load_observation(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if not data.startswith(_MAGIC):
        raise ValueError("not an observation dump")
    pos = len(_MAGIC)
    (ndim,) = struct.unpack_from("<I", data, pos)
    pos += 4
    shape = struct.unpack_from(f"<{ndim}Q", data, pos)
    pos += 8 * ndim
    return np.frombuffer(data, dtype="<c16", offset=pos).reshape(shape).astype(np.complex128)
