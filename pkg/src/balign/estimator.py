"""Multi-slot grid maximum-likelihood estimation of (delay, Doppler, angle).

Channel gains are eliminated in closed form. At the UE the gain is common to
all slots; at the BS it may change from slot to slot with the surface state,
so it is eliminated per slot. Delays and Dopplers are two-way quantities at
both ends. The UE phase model carries the half factors.

Grid objectives are assembled incrementally: the phase kernel is separable
in (symbol, subcarrier), so every new slot costs two small matrix products
per grid axis and one projection onto the angle dictionary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .array import steer
from .config import ParamGrid
from .signal import TimingConstants


@dataclass(frozen=True)
class EstimateRecord:
    tau_hat: float
    nu_hat: float
    angle_hat: float
    g_hat: complex
    objective: float
    index: tuple[int, int, int] = (0, 0, 0)


@dataclass
class SlotData:
    pilots: np.ndarray  # (N, M)
    combiner: np.ndarray  # (n_antennas, n_rf), already including the sensing matrix at the UE
    obs: np.ndarray  # (N, M, n_rf)

    @property
    def pilot_energy(self) -> float:
        return float(np.sum(np.abs(self.pilots) ** 2))


def _kernels(grid: ParamGrid, shape, timing: TimingConstants, scale: float):
    """Conjugated phase kernels split into delay (Nt, M) and Doppler (Nv, N) factors."""
    n = np.arange(shape[0])
    m = np.arange(shape[1])
    e_tau = np.exp(1j * scale * np.pi * np.outer(grid.delays, m) * timing.delta_f)
    e_nu = np.exp(-1j * scale * np.pi * np.outer(grid.dopplers, n) * timing.t_o)
    return e_tau, e_nu


def _matched(slot: SlotData, e_tau, e_nu) -> np.ndarray:
    """``z[t, v, :] = sum_{n,m} conj(x t_{n,m}) obs[n, m, :]`` over the grid."""
    w = slot.pilots.conj()[..., None] * slot.obs  # (N, M, L)
    n_sym, n_sc, n_rf = w.shape
    tmp = e_tau @ w.transpose(1, 0, 2).reshape(n_sc, n_sym * n_rf)  # (Nt, N*L)
    tmp = tmp.reshape(-1, n_sym, n_rf)
    return np.einsum("vn,tnl->tvl", e_nu, tmp)


def _point_matched(slot: SlotData, tau, nu, timing, scale) -> np.ndarray:
    n = np.arange(slot.pilots.shape[0])[:, None]
    m = np.arange(slot.pilots.shape[1])[None, :]
    conj_t = np.exp(1j * scale * np.pi * (m * timing.delta_f * tau - n * timing.t_o * nu))
    return np.einsum("nm,nml->l", conj_t * slot.pilots.conj(), slot.obs)


class _GridCache:
    def __init__(self, grid):
        self.grid = grid
        self.used = 0
        self.kernels = None
        self.value = None


class UeAccumulator:
    """Running UE statistics over all sensing slots of an episode.

    ``v_sum`` is ``sum_s ||x_s||^2 V_s V_s^H``; the correlation vectors
    ``c(tau, nu)`` are rebuilt from the slot archive on demand.
    """

    phase_scale = 1.0  # half of the two-way phase

    def __init__(self, n_elements: int, timing: TimingConstants):
        self.n_elements = n_elements
        self.timing = timing
        self.slots: list[SlotData] = []
        self.v_sum = np.zeros((n_elements, n_elements), dtype=complex)
        self._caches: dict[int, _GridCache] = {}

    def __len__(self):
        return len(self.slots)

    def add_slot(self, pilots, combiner, obs) -> None:
        slot = SlotData(np.asarray(pilots), np.asarray(combiner), np.asarray(obs))
        if slot.combiner.shape[0] != self.n_elements:
            raise ValueError("combiner row count differs from array size")
        if slot.obs.shape != slot.pilots.shape + (slot.combiner.shape[1],):
            raise ValueError("observation shape does not match pilots and combiner")
        self.slots.append(slot)
        self.v_sum += slot.pilot_energy * slot.combiner @ slot.combiner.conj().T

    def c_vector(self, tau: float, nu: float) -> np.ndarray:
        return sum(s.combiner @ _point_matched(s, tau, nu, self.timing, self.phase_scale)
                   for s in self.slots)

    def c_grid(self, grid: ParamGrid) -> np.ndarray:
        """``c`` on every (delay, Doppler) grid cell, shape (n_elements, Nt, Nv)."""
        cache = self._caches.setdefault(id(grid), _GridCache(grid))
        if cache.value is None:
            cache.value = np.zeros((self.n_elements,) + grid.shape[1:], dtype=complex)
        for slot in self.slots[cache.used:]:
            if cache.kernels is None:
                cache.kernels = _kernels(grid, slot.pilots.shape, self.timing, self.phase_scale)
            z = _matched(slot, *cache.kernels)
            cache.value += np.einsum("al,tvl->atv", slot.combiner, z)
        cache.used = len(self.slots)
        return cache.value


def _quad(mat, vecs) -> np.ndarray:
    """Real part of ``v^H mat v`` for each column of ``vecs``."""
    return np.real(np.einsum("ak,ab,bk->k", vecs.conj(), mat, vecs))


def _safe_ratio(num, den):
    den = np.asarray(den, dtype=float)
    ok = den > 0
    out = np.zeros(np.broadcast_shapes(np.shape(num), den.shape))
    np.divide(num, den, out=out, where=np.broadcast_to(ok, out.shape))
    return out


def ue_objective(tau: float, nu: float, phi: float, acc: UeAccumulator) -> float:
    b = steer(acc.n_elements, phi)
    den = float(np.real(b.conj() @ acc.v_sum @ b))
    if den <= 0:
        return 0.0
    return float(abs(b.conj() @ acc.c_vector(tau, nu)) ** 2 / den)


def ue_objective_grid(acc: UeAccumulator, grid: ParamGrid) -> np.ndarray:
    """UE objective on the full grid, shape (n_angle, n_delay, n_doppler)."""
    B = steer(acc.n_elements, grid.angles)
    den = _quad(acc.v_sum, B)
    c = acc.c_grid(grid)
    num = np.abs(np.tensordot(B.conj(), c, axes=(0, 0))) ** 2
    return _safe_ratio(num, den[:, None, None])


def _argmax(obj: np.ndarray) -> tuple[int, int, int]:
    # np.argmax returns the first maximiser in C order: lowest (angle, delay, Doppler) index
    return tuple(int(i) for i in np.unravel_index(np.argmax(obj), obj.shape))


def ue_estimate(acc: UeAccumulator, grid: ParamGrid) -> EstimateRecord:
    if not acc.slots:
        raise ValueError("UE archive is empty")
    obj = ue_objective_grid(acc, grid)
    ia, it, iv = _argmax(obj)
    b = steer(acc.n_elements, grid.angles[ia])
    den = float(np.real(b.conj() @ acc.v_sum @ b))
    g = complex(b.conj() @ acc.c_grid(grid)[:, it, iv] / den) if den > 0 else 0j
    return EstimateRecord(float(grid.delays[it]), float(grid.dopplers[iv]),
                          float(grid.angles[ia]), g, float(obj[ia, it, iv]), (ia, it, iv))


class BsArchive:
    """BS slot archive with a per-slot-gain objective accumulated over slots."""

    phase_scale = 2.0  # full two-way phase

    def __init__(self, n_antennas: int, timing: TimingConstants):
        self.n_antennas = n_antennas
        self.timing = timing
        self.slots: list[SlotData] = []
        self._caches: dict[int, _GridCache] = {}

    def __len__(self):
        return len(self.slots)

    def add_slot(self, pilots, combiner, obs) -> None:
        slot = SlotData(np.asarray(pilots), np.asarray(combiner), np.asarray(obs))
        if slot.combiner.shape[0] != self.n_antennas:
            raise ValueError("combiner row count differs from array size")
        if slot.obs.shape != slot.pilots.shape + (slot.combiner.shape[1],):
            raise ValueError("observation shape does not match pilots and combiner")
        self.slots.append(slot)

    def slot_terms(self, slot: SlotData, tau, nu, theta):
        """Numerator ``a^H c_s`` and denominator ``a^H U_s a`` for one slot."""
        a = steer(self.n_antennas, theta)
        c = slot.combiner @ _point_matched(slot, tau, nu, self.timing, self.phase_scale)
        u_a = slot.combiner.conj().T @ a
        return complex(a.conj() @ c), slot.pilot_energy * float(np.real(u_a.conj() @ u_a))

    def objective_grid(self, grid: ParamGrid) -> np.ndarray:
        cache = self._caches.setdefault(id(grid), _GridCache(grid))
        if cache.value is None:
            cache.value = np.zeros(grid.shape)
        if cache.used < len(self.slots):
            A = steer(self.n_antennas, grid.angles)
            for slot in self.slots[cache.used:]:
                if cache.kernels is None:
                    cache.kernels = _kernels(grid, slot.pilots.shape, self.timing,
                                             self.phase_scale)
                z = _matched(slot, *cache.kernels)  # (Nt, Nv, L)
                proj = slot.combiner.conj().T @ A  # U^H a, (L, Na_grid)
                num = np.abs(np.einsum("lk,tvl->ktv", proj.conj(), z)) ** 2
                den = slot.pilot_energy * np.sum(np.abs(proj) ** 2, axis=0)
                cache.value += _safe_ratio(num, den[:, None, None])
            cache.used = len(self.slots)
        return cache.value


def bs_objective(tau: float, nu: float, theta: float, archive: BsArchive) -> float:
    total = 0.0
    for slot in archive.slots:
        num, den = archive.slot_terms(slot, tau, nu, theta)
        if den > 0:
            total += abs(num) ** 2 / den
    return total


def bs_slot_gains(archive: BsArchive, tau: float, nu: float, theta: float) -> np.ndarray:
    """Per-slot ML gains ``a^H c_s / (a^H U_s a)`` at a given parameter point."""
    gains = []
    for slot in archive.slots:
        num, den = archive.slot_terms(slot, tau, nu, theta)
        gains.append(num / den if den > 0 else 0j)
    return np.array(gains)


def bs_estimate(archive: BsArchive, grid: ParamGrid) -> EstimateRecord:
    if not archive.slots:
        raise ValueError("BS archive is empty")
    obj = archive.objective_grid(grid)
    ia, it, iv = _argmax(obj)
    tau, nu, theta = float(grid.delays[it]), float(grid.dopplers[iv]), float(grid.angles[ia])
    g = bs_slot_gains(archive, tau, nu, theta)[-1]
    return EstimateRecord(tau, nu, theta, complex(g), float(obj[ia, it, iv]), (ia, it, iv))
