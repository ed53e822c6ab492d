"""Fisher information and Cramér-Rao bounds for the UE angle.

Parameter vector ``xi = [g, psi_g, phi, tau, nu]``: gain magnitude and phase,
UE angle (rad), two-way delay (s) and two-way Doppler (Hz). The noiseless UE
observation in slot ``s`` is

    s_s[n, m] = g e^{j psi_g} V_s^H b(phi) x_s[n, m] t_{n,m}(tau, nu)

with ``t`` the UE phase kernel of :func:`balign.signal.phase_term`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .array import steer, steer_derivative_weighted
from .signal import TimingConstants, phase_term

PARAMS = ("g", "psi_g", "phi", "tau", "nu")


class UnboundedCrlbWarning(RuntimeWarning):
    pass


def _grid(shape):
    return np.arange(shape[0])[:, None], np.arange(shape[1])[None, :]


def ue_model(xi, combiners: Sequence[np.ndarray], pilots: Sequence[np.ndarray],
             timing: TimingConstants) -> list[np.ndarray]:
    """Noiseless UE observations for every slot, each of shape (N, M, L)."""
    g, psi, phi, tau, nu = xi
    out = []
    for V, x in zip(combiners, pilots):
        n, m = _grid(x.shape)
        p = V.conj().T @ steer(V.shape[0], phi)
        out.append(g * np.exp(1j * psi) * (x * phase_term(n, m, tau, nu, timing))[..., None] * p)
    return out


def ue_model_derivatives(xi, combiners, pilots, timing) -> list[np.ndarray]:
    """Analytic partials of :func:`ue_model`, each slot of shape (5, N, M, L)."""
    g, psi, phi, tau, nu = xi
    out = []
    for V, x in zip(combiners, pilots):
        n, m = _grid(x.shape)
        base = (x * phase_term(n, m, tau, nu, timing))[..., None]
        rot = np.exp(1j * psi)
        p = V.conj().T @ steer(V.shape[0], phi)
        q = V.conj().T @ steer_derivative_weighted(V.shape[0], phi)
        sig = g * rot * base * p
        d_tau = (-1j * np.pi * timing.delta_f * m)[..., None] * sig
        d_nu = (1j * np.pi * timing.t_o * n)[..., None] * sig
        d_phi = g * rot * base * (1j * np.pi * np.cos(phi) * q)
        out.append(np.stack([rot * base * p, 1j * sig, d_phi,
                             np.broadcast_to(d_tau, sig.shape), np.broadcast_to(d_nu, sig.shape)]))
    return out


def fim(xi, combiners, pilots, sigma2: float, timing: TimingConstants) -> np.ndarray:
    """5x5 Fisher information matrix summed over slots, symbols and subcarriers."""
    if not sigma2 > 0:
        raise ValueError("noise power must be positive")
    total = np.zeros((5, 5))
    for d in ue_model_derivatives(xi, combiners, pilots, timing):
        flat = d.reshape(5, -1)
        total += np.real(flat.conj() @ flat.T)
    total = 2.0 / sigma2 * total
    return 0.5 * (total + total.T)


def crlb_phi_numeric(info: np.ndarray) -> float:
    """Angle entry of the inverse FIM (all other parameters as nuisance)."""
    d = np.sqrt(np.diag(info))
    if np.any(d == 0):
        return math.inf
    scaled = info / np.outer(d, d)
    try:
        inv = np.linalg.inv(scaled)
    except np.linalg.LinAlgError:
        return math.inf
    value = inv[2, 2] / d[2] ** 2
    return float(value) if value > 0 else math.inf


@dataclass
class CrlbAccumulators:
    """Running sums over slots for the closed-form angle bound."""

    phi: float
    n_elements: int
    c_phi: float = 0.0
    c_tilde: complex = 0j
    c_tilde2: float = 0.0
    n_slots: int = 0

    def add(self, V: np.ndarray) -> None:
        b = steer(self.n_elements, self.phi)
        bt = steer_derivative_weighted(self.n_elements, self.phi)
        p = V.conj().T @ b
        q = V.conj().T @ bt
        self.c_phi += float(np.real(p.conj() @ p))
        self.c_tilde += complex(q.conj() @ p)
        self.c_tilde2 += float(np.real(q.conj() @ q))
        self.n_slots += 1

    def bound(self, g: float, sigma2: float, power: float, n_symbols: int,
              n_subcarriers: int, exact: bool = False) -> float:
        """Angle variance bound, rad^2.

        ``exact=True`` drops the ``3 (1 - cos phi)^2 + 1`` weight on the real
        part of ``c_tilde``; the result then equals :func:`crlb_phi_numeric`
        for constant-power pilots at every angle.
        """
        phi = self.phi
        bracket = 1.0 if exact else 3.0 * (1.0 - np.cos(phi)) ** 2 + 1.0
        det = (self.c_phi * self.c_tilde2 - self.c_tilde.real ** 2 * bracket
               - self.c_tilde.imag ** 2)
        den = 2 * n_subcarriers * n_symbols * power * g**2 * np.pi**2 * np.cos(phi) ** 2 * det
        if not den > 0:
            warnings.warn("closed-form angle bound is unbounded for this configuration",
                          UnboundedCrlbWarning, stacklevel=2)
            return math.inf
        return float(self.c_phi * sigma2 / den)


def crlb_phi_closed(xi, combiners, pilot_power: float, timing: TimingConstants | None = None,
                    *, n_symbols: int, n_subcarriers: int, sigma2: float,
                    exact: bool = False) -> float:
    """Closed-form approximate bound on the angle variance, rad^2.

    Returns ``inf`` (with :class:`UnboundedCrlbWarning`) when the denominator
    is not positive. ``timing`` is accepted for symmetry with :func:`fim`;
    the closed form does not depend on it.
    """
    acc = CrlbAccumulators(float(xi[2]), combiners[0].shape[0])
    for V in combiners:
        acc.add(V)
    return acc.bound(float(xi[0]), sigma2, pilot_power, n_symbols, n_subcarriers, exact)
