"""Flat-top sector codebooks and random hybrid combiners.

Codeword ``u`` has receive pattern ``|u^H a(angle)|``. Sectors split
``[-fov, fov]`` into intervals of equal width in ``sin(angle)``, so every
sector spans the same number of array beamwidths.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .array import steer, steer_sin
from .config import ConfigError, SystemConfig


@dataclass(frozen=True)
class Codebook:
    codewords: np.ndarray  # (n_antennas, K), unit-norm columns
    sectors: np.ndarray  # (K, 2) angle intervals in radians
    converged: np.ndarray = field(default=None)  # (K,) bool

    def __post_init__(self):
        cw = np.asarray(self.codewords, dtype=complex)
        if cw.ndim == 1:
            cw = cw[:, None]
        object.__setattr__(self, "codewords", cw)
        object.__setattr__(self, "sectors", np.asarray(self.sectors, dtype=float).reshape(-1, 2))
        if self.converged is None:
            object.__setattr__(self, "converged", np.ones(cw.shape[1], dtype=bool))
        if self.sectors.shape[0] != cw.shape[1]:
            raise ValueError("one sector per codeword required")

    @property
    def n_antennas(self) -> int:
        return self.codewords.shape[0]

    @property
    def size(self) -> int:
        return self.codewords.shape[1]

    def sector_of(self, angle: float) -> int:
        """Index of the sector containing ``angle`` (clipped to the edge sectors)."""
        idx = np.searchsorted(self.sectors[:, 1], angle, side="left")
        return int(min(idx, self.size - 1))

    def pattern(self, angles) -> np.ndarray:
        """Power gain ``|u_k^H a(angle)|^2``, shape (len(angles), K)."""
        a = steer(self.n_antennas, np.atleast_1d(angles))
        return np.abs(a.T @ self.codewords.conj()) ** 2

    def to_json(self) -> str:
        doc = {
            "n_antennas": self.n_antennas,
            "sectors": self.sectors.tolist(),
            "converged": self.converged.tolist(),
            "codewords": [[[float(z.real), float(z.imag)] for z in col]
                          for col in self.codewords.T],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Codebook":
        doc = json.loads(text)
        cols = [np.array([complex(re, im) for re, im in col]) for col in doc["codewords"]]
        return cls(np.stack(cols, axis=1), np.array(doc["sectors"]),
                   np.array(doc.get("converged", [True] * len(cols)), dtype=bool))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "Codebook":
        return cls.from_json(Path(path).read_text())


def sector_edges(n_sectors: int, fov_deg: float) -> np.ndarray:
    """Sector boundaries (radians), uniform in ``sin(angle)``."""
    s = np.sin(np.deg2rad(fov_deg))
    return np.arcsin(np.linspace(-s, s, n_sectors + 1))


def _design_one(dictionary, sin_grid, lo, hi, cell, max_iter, tol):
    """Alternating projections between the magnitude mask and the array range space."""
    inside = (sin_grid >= lo) & (sin_grid <= hi)
    # one-cell don't-care band on each side of the sector
    care = ~((sin_grid > lo - cell - 1e-12) & (sin_grid < lo)) & \
           ~((sin_grid > hi) & (sin_grid < hi + cell + 1e-12))
    if not inside.any():
        # sector narrower than the grid: pin the nearest grid cell
        inside = np.zeros_like(inside)
        inside[np.argmin(np.abs(sin_grid - (lo + hi) / 2))] = True
    target = inside.astype(float)
    pinv = np.linalg.pinv(dictionary.conj().T)
    n = dictionary.shape[0]
    # linear phase centred on the middle element avoids pi jumps inside the sector
    u = pinv @ (target * np.exp(-1j * np.pi * (n - 1) / 2 * sin_grid))
    converged = False
    for _ in range(max_iter):
        resp = dictionary.conj().T @ u
        desired = np.where(care, target * np.exp(1j * np.angle(resp)), resp)
        u_new = pinv @ desired
        change = np.linalg.norm(u_new - u) / max(np.linalg.norm(u_new), 1e-300)
        u = u_new
        if change < tol:
            converged = True
            break
    return u / np.linalg.norm(u), converged


def design_flattop(n_antennas: int, n_sectors: int, fov_deg: float,
                   angle_grid_size: int | None = None, max_iter: int = 500,
                   tol: float = 1e-6) -> Codebook:
    """Design ``n_sectors`` non-overlapping flat-top beams over ``[-fov, fov]``.

    The design grid is uniform in ``sin(angle)`` over the whole visible
    region with ``angle_grid_size`` points (default ``2 * n_antennas``).
    A codeword that fails to reach ``tol`` within ``max_iter`` iterations is
    still returned (normalised) with its ``converged`` flag cleared.
    """
    if n_sectors < 1:
        raise ConfigError("n_sectors must be >= 1", "n_sectors")
    if not 0 <= fov_deg <= 90:
        raise ConfigError("fov_deg must lie in [0, 90]", "fov_deg")
    edges = sector_edges(n_sectors, fov_deg)
    sectors = np.column_stack((edges[:-1], edges[1:]))
    if fov_deg == 0:
        u = steer(n_antennas, 0.0) / np.sqrt(n_antennas)
        return Codebook(np.tile(u[:, None], (1, n_sectors)), sectors)
    sin_grid = np.linspace(-1, 1, angle_grid_size or 2 * n_antennas)
    cell = sin_grid[1] - sin_grid[0]
    dictionary = steer_sin(n_antennas, sin_grid)
    words, flags = [], []
    for lo, hi in np.sin(sectors):
        u, ok = _design_one(dictionary, sin_grid, lo, hi, cell, max_iter, tol)
        words.append(u)
        flags.append(ok)
    return Codebook(np.stack(words, axis=1), sectors, np.array(flags))


def _wrapped_distance(s, lo, hi):
    """Distance in ``sin`` units from ``s`` to ``[lo, hi]``; ``sin = +-1`` coincide."""
    d = np.full(np.shape(s), np.inf)
    for shift in (-2.0, 0.0, 2.0):
        x = np.asarray(s) + shift
        d = np.minimum(d, np.maximum(lo - x, 0) + np.maximum(x - hi, 0))
    return d


def pattern_metrics(codebook: Codebook, step_deg: float = 1.0):
    """Per-codeword in-sector ripple and out-of-sector leakage, both in dB.

    Evaluated on a ``step_deg`` angle grid over the field of view. Ripple is
    max/min gain over the sector interior, excluding ``1/n`` (half a
    beamwidth in ``sin`` units) of roll-off at each edge. Leakage is the
    out-of-sector peak over the in-sector mean, excluding a ``2/n`` guard band
    around the sector; the guard wraps around ``sin = +-1``.
    """
    n = codebook.n_antennas
    lim = np.floor(np.rad2deg(np.max(np.abs(codebook.sectors))))
    angles = np.deg2rad(np.arange(-lim, lim + 0.5 * step_deg, step_deg))
    gains = codebook.pattern(angles)
    s = np.sin(angles)
    ripple, leakage = [], []
    for k, (lo, hi) in enumerate(np.sin(codebook.sectors)):
        g = gains[:, k]
        inside = (s >= lo) & (s <= hi)
        core = (s >= lo + 1 / n) & (s <= hi - 1 / n)
        outside = _wrapped_distance(s, lo, hi) > 2 / n
        mid = np.arcsin(0.5 * (lo + hi))
        mean_in = g[inside].mean() if inside.any() else codebook.pattern([mid])[0, k]
        ripple.append(10 * np.log10(g[core].max() / g[core].min()) if core.any() else 0.0)
        leakage.append(10 * np.log10(g[outside].max() / mean_in) if outside.any() else -np.inf)
    return np.array(ripple), np.array(leakage)


def sample_combiner(codebook: Codebook, n_rf: int, rng: np.random.Generator) -> np.ndarray:
    """``n_rf`` distinct codewords drawn uniformly, stacked and scaled by ``1/sqrt(n_rf)``."""
    if not 1 <= n_rf <= codebook.size:
        raise ConfigError(f"n_rf={n_rf} must lie in [1, {codebook.size}]", "n_rf")
    idx = rng.choice(codebook.size, size=n_rf, replace=False)
    return codebook.codewords[:, idx] / np.sqrt(n_rf)


def tx_beam(cfg: SystemConfig, theta: float | None = None,
            codebook: Codebook | None = None) -> np.ndarray:
    """Unit-norm BS transmit vector ``f``.

    ``omni``: a single flat-top beam across the field of view. ``sector``:
    the BS codeword whose sector contains ``theta``. The returned vector is
    conjugated so that ``a^T(theta) f`` follows the designed pattern.
    """
    if cfg.tx_mode == "sector":
        if theta is None:
            raise ValueError("sector transmit mode needs the true angle")
        if codebook is None:
            codebook = design_flattop(cfg.n_bs_antennas, cfg.n_sectors_bs, cfg.fov_deg,
                                      cfg.design_grid_size, cfg.max_design_iter, cfg.design_tol)
        u = codebook.codewords[:, codebook.sector_of(theta)]
    else:
        u = design_flattop(cfg.n_bs_antennas, 1, cfg.fov_deg, cfg.design_grid_size,
                           cfg.max_design_iter, cfg.design_tol).codewords[:, 0]
    return u.conj()
