"""Hybrid reflecting/sensing surface state and its slot-wise controller."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .array import _check


class Mode(enum.Enum):
    SENSING = "sensing"
    REFLECTING = "reflecting"


def wrap_phase(x):
    """Wrap to [-pi, pi)."""
    return (np.asarray(x) + np.pi) % (2 * np.pi) - np.pi


@dataclass(frozen=True)
class IrsState:
    """Common reflection amplitude ``beta`` and per-element phases ``psi``.

    The controller only ever emits ``beta`` in {0, 1}; other values are
    accepted for library use and classified as reflecting when ``beta > 0``.
    """

    beta: float
    psi: np.ndarray

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        object.__setattr__(self, "psi", np.asarray(self.psi, dtype=float).ravel())

    @property
    def n_elements(self) -> int:
        return self.psi.size

    @property
    def mode(self) -> Mode:
        return Mode.SENSING if self.beta == 0 else Mode.REFLECTING

    @classmethod
    def sensing(cls, n_elements: int) -> "IrsState":
        return cls(0.0, np.zeros(n_elements))

    @classmethod
    def reflecting(cls, psi, beta: float = 1.0) -> "IrsState":
        return cls(beta, psi)


def reflection_matrix(state: IrsState) -> np.ndarray:
    return np.diag(state.beta * np.exp(1j * state.psi))


def sensing_matrix(state: IrsState) -> np.ndarray:
    return (1.0 - state.beta) * np.eye(state.n_elements)


def matched_phases(n_elements: int, angle: float) -> np.ndarray:
    """Phases that maximise ``|b^T(angle) Phi^H b(angle)|``."""
    angle = float(_check(n_elements, angle))
    return wrap_phase(2 * np.pi * np.arange(n_elements) * np.sin(angle))


def literal_phases(n_elements: int, angle: float) -> np.ndarray:
    """Phases of ``diag(b(2 * angle))``; not the gain maximiser."""
    return wrap_phase(np.pi * np.arange(n_elements) * np.sin(2 * angle))


def beamwidth_3db(n_antennas: int) -> float:
    """Half-power beamwidth of a broadside ULA, radians."""
    if n_antennas < 1:
        raise ValueError("n_antennas must be >= 1")
    arg = 2 * 1.391 / (np.pi * n_antennas)
    if arg > 1:
        raise ValueError("beamwidth formula undefined for this array size")
    return float(2 * (np.pi / 2 - np.arccos(arg)))


def moving_std(history: Sequence[float], window: int) -> float | None:
    """Sample std (divisor ``window - 1``) of the last ``window`` estimates."""
    if window < 2:
        raise ValueError("window must be >= 2")
    if len(history) < window:
        return None
    return float(np.std(np.asarray(history[-window:], dtype=float), ddof=1))


def controller_step(history: Sequence[float], cfg) -> IrsState:
    """Choose the surface state for the next slot from past UE angle estimates.

    Reflecting is selected only when the moving std is strictly below the
    3 dB beamwidth; a missing window or equality keeps the surface sensing.
    """
    n_elements = cfg.n_irs_elements
    spread = moving_std(history, cfg.n_window)
    if spread is None or not spread < beamwidth_3db(n_elements):
        return IrsState.sensing(n_elements)
    latest = history[-1]
    if cfg.irs_phase_rule == "literal":
        return IrsState.reflecting(literal_phases(n_elements, latest))
    return IrsState.reflecting(matched_phases(n_elements, latest))
