"""Half-wavelength uniform linear array responses.

Element ``k`` (0-based) of an ``n``-element array carries the phase
``pi * k * sin(angle)``; index ``k`` corresponds to ``m - 1`` in 1-based
notation.
"""

from __future__ import annotations

import numpy as np

HALF_PI = np.pi / 2


def _check(n_antennas: int, angle) -> np.ndarray:
    if int(n_antennas) < 1:
        raise ValueError(f"n_antennas must be >= 1, got {n_antennas}")
    angle = np.asarray(angle, dtype=float)
    # small slack so that +-pi/2 computed in floating point is accepted
    if np.any(np.abs(angle) > HALF_PI + 1e-12) or np.any(~np.isfinite(angle)):
        raise ValueError("angle must lie in [-pi/2, pi/2] radians")
    return angle


def steer(n_antennas: int, angle) -> np.ndarray:
    """Array response vector.

    A scalar angle gives a vector of length ``n_antennas``; an array of
    angles gives a matrix with one column per angle.
    """
    angle = _check(n_antennas, angle)
    k = np.arange(int(n_antennas))
    if angle.ndim == 0:
        return np.exp(1j * np.pi * k * np.sin(angle))
    return np.exp(1j * np.pi * np.outer(k, np.sin(angle)))


def steer_derivative_weighted(n_antennas: int, angle) -> np.ndarray:
    """``diag(0, ..., n-1) @ steer(n, angle)``."""
    k = np.arange(int(n_antennas))
    vec = steer(n_antennas, angle)
    return k * vec if vec.ndim == 1 else k[:, None] * vec


def steer_sin(n_antennas: int, sin_values) -> np.ndarray:
    """Array response parameterised directly by ``sin(angle)``."""
    k = np.arange(int(n_antennas))
    return np.exp(1j * np.pi * np.outer(k, np.atleast_1d(sin_values)))
