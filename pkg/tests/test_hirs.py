import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import balign.hirs as hirs
from balign.channel import irs_gain
from balign.config import SystemConfig
from balign.hirs import (IrsState, Mode, beamwidth_3db, controller_step, literal_phases,
                         matched_phases, moving_std, reflection_matrix, sensing_matrix,
                         wrap_phase)


@given(st.floats(-100, 100))
def test_wrap_phase_range(x):
    w = float(wrap_phase(x))
    assert -np.pi <= w < np.pi
    assert np.isclose(np.exp(1j * w), np.exp(1j * x), atol=1e-9)


def test_state_modes_and_matrices():
    s = IrsState.sensing(4)
    assert s.mode is Mode.SENSING
    np.testing.assert_allclose(sensing_matrix(s), np.eye(4))
    np.testing.assert_allclose(reflection_matrix(s), np.zeros((4, 4)))
    r = IrsState.reflecting([0, np.pi / 2, np.pi, 0])
    assert r.mode is Mode.REFLECTING
    np.testing.assert_allclose(np.diag(reflection_matrix(r)), [1, 1j, -1, 1], atol=1e-12)
    np.testing.assert_allclose(sensing_matrix(r), np.zeros((4, 4)))


def test_partial_beta_splits_power():
    s = IrsState(0.25, np.zeros(3))
    np.testing.assert_allclose(sensing_matrix(s), 0.75 * np.eye(3))
    assert s.mode is Mode.REFLECTING


@pytest.mark.parametrize("beta", [-0.1, 1.5])
def test_beta_range(beta):
    with pytest.raises(ValueError):
        IrsState(beta, np.zeros(2))


def test_beamwidth_64():
    assert np.rad2deg(beamwidth_3db(64)) == pytest.approx(1.586, abs=2e-3)
    with pytest.raises(ValueError):
        beamwidth_3db(0)


def test_literal_rule_is_not_the_maximiser():
    phi = 0.4
    assert irs_gain(phi, IrsState.reflecting(literal_phases(64, phi))) < 64 - 1
    assert irs_gain(phi, IrsState.reflecting(matched_phases(64, phi))) == pytest.approx(64)
    # both rules coincide at broadside
    np.testing.assert_allclose(literal_phases(8, 0.0), matched_phases(8, 0.0))


def test_moving_std():
    assert moving_std([0.1, 0.2], 5) is None
    assert moving_std([9.0, 1, 2, 3, 4, 5], 5) == pytest.approx(np.std([1, 2, 3, 4, 5], ddof=1))
    with pytest.raises(ValueError):
        moving_std([1, 2, 3], 1)


def test_controller_needs_full_window():
    cfg = SystemConfig()
    assert controller_step([0.2] * 4, cfg).mode is Mode.SENSING
    st5 = controller_step([0.2] * 5, cfg)
    assert st5.mode is Mode.REFLECTING
    np.testing.assert_allclose(st5.psi, matched_phases(64, 0.2))


def test_controller_literal_rule():
    cfg = SystemConfig(irs_phase_rule="literal")
    np.testing.assert_allclose(controller_step([0.3] * 5, cfg).psi, literal_phases(64, 0.3))


def test_controller_spread_sensing():
    cfg = SystemConfig()
    assert controller_step([0.0, 0.1, -0.1, 0.2, 0.0], cfg).mode is Mode.SENSING


def test_controller_equality_keeps_sensing(monkeypatch):
    history = [0.0, 0.01, 0.0, 0.01, 0.0]
    spread = moving_std(history, 5)
    monkeypatch.setattr(hirs, "beamwidth_3db", lambda n: spread)
    assert controller_step(history, SystemConfig()).mode is Mode.SENSING
    monkeypatch.setattr(hirs, "beamwidth_3db", lambda n: np.nextafter(spread, 1.0))
    assert controller_step(history, SystemConfig()).mode is Mode.REFLECTING
