import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from balign.channel import (LinkBudget, distance_for_snr, irs_gain, make_scenario, rcs_bbf,
                            rcs_effective, rcs_model_value, snr_bbf, two_way_coeff)
from balign.config import SPEED_OF_LIGHT, SystemConfig, lin_to_db
from balign.hirs import IrsState, matched_phases


@pytest.fixture(scope="module")
def cfg():
    return SystemConfig()


def test_rcs_value(cfg):
    # pi La^2 lambda^2 / 4 for a half-wavelength patch array
    expected = np.pi * 64**2 * cfg.wavelength**2 / 4
    assert rcs_bbf(cfg) == pytest.approx(expected, rel=1e-12)
    assert rcs_bbf(cfg) == pytest.approx(0.0803, abs=5e-4)
    assert lin_to_db(rcs_bbf(cfg)) == pytest.approx(-10.95, abs=0.02)


def test_hypothetical_and_metallic_rcs(cfg):
    assert rcs_model_value(cfg.replace(rcs_model="hypothetical")) == pytest.approx(10**-0.5)
    assert rcs_model_value(cfg.replace(rcs_model="metallic")) == rcs_bbf(cfg)


def test_snr_at_ten_metres(cfg):
    assert snr_bbf(10.0, LinkBudget.from_config(cfg)) == pytest.approx(-4.0, abs=0.05)


@given(st.floats(-40, 30))
def test_distance_for_snr_inverts(snr_db):
    budget = LinkBudget.from_config(SystemConfig())
    assert snr_bbf(distance_for_snr(snr_db, budget), budget) == pytest.approx(snr_db, abs=1e-9)


def test_budget_rejects_nonpositive():
    with pytest.raises(ValueError):
        LinkBudget(0.005, 0.0, 1e-12)
    with pytest.raises(ValueError):
        snr_bbf(0.0, LinkBudget(0.005, 1e-3, 1e-12))


@given(st.floats(-1.5, 1.5))
def test_matched_phases_reach_bound(phi):
    state = IrsState.reflecting(matched_phases(64, phi))
    assert irs_gain(phi, state) == pytest.approx(64.0, rel=1e-9)


def test_gain_brute_force(rng):
    psi = rng.uniform(-np.pi, np.pi, 8)
    phi = 0.4
    b = np.exp(1j * np.pi * np.arange(8) * np.sin(phi))
    brute = abs(sum(b[l] * np.exp(-1j * psi[l]) * b[l] for l in range(8)))
    assert irs_gain(phi, IrsState.reflecting(psi)) == pytest.approx(brute)
    assert irs_gain(phi, IrsState.sensing(8)) == 0.0


def test_gain_rejects_non_square():
    with pytest.raises(ValueError):
        irs_gain(0.1, np.ones((3, 4)))


def test_two_way_coeff_composition():
    state = IrsState.reflecting(matched_phases(16, 0.2))
    h = two_way_coeff(0.2, state, 2.0 + 1j, 0.5j)
    assert abs(h) == pytest.approx(abs((2 + 1j) * 0.5j) * 16)


def test_rcs_effective_scales_with_cosine(cfg):
    state = IrsState.reflecting(matched_phases(64, 0.5))
    assert rcs_effective(0.5, state, cfg) == pytest.approx(rcs_bbf(cfg) * np.cos(0.5) * 64)


def test_scenario_truth(cfg):
    tr = make_scenario(10.0, 0.1, -0.3, 5.0, cfg)
    assert tr.tau0 == pytest.approx(20.0 / SPEED_OF_LIGHT)
    assert tr.nu0 == pytest.approx(2 * 5.0 * 60e9 / SPEED_OF_LIGHT)
    assert abs(tr.h_dl) == pytest.approx(cfg.wavelength / (4 * np.pi * 10.0))
    assert abs(tr.h_ul) == pytest.approx(np.sqrt(rcs_bbf(cfg) * np.cos(-0.3) / (4 * np.pi)) / 10)


def test_scenario_random_phases_use_rng(cfg):
    c = cfg.replace(random_phases=True)
    a = make_scenario(5.0, 0, 0, 0, c, np.random.default_rng(1))
    b = make_scenario(5.0, 0, 0, 0, c, np.random.default_rng(2))
    assert abs(a.h_dl) == pytest.approx(abs(b.h_dl))
    assert a.h_dl != b.h_dl


def test_scenario_errors(cfg):
    with pytest.raises(ValueError):
        make_scenario(-1.0, 0, 0, 0, cfg)
    with pytest.raises(ValueError):
        make_scenario(1.0, 2.0, 0, 0, cfg)


def test_doppler_examples(cfg):
    assert make_scenario(5.0, 0, 0, 0.0, cfg).nu0 == 0.0
    assert make_scenario(5.0, 0, 0, 50.0, cfg).nu0 == pytest.approx(20.01e3, abs=5)
