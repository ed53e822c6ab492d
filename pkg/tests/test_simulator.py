import dataclasses
import math

import numpy as np
import pytest

from balign.channel import LinkBudget, make_scenario, snr_bbf
from balign.hirs import Mode
from balign.simulator import (Setup, _rmse_trial, angle_error, cp_limited_distance, link_for_snr,
                              n_workers, run_episode, spectral_efficiency, sweep_crlb,
                              sweep_rmse_vs_snr, sweep_se_vs_slots, sweep_se_vs_snr, trial_seed)


@pytest.fixture(scope="module")
def setup(small_cfg):
    return Setup.from_config(small_cfg)


def _on_grid_truth(cfg, grid, ia=100, it=4, theta_idx=60):
    tr = make_scenario(8.0, grid.angles[theta_idx], grid.angles[ia], 0.0, cfg)
    return dataclasses.replace(tr, tau0=float(grid.delays[it]), nu0=0.0)


def test_perfect_alignment_se():
    snr = 10 ** (-4 / 10)
    assert spectral_efficiency(0.3, 0.3, -0.2, -0.2, snr) == pytest.approx(
        math.log2(1 + snr * 4096**2))
    assert spectral_efficiency(0.3, 0.3, -0.2, -0.2, snr) == pytest.approx(22.67, abs=0.01)


def test_orthogonal_beam_gives_zero():
    # sin difference of 2/64 is a null of the 64-element array factor
    theta_hat = math.asin(2 / 64)
    assert spectral_efficiency(0.0, theta_hat, 0.1, 0.1, 1.0) == pytest.approx(0.0, abs=1e-12)


def test_se_monotone_in_snr():
    values = [spectral_efficiency(0.2, 0.21, 0.5, 0.49, s) for s in (0.01, 0.1, 1, 10)]
    assert values == sorted(values)


def test_angle_error_wraps():
    assert angle_error(3.0, -3.0) == pytest.approx(6.0 - 2 * math.pi)
    assert angle_error(0.2, 0.1) == pytest.approx(0.1)


def test_noiseless_switches_after_window(small_cfg, setup):
    truth = _on_grid_truth(small_cfg, setup.grid)
    budget = LinkBudget(small_cfg.wavelength, small_cfg.tx_power_w, 1e-30)
    res = run_episode(small_cfg, truth, trial_seed(0, 0), setup, budget=budget)
    assert res.switch_slot() == small_cfg.n_window + 1
    assert all(e.angle_hat == truth.phi for e in res.ue_estimates[:5])
    # sensing starved: no UE estimates or archive growth once reflecting
    assert all(e is None for e in res.ue_estimates[5:])
    assert len(res.ue_combiners) == small_cfg.n_window
    assert all(st.mode is Mode.REFLECTING for st in res.states[5:])
    assert res.bs_angle_at(small_cfg.n_slots) == truth.theta
    assert res.spectral_efficiency == pytest.approx(
        spectral_efficiency(truth.theta, truth.theta, truth.phi, truth.phi,
                            10 ** (snr_bbf(8.0, budget) / 10)))


def test_same_seed_same_episode(small_cfg, setup):
    truth = _on_grid_truth(small_cfg, setup.grid)
    a = run_episode(small_cfg, truth, trial_seed(5, 1), setup)
    b = run_episode(small_cfg, truth, trial_seed(5, 1), setup)
    assert a.to_dict() == b.to_dict()
    c = run_episode(small_cfg, truth, trial_seed(6, 1), setup)
    assert c.to_dict() != a.to_dict()


def test_metallic_baseline_never_senses(small_cfg):
    cfg = small_cfg.replace(rcs_model="metallic", n_slots=6)
    setup = Setup.from_config(cfg)
    truth = _on_grid_truth(cfg, setup.grid)
    res = run_episode(cfg, truth, trial_seed(0, 0), setup)
    assert all(st.beta == 1 and np.all(st.psi == 0) for st in res.states)
    assert all(e is None for e in res.ue_estimates)
    assert all(e is not None for e in res.bs_estimates)
    assert math.isfinite(res.spectral_efficiency)


def test_bs_reflecting_only_skips_sensing_slots(small_cfg):
    cfg = small_cfg.replace(bs_reflecting_only=True, n_slots=3)
    setup = Setup.from_config(cfg)
    res = run_episode(cfg, _on_grid_truth(cfg, setup.grid), trial_seed(0, 0), setup)
    assert all(e is None for e in res.bs_estimates)  # still sensing: nothing archived


def test_link_for_snr(small_cfg):
    d, budget = link_for_snr(small_cfg, 0.0)
    assert d <= cp_limited_distance(small_cfg)
    assert snr_bbf(d, budget) == pytest.approx(0.0)
    d, budget = link_for_snr(small_cfg, -20.0)
    assert d == pytest.approx(cp_limited_distance(small_cfg))
    assert budget.tx_power < small_cfg.tx_power_w
    assert snr_bbf(d, budget) == pytest.approx(-20.0)


def test_n_workers_env(monkeypatch):
    monkeypatch.setenv("BALIGN_THREADS", "1")
    assert n_workers() == 1
    monkeypatch.setenv("BALIGN_THREADS", "junk")
    assert n_workers() >= 1


def test_rmse_sweep_is_order_independent(small_cfg):
    cfg = small_cfg.replace(n_slots=8)
    res = sweep_rmse_vs_snr(cfg, [-5.0], 6, [4, 8], seed=3)
    assert [r["slots"] for r in res.rows] == [4, 8]
    setup = Setup.from_config(cfg.replace(irs_control=False))
    run_cfg = cfg.replace(irs_control=False)
    errs = [_rmse_trial((run_cfg, setup, -5.0, 3, t, [4, 8], None))[0] for t in reversed(range(6))]
    e8 = np.rad2deg(np.array(errs)[:, 1])
    assert res.rows[1]["rmse_deg"] == pytest.approx(np.sqrt(np.mean(e8**2)), rel=1e-12)
    step = np.rad2deg(setup.grid.angle_step)
    assert res.rows[0]["floor_deg"] == pytest.approx(step / math.sqrt(12))


def test_rmse_drops_with_snr(small_cfg):
    res = sweep_rmse_vs_snr(small_cfg.replace(n_slots=16), [-25.0, 5.0], 30, [16], seed=1)
    low, high = res.column("rmse_deg")
    assert high < low


def test_se_sweeps(small_cfg):
    cfg = small_cfg.replace(n_slots=8)
    res = sweep_se_vs_slots(cfg, [4, 8], 4, seed=2)
    assert res.column("slots").tolist() == [4, 8]
    assert np.all(res.column("trials") == 4)
    gain = res.column("se_aligned") - res.column("se_baseline")
    np.testing.assert_allclose(gain, res.column("gain"))
    res = sweep_se_vs_snr(cfg, [-4.0], 3, ("analytic", "metallic"), seed=2)
    assert [r["rcs_model"] for r in res.rows] == ["analytic", "metallic"]
    assert np.all(np.isfinite(res.column("se")))


def test_crlb_sweep_rows(small_cfg):
    res = sweep_crlb(small_cfg, [-10.0, 0.0, 10.0], [4, 16], 5, seed=0)
    assert len(res.rows) == 6
    exact = res.column("crlb_exact_rad2")
    assert np.all(exact > 0)
    # 10 dB more SNR -> bound ten times smaller
    assert exact[0] / exact[2] == pytest.approx(10.0, rel=1e-9)
    assert exact[0] / exact[1] > 1


def test_rmse_difference_ci():
    from balign.simulator import rmse_difference_ci
    rng = np.random.default_rng(0)
    a = rng.normal(0, 2.0, 4000)
    b = 0.5 * a + rng.normal(0, 0.1, 4000)
    diff, hw = rmse_difference_ci(a, b)
    assert diff == pytest.approx(np.sqrt(np.mean(a**2)) - np.sqrt(np.mean(b**2)))
    assert 0 < hw < 0.1
    assert rmse_difference_ci(a[:1], b[:1])[1] == 0.0
