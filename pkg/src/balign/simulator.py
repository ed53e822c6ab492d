"""Beam-alignment episodes and Monte Carlo sweeps.

Every trial draws its randomness from ``SeedSequence([master_seed, trial])``,
split into independent streams for geometry, UE combiners, BS combiners,
pilots, UE noise and BS noise. Sweep points reuse the same trial streams
(common random numbers), so curves differ only through the swept quantity.
"""

from __future__ import annotations

import functools
import math
import os
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .array import steer
from .channel import (LinkBudget, ScenarioTruth, distance_for_snr, make_scenario,
                      snr_bbf_linear)
from .codebook import Codebook, design_flattop, sample_combiner, tx_beam
from .config import SPEED_OF_LIGHT, ParamGrid, SystemConfig, db_to_lin
from .crlb import CrlbAccumulators, UnboundedCrlbWarning
from .estimator import BsArchive, EstimateRecord, UeAccumulator, bs_estimate, ue_estimate
from .hirs import IrsState, Mode, controller_step, sensing_matrix, wrap_phase
from .signal import TimingConstants, gen_pilots, synth_bs, synth_ue

N_STREAMS = 6
BASELINE_STREAM = 6


@functools.lru_cache(maxsize=16)
def _codebook(n, k, fov, grid_size, max_iter, tol) -> Codebook:
    return design_flattop(n, k, fov, grid_size, max_iter, tol)


@dataclass(frozen=True)
class Setup:
    """Per-configuration objects shared, read-only, by all episodes."""

    cfg: SystemConfig
    grid: ParamGrid
    timing: TimingConstants
    ue_codebook: Codebook
    bs_codebook: Codebook
    omni_bs: np.ndarray
    omni_ue: np.ndarray

    @classmethod
    def from_config(cls, cfg: SystemConfig) -> "Setup":
        design = (cfg.fov_deg, cfg.design_grid_size, cfg.max_design_iter, cfg.design_tol)
        return cls(
            cfg=cfg,
            grid=ParamGrid.from_config(cfg),
            timing=TimingConstants.from_config(cfg),
            ue_codebook=_codebook(cfg.n_irs_elements, cfg.n_sectors_ue, *design),
            bs_codebook=_codebook(cfg.n_bs_antennas, cfg.n_sectors_bs, *design),
            omni_bs=_codebook(cfg.n_bs_antennas, 1, *design).codewords[:, 0],
            omni_ue=_codebook(cfg.n_irs_elements, 1, *design).codewords[:, 0],
        )

    def tx_vector(self, theta: float) -> np.ndarray:
        if self.cfg.tx_mode == "sector":
            return tx_beam(self.cfg, theta, self.bs_codebook)
        return self.omni_bs.conj()


@dataclass
class EpisodeResult:
    truth: ScenarioTruth
    seed: tuple[int, ...] | None
    snr_bbf_db: float
    ue_estimates: list[EstimateRecord | None] = field(default_factory=list)
    bs_estimates: list[EstimateRecord | None] = field(default_factory=list)
    states: list[IrsState] = field(default_factory=list)
    ue_combiners: list[np.ndarray] = field(default_factory=list, repr=False)
    g_dl: complex = 0j
    spectral_efficiency: float = float("nan")

    @property
    def n_slots(self) -> int:
        return len(self.states)

    def _latest(self, seq, k):
        for est in reversed(seq[:k]):
            if est is not None:
                return est
        return None

    def ue_angle_at(self, k: int) -> float:
        """Latest UE angle estimate available after ``k`` slots (nan if none)."""
        est = self._latest(self.ue_estimates, k)
        return est.angle_hat if est is not None else math.nan

    def bs_angle_at(self, k: int) -> float:
        est = self._latest(self.bs_estimates, k)
        return est.angle_hat if est is not None else math.nan

    def switch_slot(self) -> int | None:
        """1-based slot in which the surface first reflects."""
        for i, st in enumerate(self.states):
            if st.mode is Mode.REFLECTING:
                return i + 1
        return None

    def to_dict(self) -> dict:
        def rec(e):
            if e is None:
                return None
            d = asdict(e)
            d["g_hat"] = [e.g_hat.real, e.g_hat.imag]
            d["index"] = list(e.index)
            return d
        t = asdict(self.truth)
        t["h_dl"] = [self.truth.h_dl.real, self.truth.h_dl.imag]
        t["h_ul"] = [self.truth.h_ul.real, self.truth.h_ul.imag]
        return {
            "seed": list(self.seed) if self.seed is not None else None,
            "snr_bbf_db": self.snr_bbf_db,
            "truth": t,
            "spectral_efficiency": self.spectral_efficiency,
            "slots": [
                {"slot": i + 1, "beta": st.beta, "mode": st.mode.value,
                 "ue": rec(self.ue_estimates[i]), "bs": rec(self.bs_estimates[i])}
                for i, st in enumerate(self.states)
            ],
        }


def spectral_efficiency(theta, theta_hat, phi, phi_hat, snr_linear, n_bs=64, n_ue=64):
    """``log2(1 + snr |a^T(theta) a*(theta_hat) b^H(phi_hat) b(phi)|^2)``."""
    a = steer(n_bs, theta) @ steer(n_bs, theta_hat).conj()
    b = steer(n_ue, phi_hat).conj() @ steer(n_ue, phi)
    return float(np.log2(1 + snr_linear * abs(a * b) ** 2))


def spectral_efficiency_omni_ue(theta, theta_hat, phi, w_ue, snr_linear, n_bs=64):
    """SE when the UE receives with a unit-norm beam ``w_ue`` instead of ``b(phi_hat)``.

    ``sqrt(n_ue) * w^H b(phi)`` stands in for ``b^H(phi_hat) b(phi)`` so that a
    matched unit-norm beam reproduces :func:`spectral_efficiency`.
    """
    a = steer(n_bs, theta) @ steer(n_bs, theta_hat).conj()
    n_ue = w_ue.shape[0]
    b = np.sqrt(n_ue) * (w_ue.conj() @ steer(n_ue, phi))
    return float(np.log2(1 + snr_linear * abs(a * b) ** 2))


def angle_error(estimate, truth):
    """Wrapped angle difference ``estimate - truth`` in [-pi, pi)."""
    return float(wrap_phase(estimate - truth))


def child_stream(seq: np.random.SeedSequence, index: int) -> np.random.Generator:
    """Generator for child ``index`` of ``seq``; stateless, unlike ``seq.spawn``."""
    return np.random.default_rng(
        np.random.SeedSequence(seq.entropy, spawn_key=tuple(seq.spawn_key) + (index,)))


def _streams(rng) -> list[np.random.Generator]:
    if isinstance(rng, np.random.SeedSequence):
        return [child_stream(rng, i) for i in range(N_STREAMS)]
    return rng.spawn(N_STREAMS)


def run_episode(cfg: SystemConfig, truth: ScenarioTruth, rng, setup: Setup | None = None,
                *, estimate_slots: Sequence[int] | None = None, with_bs: bool = True,
                budget: LinkBudget | None = None, seed=None) -> EpisodeResult:
    """Run one beam-alignment episode of ``cfg.n_slots`` slots.

    ``estimate_slots`` (1-based) restricts UE estimation to the given slots;
    it is honoured only when the surface controller is disabled, since the
    controller needs every estimate.
    """
    setup = setup or Setup.from_config(cfg)
    budget = budget or LinkBudget.from_config(cfg)
    truth_rng, ue_rng, bs_rng, pilot_rng, ue_noise, bs_noise = _streams(rng)
    del truth_rng  # reserved: geometry is drawn by the caller
    n_el = cfg.n_irs_elements
    f = setup.tx_vector(truth.theta)
    setup.timing.check_cp(truth.tau0)
    acc = UeAccumulator(n_el, setup.timing)
    archive = BsArchive(cfg.n_bs_antennas, setup.timing)
    result = EpisodeResult(truth=truth, seed=seed,
                           snr_bbf_db=float(10 * np.log10(snr_bbf_linear(truth.distance, budget))))
    result.g_dl = complex(truth.h_dl * (steer(cfg.n_bs_antennas, truth.theta) @ f))
    history: list[float] = []
    wanted = None
    if estimate_slots is not None and not (cfg.irs_control and cfg.rcs_model != "metallic"):
        wanted = set(int(s) for s in estimate_slots)
    metallic = cfg.rcs_model == "metallic"

    for slot in range(1, cfg.n_slots + 1):
        if metallic:
            state = IrsState.reflecting(np.zeros(n_el))
        elif cfg.irs_control:
            state = controller_step(history, cfg)
        else:
            state = IrsState.sensing(n_el)
        U = sample_combiner(setup.ue_codebook, cfg.n_ue_rf, ue_rng)
        U_bs = sample_combiner(setup.bs_codebook, cfg.n_bs_rf, bs_rng)
        x = gen_pilots(cfg.n_symbols, cfg.n_subcarriers, budget.tx_power, pilot_rng)
        V = sensing_matrix(state) @ U

        ue_est = None
        if state.beta < 1:
            y = synth_ue(truth, state, U, f, x, budget.noise_power, ue_noise, setup.timing)
            acc.add_slot(x, V, y)
            result.ue_combiners.append(V)
            if wanted is None or slot in wanted:
                ue_est = ue_estimate(acc, setup.grid)
                history.append(ue_est.angle_hat)

        bs_est = None
        if with_bs:
            if not (cfg.bs_reflecting_only and state.mode is Mode.SENSING):
                r = synth_bs(truth, state, U_bs, f, x, budget.noise_power, bs_noise,
                             setup.timing)
                archive.add_slot(x, U_bs, r)
            if len(archive):
                bs_est = bs_estimate(archive, setup.grid)

        result.states.append(state)
        result.ue_estimates.append(ue_est)
        result.bs_estimates.append(bs_est)

    result.spectral_efficiency = episode_se(result, cfg.n_slots, setup, budget)
    return result


def episode_se(result: EpisodeResult, k: int, setup: Setup, budget: LinkBudget) -> float:
    """Spectral efficiency using the estimates available after ``k`` slots."""
    cfg = setup.cfg
    truth = result.truth
    snr = snr_bbf_linear(truth.distance, budget)
    theta_hat = result.bs_angle_at(k)
    if math.isnan(theta_hat):
        return math.nan
    if cfg.rcs_model == "metallic":
        return spectral_efficiency_omni_ue(truth.theta, theta_hat, truth.phi, setup.omni_ue,
                                           snr, cfg.n_bs_antennas)
    phi_hat = result.ue_angle_at(k)
    if math.isnan(phi_hat):
        return math.nan
    return spectral_efficiency(truth.theta, theta_hat, truth.phi, phi_hat, snr,
                               cfg.n_bs_antennas, cfg.n_irs_elements)


# ---------------------------------------------------------------- sweeps


@dataclass
class SweepResult:
    """Tabular sweep output: one dict per axis point, in axis order."""

    name: str
    columns: list[str]
    rows: list[dict]
    trials: int

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows], dtype=float)


def trial_seed(master_seed: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master_seed), int(trial)])


def draw_angles(cfg: SystemConfig, seq: np.random.SeedSequence) -> tuple[float, float, np.random.Generator]:
    """Uniform BS and UE angles over the field of view from the trial's geometry stream."""
    rng = child_stream(seq, 0)
    lim = np.deg2rad(cfg.fov_deg)
    theta, phi = rng.uniform(-lim, lim, size=2)
    return float(theta), float(phi), rng


def cp_limited_distance(cfg: SystemConfig) -> float:
    return SPEED_OF_LIGHT * cfg.cp_duration / 2


def link_for_snr(cfg: SystemConfig, snr_db: float) -> tuple[float, LinkBudget]:
    """Distance and link budget realising ``snr_db`` before beamforming.

    The UE is moved at the configured transmit power; if that would push the
    two-way delay beyond the cyclic prefix, the UE stays at the prefix-limited
    distance and the transmit power is lowered instead.
    """
    budget = LinkBudget.from_config(cfg)
    d = distance_for_snr(snr_db, budget)
    d_max = cp_limited_distance(cfg)
    if d <= d_max:
        return d, budget
    snr = float(db_to_lin(snr_db))
    power = snr * budget.noise_power * (4 * np.pi * d_max / budget.wavelength) ** 2
    return d_max, LinkBudget(budget.wavelength, power, budget.noise_power)


def n_workers() -> int:
    env = os.environ.get("BALIGN_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            return max(1, min(int(env), cap))
        except ValueError:
            pass
    return cap


def _parallel_map(fn, items):
    jobs = n_workers()
    if jobs == 1 or len(items) < 2:
        return [fn(i) for i in items]
    from joblib import Parallel, delayed
    return Parallel(n_jobs=jobs)(delayed(fn)(i) for i in items)


def _scenario(cfg, snr_db, seed, trial, phi=None):
    seq = trial_seed(seed, trial)
    theta, phi_draw, geo = draw_angles(cfg, seq)
    d, budget = link_for_snr(cfg, snr_db)
    truth = make_scenario(d, theta, phi_draw if phi is None else phi, cfg.speed_mps, cfg, geo)
    return seq, truth, budget


def run_trial(cfg: SystemConfig, snr_db: float, seed: int, trial: int,
              setup: Setup | None = None) -> EpisodeResult:
    """The full episode that trial ``trial`` of an SE sweep runs at ``snr_db``."""
    seq, truth, budget = _scenario(cfg, snr_db, seed, trial)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return run_episode(cfg, truth, seq, setup, budget=budget, seed=(seed, trial))


def _rmse_trial(args):
    cfg, setup, snr_db, seed, trial, slot_counts, phi_sampler = args
    phi = phi_sampler(trial) if phi_sampler is not None else None
    seq, truth, budget = _scenario(cfg, snr_db, seed, trial, phi)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = run_episode(cfg, truth, seq, setup, estimate_slots=slot_counts, with_bs=False,
                          budget=budget, seed=(seed, trial))
    errors = [angle_error(res.ue_angle_at(k), truth.phi) for k in slot_counts]
    crlb = []
    for k in slot_counts:
        # bound over the sensing slots seen so far
        n_sense = sum(1 for st in res.states[:k] if st.beta < 1)
        acc = CrlbAccumulators(truth.phi, cfg.n_irs_elements)
        for V in res.ue_combiners[:n_sense]:
            acc.add(V)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UnboundedCrlbWarning)
            crlb.append(acc.bound(abs(res.g_dl), budget.noise_power, budget.tx_power,
                                  cfg.n_symbols, cfg.n_subcarriers))
    return errors, crlb


def _ci_rmse(sq_err: np.ndarray) -> tuple[float, float]:
    """RMSE and its 95% half-width (delta method on the mean squared error)."""
    mse = sq_err.mean()
    rmse = math.sqrt(mse)
    if sq_err.size < 2 or rmse == 0:
        return rmse, 0.0
    return rmse, 1.96 * sq_err.std(ddof=1) / math.sqrt(sq_err.size) / (2 * rmse)


def rmse_difference_ci(err_a: np.ndarray, err_b: np.ndarray) -> tuple[float, float]:
    """``RMSE(a) - RMSE(b)`` for paired per-trial errors, with a 95% half-width.

    Delta method on the two mean squared errors, keeping their covariance
    (both errors come from the same trials).
    """
    sa, sb = np.asarray(err_a, float) ** 2, np.asarray(err_b, float) ** 2
    ra, rb = math.sqrt(sa.mean()), math.sqrt(sb.mean())
    diff = ra - rb
    if sa.size < 2 or ra == 0 or rb == 0:
        return diff, 0.0
    grad = np.array([1 / (2 * ra), -1 / (2 * rb)])
    cov = np.cov(np.vstack([sa, sb]), ddof=1) / sa.size
    return diff, float(1.96 * math.sqrt(max(grad @ cov @ grad, 0.0)))


def sweep_rmse_vs_snr(cfg: SystemConfig, snr_points: Sequence[float], trials: int,
                      slot_counts: Sequence[int] | None = None, seed: int = 0,
                      sensing_only: bool = True, phi_sampler=None) -> SweepResult:
    """UE angle RMSE (degrees) per (SNR, accumulated slots).

    With ``sensing_only`` the surface never reflects, so every slot feeds the
    UE estimator. Rows also carry the grid floor ``step/sqrt(12)``, the mean
    closed-form bound, and the raw errors for paired comparisons.
    """
    slot_counts = sorted(slot_counts or [cfg.n_slots])
    run_cfg = cfg.replace(n_slots=max(slot_counts),
                          irs_control=cfg.irs_control and not sensing_only)
    setup = Setup.from_config(run_cfg)
    floor = np.rad2deg(setup.grid.angle_step) / math.sqrt(12)
    rows = []
    for snr in snr_points:
        out = _parallel_map(_rmse_trial, [(run_cfg, setup, snr, seed, t, slot_counts, phi_sampler)
                                          for t in range(trials)])
        errs = np.array([o[0] for o in out])  # (trials, len(slot_counts))
        bounds = np.array([o[1] for o in out])
        for j, k in enumerate(slot_counts):
            e = np.rad2deg(errs[:, j])
            rmse, hw = _ci_rmse(e**2)
            finite = bounds[np.isfinite(bounds[:, j]), j]
            rows.append({
                "snr_db": float(snr), "slots": int(k), "rmse_deg": rmse, "ci95_deg": hw,
                "floor_deg": float(floor),
                "crlb_deg": float(np.rad2deg(np.sqrt(finite.mean()))) if finite.size else math.inf,
                "crlb_unbounded": int(bounds.shape[0] - finite.size),
                "trials": trials, "errors_deg": e,
            })
    return SweepResult("rmse_vs_snr", ["snr_db", "slots", "rmse_deg", "ci95_deg", "floor_deg",
                                       "crlb_deg", "crlb_unbounded", "trials"], rows, trials)


def _se_trial(args):
    cfg, setup, snr_db, seed, trial, slot_counts = args
    res = run_trial(cfg, snr_db, seed, trial, setup)
    seq, truth = trial_seed(seed, trial), res.truth
    budget = link_for_snr(cfg, snr_db)[1]
    # random-beam baseline from a stream disjoint from the episode streams
    base_rng = child_stream(seq, BASELINE_STREAM)
    lim = np.deg2rad(cfg.fov_deg)
    th_r, ph_r = base_rng.uniform(-lim, lim, size=2)
    snr = snr_bbf_linear(truth.distance, budget)
    baseline = spectral_efficiency(truth.theta, th_r, truth.phi, ph_r, snr,
                                   cfg.n_bs_antennas, cfg.n_irs_elements)
    aligned = [episode_se(res, k, setup, budget) for k in slot_counts]
    return aligned, baseline


def _mean_ci(x: np.ndarray) -> tuple[float, float]:
    if x.size < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(1.96 * x.std(ddof=1) / math.sqrt(x.size))


def sweep_se_vs_slots(cfg: SystemConfig, slot_counts: Sequence[int], trials: int,
                      snr_db: float = -4.0, seed: int = 0) -> SweepResult:
    """Mean spectral efficiency per slot budget, with a random-beam baseline.

    One episode of ``max(slot_counts)`` slots per trial; the estimate after
    ``k`` slots is what a ``k``-slot budget would have produced, because the
    protocol never looks ahead.
    """
    slot_counts = sorted(slot_counts)
    run_cfg = cfg.replace(n_slots=max(slot_counts))
    setup = Setup.from_config(run_cfg)
    out = _parallel_map(_se_trial, [(run_cfg, setup, snr_db, seed, t, slot_counts)
                                    for t in range(trials)])
    aligned = np.array([o[0] for o in out])
    baseline = np.array([o[1] for o in out])
    rows = []
    for j, k in enumerate(slot_counts):
        se, hw = _mean_ci(aligned[:, j])
        b, bhw = _mean_ci(baseline)
        gain, ghw = _mean_ci(aligned[:, j] - baseline)
        rows.append({"slots": int(k), "snr_db": float(snr_db), "se_aligned": se,
                     "se_aligned_ci95": hw, "se_baseline": b, "se_baseline_ci95": bhw,
                     "gain": gain, "gain_ci95": ghw, "trials": trials})
    return SweepResult("se_vs_slots", ["slots", "snr_db", "se_aligned", "se_aligned_ci95",
                                       "se_baseline", "se_baseline_ci95", "gain", "gain_ci95",
                                       "trials"], rows, trials)


def sweep_se_vs_snr(cfg: SystemConfig, snr_points: Sequence[float], trials: int,
                    rcs_models: Sequence[str] = ("analytic", "hypothetical", "metallic"),
                    seed: int = 0) -> SweepResult:
    """Mean spectral efficiency after ``cfg.n_slots`` slots for several RCS models.

    All models share the trial streams; only the link budget of the surface differs.
    """
    rows = []
    for model in rcs_models:
        mcfg = cfg.replace(rcs_model=model)
        setup = Setup.from_config(mcfg)
        for snr in snr_points:
            out = _parallel_map(_se_trial, [(mcfg, setup, snr, seed, t, [mcfg.n_slots])
                                            for t in range(trials)])
            se, hw = _mean_ci(np.array([o[0][0] for o in out]))
            rows.append({"rcs_model": model, "snr_db": float(snr), "se": se, "ci95": hw,
                         "trials": trials})
    return SweepResult("se_vs_snr", ["rcs_model", "snr_db", "se", "ci95", "trials"], rows, trials)


def sweep_crlb(cfg: SystemConfig, snr_points: Sequence[float], slot_counts: Sequence[int],
               trials: int, seed: int = 0) -> SweepResult:
    """Closed-form and exact angle bounds per (SNR, accumulated sensing slots).

    Angles and UE combiners come from the same trial streams as the episodes,
    so the bound lines up with :func:`sweep_rmse_vs_snr` for a given seed.
    Bounds are averaged in rad^2 over the trials where they are finite.
    """
    slot_counts = sorted(int(k) for k in slot_counts)
    setup = Setup.from_config(cfg)
    closed = np.full((trials, len(snr_points), len(slot_counts)), math.inf)
    exact = np.full_like(closed, math.inf)
    for t in range(trials):
        seq = trial_seed(seed, t)
        theta, phi, _ = draw_angles(cfg, seq)
        ue_rng = child_stream(seq, 1)
        links = []
        for snr in snr_points:
            d, budget = link_for_snr(cfg, snr)
            truth = make_scenario(d, theta, phi, 0.0, cfg)
            g = abs(truth.h_dl * (steer(cfg.n_bs_antennas, theta) @ setup.tx_vector(theta)))
            links.append((g, budget))
        acc = CrlbAccumulators(phi, cfg.n_irs_elements)
        for k in range(1, slot_counts[-1] + 1):
            acc.add(sample_combiner(setup.ue_codebook, cfg.n_ue_rf, ue_rng))
            if k not in slot_counts:
                continue
            j = slot_counts.index(k)
            for i, (g, budget) in enumerate(links):
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", UnboundedCrlbWarning)
                    args = (g, budget.noise_power, budget.tx_power, cfg.n_symbols,
                            cfg.n_subcarriers)
                    closed[t, i, j] = acc.bound(*args)
                    exact[t, i, j] = acc.bound(*args, exact=True)
    rows = []
    for i, snr in enumerate(snr_points):
        for j, k in enumerate(slot_counts):
            c = closed[:, i, j][np.isfinite(closed[:, i, j])]
            e = exact[:, i, j][np.isfinite(exact[:, i, j])]
            c_mean = float(c.mean()) if c.size else math.inf
            e_mean = float(e.mean()) if e.size else math.inf
            rows.append({"snr_db": float(snr), "slots": k,
                         "crlb_rad2": c_mean, "crlb_deg": float(np.rad2deg(np.sqrt(c_mean))),
                         "crlb_exact_rad2": e_mean,
                         "crlb_exact_deg": float(np.rad2deg(np.sqrt(e_mean))),
                         "unbounded": int(trials - c.size), "trials": trials})
    return SweepResult("crlb", ["snr_db", "slots", "crlb_rad2", "crlb_deg", "crlb_exact_rad2",
                                "crlb_exact_deg", "unbounded", "trials"], rows, trials)
