import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from balign.codebook import design_flattop, sample_combiner
from balign.crlb import (CrlbAccumulators, UnboundedCrlbWarning, crlb_phi_closed,
                         crlb_phi_numeric, fim, ue_model, ue_model_derivatives)
from balign.signal import gen_pilots

BOOK = design_flattop(64, 16, 87.0)
SIGMA2 = 3.98e-12
P = 1e-3


def _setup(rng, n_slots=3, shape=(4, 8)):
    Vs = [sample_combiner(BOOK, 4, rng) for _ in range(n_slots)]
    xs = [gen_pilots(*shape, P, rng) for _ in range(n_slots)]
    return Vs, xs


@settings(max_examples=25, deadline=None)
@given(phi=st.floats(-1.2, 1.2), seed=st.integers(0, 2**31))
def test_derivatives_match_central_differences(timing, phi, seed):
    rng = np.random.default_rng(seed)
    Vs, xs = _setup(rng, 2)
    xi = np.array([1e-4, 0.7, phi, 3e-8, 2e3])
    analytic = ue_model_derivatives(xi, Vs, xs, timing)
    for k in range(5):
        h = 1e-7 * max(abs(xi[k]), 1.0 if k in (1, 2) else abs(xi[k]))
        up, dn = xi.copy(), xi.copy()
        up[k] += h
        dn[k] -= h
        for s, (a, b) in enumerate(zip(ue_model(up, Vs, xs, timing), ue_model(dn, Vs, xs, timing))):
            fd = (a - b) / (2 * h)
            ref = analytic[s][k]
            rel = np.linalg.norm(fd - ref) / np.linalg.norm(ref)
            assert rel < 1e-6, (k, rel)


def test_fim_symmetric_psd_and_zero_pattern(timing, rng):
    for _ in range(10):
        Vs, xs = _setup(rng)
        xi = [rng.uniform(1e-5, 1e-3), rng.uniform(-np.pi, np.pi), rng.uniform(-1, 1),
              rng.uniform(0, 1e-7), rng.uniform(-1e4, 1e4)]
        J = fim(xi, Vs, xs, SIGMA2, timing)
        np.testing.assert_array_equal(J, J.T)
        assert np.linalg.eigvalsh(J).min() >= -1e-10 * np.trace(J)
        for i, j in ((0, 1), (0, 3), (0, 4)):
            assert abs(J[i, j]) < 1e-8 * np.abs(J).max()


def test_fim_scales_with_pilot_power(timing, rng):
    Vs, xs = _setup(rng)
    xi = [1e-4, 0.3, 0.2, 2e-8, 100.0]
    J1 = fim(xi, Vs, xs, SIGMA2, timing)
    J2 = fim(xi, Vs, [np.sqrt(2) * x for x in xs], SIGMA2, timing)
    np.testing.assert_allclose(J2, 2 * J1, rtol=1e-10, atol=1e-12 * np.abs(J1).max())


def test_fim_requires_positive_noise(timing, rng):
    Vs, xs = _setup(rng, 1)
    with pytest.raises(ValueError):
        fim([1, 0, 0, 0, 0], Vs, xs, 0.0, timing)


def _closed(xi, Vs, xs, **kw):
    return crlb_phi_closed(xi, Vs, P, n_symbols=xs[0].shape[0], n_subcarriers=xs[0].shape[1],
                           sigma2=SIGMA2, **kw)


def test_closed_form_matches_fim_at_broadside(timing, rng):
    for _ in range(10):
        Vs, xs = _setup(rng, 4)
        xi = [2e-4, 0.1, 0.0, 1e-8, 0.0]
        numeric = crlb_phi_numeric(fim(xi, Vs, xs, SIGMA2, timing))
        assert _closed(xi, Vs, xs) == pytest.approx(numeric, rel=1e-6)


def test_exact_variant_matches_fim_everywhere(timing, rng):
    for _ in range(10):
        Vs, xs = _setup(rng, 4)
        xi = [2e-4, 0.1, rng.uniform(-1.2, 1.2), 1e-8, 50.0]
        numeric = crlb_phi_numeric(fim(xi, Vs, xs, SIGMA2, timing))
        assert _closed(xi, Vs, xs, exact=True) == pytest.approx(numeric, rel=1e-6)


def test_bound_scaling_and_phase_invariance(rng):
    Vs, xs = _setup(rng, 3)
    base = _closed([1e-4, 0.0, 0.1, 0, 0], Vs, xs)
    assert _closed([1e-4, 2.0, 0.1, 0, 0], Vs, xs) == base
    acc = CrlbAccumulators(0.1, 64)
    for V in Vs:
        acc.add(V)
    assert acc.bound(1e-4, 2 * SIGMA2, P, 4, 8) == pytest.approx(2 * base)
    assert acc.bound(1e-4, SIGMA2, 2 * P, 4, 8) == pytest.approx(base / 2)


def test_bound_nonincreasing_in_slots(rng):
    for phi, exact in ((0.0, False), (0.7, True)):
        acc = CrlbAccumulators(phi, 64)
        prev = np.inf
        for _ in range(12):
            acc.add(sample_combiner(BOOK, 4, rng))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UnboundedCrlbWarning)
                value = acc.bound(1e-4, SIGMA2, P, 14, 64, exact=exact)
            assert value <= prev * (1 + 1e-12)
            prev = value
        assert acc.c_phi >= 0 and acc.c_tilde2 >= 0


def test_unbounded_is_flagged():
    acc = CrlbAccumulators(0.3, 8)
    acc.add(np.zeros((8, 2)))
    with pytest.warns(UnboundedCrlbWarning):
        assert acc.bound(1.0, 1.0, 1.0, 1, 1) == np.inf


def test_numeric_singular_is_inf():
    assert crlb_phi_numeric(np.zeros((5, 5))) == np.inf
