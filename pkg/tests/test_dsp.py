from __future__ import annotations

import numpy as np
import pytest
import scipy.fft
import scipy.linalg
import scipy.signal
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SR
from kidvoice.features import dsp


def test_framing_counts():
    x = np.arange(1000.0)
    f = dsp.frame_signal(x, 320, 160)
    assert f.shape == (5, 320)
    np.testing.assert_array_equal(f[2], x[320:640])
    assert dsp.n_frames(100, 320, 160) == 0


def test_regression_deltas_of_ramp():
    d = dsp.regression_deltas(3.0 * np.arange(20.0))
    np.testing.assert_allclose(d[2:-2], 3.0)
    # replicated edges flatten the slope at the ends
    assert d[0] < 3.0 and d[-1] < 3.0
    assert dsp.regression_deltas(np.ones((7, 3))).max() == 0.0


def test_mel_scale_and_filterbank():
    assert float(dsp.hz_to_mel(1000.0)) == pytest.approx(1000.0, abs=0.1)
    np.testing.assert_allclose(dsp.mel_to_hz(dsp.hz_to_mel([0.0, 440.0, 7999.0])), [0.0, 440.0, 7999.0])
    fb = dsp.mel_filterbank(26, 512, SR)
    assert fb.shape == (26, 257)
    assert fb.min() >= 0.0 and fb.max() <= 1.0 + 1e-12
    peaks = np.argmax(fb, axis=1)
    assert np.all(np.diff(peaks) >= 0)


def test_mfcc_is_orthonormal_dct_of_log_mel():
    rng = np.random.default_rng(0)
    frames = rng.standard_normal((4, 320))
    fb = dsp.mel_filterbank(26, 512, SR)
    log_mel, mfcc = dsp.log_mel_and_mfcc(frames, fb, 512, 15, 22.0)
    n = np.arange(26)
    basis = np.sqrt(2.0 / 26) * np.cos(np.pi * np.outer(np.arange(15), 2 * n + 1) / 52)
    basis[0] /= np.sqrt(2.0)
    lift = 1 + 11 * np.sin(np.pi * np.arange(15) / 22)
    np.testing.assert_allclose(mfcc, (log_mel @ basis.T) * lift, rtol=1e-10, atol=1e-10)


def test_autocorr_matches_direct_sum():
    x = np.random.default_rng(1).standard_normal(50)
    r = dsp.autocorr(x, 8)
    direct = [np.dot(x[: 50 - k], x[k:]) for k in range(9)]
    np.testing.assert_allclose(r, direct, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), order=st.integers(1, 12))
def test_levinson_matches_toeplitz_solve(seed, order):
    x = np.random.default_rng(seed).standard_normal(400)
    r = dsp.autocorr(x, order)
    a, k, err = dsp.levinson_durbin(r, order)
    coef = scipy.linalg.solve_toeplitz(r[:order], -r[1 : order + 1])
    np.testing.assert_allclose(a[1:], coef, rtol=1e-8, atol=1e-10)
    assert np.all(np.abs(k) < 1.0)
    assert err == pytest.approx(r[0] + a[1:] @ r[1 : order + 1], rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), order=st.sampled_from([2, 4, 7, 8, 10]))
def test_lsf_zero_the_sum_and_difference_polynomials(seed, order):
    x = np.random.default_rng(seed).standard_normal(400)
    x = scipy.signal.lfilter([1.0], [1.0, -0.9], x)
    a, _, _ = dsp.levinson_durbin(dsp.autocorr(x, order), order)
    lsf = dsp.lpc_to_lsf(a)
    assert lsf.shape == (order,)
    assert np.all(np.diff(lsf) > 0) and lsf[0] > 0 and lsf[-1] < np.pi
    # odd-indexed LSFs zero P, even-indexed zero Q (interlacing)
    k = np.arange(order + 1)
    for i, w in enumerate(lsf):
        A = np.sum(a * np.exp(-1j * w * k))
        rev = np.exp(-1j * w * (order + 1)) * np.conj(A)
        val = A + rev if i % 2 == 0 else A - rev
        assert abs(val) < 1e-6 * max(1.0, np.sum(np.abs(a)))


def test_resample_matches_fft_resampling_on_bandlimited_signal():
    t = np.arange(8000) / 8000.0
    x = np.sin(2 * np.pi * 300 * t) + 0.5 * np.sin(2 * np.pi * 1100 * t)
    y = dsp.resample_poly(x, 8000, 16000)
    ref = scipy.signal.resample(x, 16000)
    assert y.shape == ref.shape
    mid = slice(500, -500)
    assert np.max(np.abs(y[mid] - ref[mid])) < 1e-2


def test_parabolic_peak_recovers_vertex():
    f = lambda u: 2.0 - 3.0 * (u - 0.3) ** 2
    off, h = dsp.parabolic_peak(f(-1), f(0), f(1))
    assert off == pytest.approx(0.3)
    assert h == pytest.approx(2.0)


@pytest.mark.parametrize("f0", [110.0, 220.0, 330.0, 440.0])
def test_pick_pitch_on_tones(f0):
    x = np.sin(2 * np.pi * f0 * np.arange(960) / SR)
    curve = dsp.nccf(x[None, :], 300)[0]
    lag, h = dsp.pick_pitch(curve, 32, 291)
    assert SR / lag == pytest.approx(f0, rel=0.01)
    assert h > 0.9


def test_voice_quality_perfect_periodicity():
    period = 160
    saw = (np.arange(4000) % period) / period - 0.5
    jit, ddp, shim = dsp.voice_quality(saw, float(period))
    assert jit < 1e-6 and ddp < 1e-6 and shim < 1e-6
    sine = 0.7 * np.sin(2 * np.pi * 200 * np.arange(4000) / SR)
    assert dsp.voice_quality(sine, SR / 200)[2] < 1e-6


def test_voice_quality_sees_jitter():
    rng = np.random.default_rng(0)
    periods = 160 + rng.integers(-6, 7, 30)
    x = np.zeros(int(periods.sum()) + 50)
    pos = np.cumsum(periods)
    x[pos] = 1.0
    x = scipy.signal.lfilter([1.0], [1.0, -0.9], x)
    jit, _, _ = dsp.voice_quality(x, 160.0)
    expected = np.mean(np.abs(np.diff(periods[1:]))) / periods[1:].mean()
    assert jit == pytest.approx(expected, rel=0.25)


def test_smoothed_envelope_holds_over_unvoiced():
    f0 = np.array([0, 100, 200, 0, 0, 300.0])
    env = dsp.smoothed_envelope(f0, f0 > 0, 0.5)
    np.testing.assert_allclose(env, [0, 100, 150, 150, 150, 225])


def test_dct_helper_is_scipy_orthonormal():
    v = np.random.default_rng(3).standard_normal(26)
    out = scipy.fft.dct(v, type=2, norm="ortho")
    assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(v))
