from __future__ import annotations

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import SR, clip_of, tone
from kidvoice.audio import AudioClip
from kidvoice.errors import TooShort
from kidvoice.features import (
    FEATURE_NAMES,
    N_FEATURES,
    PRIMARY_SET,
    VOICING_SET,
    compute_functionals,
    compute_llds,
    extract_is10,
    read_features_csv,
    write_features_csv,
)
from kidvoice.features.functionals import PRIMARY_FUNCTIONALS
from kidvoice.features.is10 import PRIMARY_LLDS, VOICING_LLDS, is_log_energy_feature
from kidvoice.synth import synthesize_voice


def voice(f0=200.0, seconds=1.0, seed=0, level=0.5):
    rng = np.random.default_rng(seed)
    return synthesize_voice(rng, f0, (600.0, 1500.0), seconds, level, SR, -40.0)


# ---------------------------------------------------------------------------
# functionals against independent routes


def quantile_oracle(v, p):
    s = sorted(v)
    h = (len(s) - 1) * p
    lo = int(np.floor(h))
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (h - lo) * (s[hi] - s[lo])


def test_functional_names():
    assert len(PRIMARY_FUNCTIONALS) == 21
    assert len(VOICING_SET) == 19


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(2, 60), elements=st.floats(-1e3, 1e3)))
def test_functionals_match_reference_statistics(v):
    out = dict(zip(PRIMARY_SET.names, compute_functionals(v)[0]))
    assert out["amean"] == pytest.approx(np.mean(v), abs=1e-9)
    assert out["stddev"] == pytest.approx(np.std(v), abs=1e-9)
    for name, p in (("quartile1", 0.25), ("quartile2", 0.5), ("quartile3", 0.75),
                    ("percentile1.0", 0.01), ("percentile99.0", 0.99)):
        assert out[name] == pytest.approx(quantile_oracle(v, p), abs=1e-9)
    assert out["iqr1-3"] == pytest.approx(out["quartile3"] - out["quartile1"], abs=1e-9)
    assert out["pctlrange0-1"] == pytest.approx(out["percentile99.0"] - out["percentile1.0"], abs=1e-9)
    assert out["maxPos"] == pytest.approx(np.argmax(v) / (len(v) - 1))
    assert out["minPos"] == pytest.approx(np.argmin(v) / (len(v) - 1))
    t = np.linspace(0.0, 1.0, len(v))
    slope, offset = np.polyfit(t, v, 1)
    assert out["linregc1"] == pytest.approx(slope, abs=1e-6 * (1 + abs(slope)))
    assert out["linregc2"] == pytest.approx(offset, abs=1e-6 * (1 + abs(offset)))
    resid = v - (offset + slope * t)
    assert out["linregerrQ"] == pytest.approx(np.mean(resid**2), rel=1e-6, abs=1e-6)
    if np.ptp(v) > 1e-6 * max(1.0, np.max(np.abs(v))):
        assert out["skewness"] == pytest.approx(scipy.stats.skew(v), rel=1e-6, abs=1e-6)
        assert out["kurtosis"] == pytest.approx(scipy.stats.kurtosis(v, fisher=False), rel=1e-6, abs=1e-6)
    for level in (75, 90):
        thr = v.min() + level / 100 * np.ptp(v)
        assert out[f"upleveltime{level}"] == pytest.approx(np.mean(v >= thr))


def test_functionals_flat_and_degenerate():
    out = dict(zip(PRIMARY_SET.names, compute_functionals(np.full(10, 3.0))[0]))
    assert out["stddev"] == 0 and out["skewness"] == 0 and out["kurtosis"] == 0
    assert out["upleveltime75"] == 1.0
    assert compute_functionals(np.zeros((0, 2))).shape == (2, 21)
    single = compute_functionals(np.array([5.0]))[0]
    assert np.all(np.isfinite(single))


# ---------------------------------------------------------------------------
# the 1582 contract


def test_feature_layout():
    assert N_FEATURES == 1582 == len(FEATURE_NAMES) == len(set(FEATURE_NAMES))
    assert len(PRIMARY_LLDS) == 34 and len(VOICING_LLDS) == 4
    assert FEATURE_NAMES[-2:] == ("F0final_nOnsets", "duration")
    assert FEATURE_NAMES[0] == "pcm_loudness_maxPos"
    assert "mfcc[14]_de_upleveltime90" in FEATURE_NAMES
    assert "F0final_de_iqr1-3" in FEATURE_NAMES


@pytest.mark.parametrize("seconds", [0.05, 0.6, 1.7])
def test_vector_finite_and_deterministic(seconds):
    c = clip_of(voice(seconds=seconds))
    a = extract_is10(c)
    b = extract_is10(c)
    assert a.values.shape == (1582,)
    assert np.all(np.isfinite(a.values))
    assert a.values.tobytes() == b.values.tobytes()
    assert a["duration"] == pytest.approx(seconds, abs=1 / SR)


def test_too_short_and_silence():
    with pytest.raises(TooShort):
        extract_is10(clip_of(np.zeros(100)))
    v = extract_is10(clip_of(np.zeros(SR // 2)))
    assert np.all(np.isfinite(v.values))
    assert v["F0final_amean"] == 0.0 and v["F0final_nOnsets"] == 0.0


def test_other_sample_rates_are_resampled():
    x8 = voice(seconds=0.8)[::2]
    v = extract_is10(AudioClip(x8, 8000, "low"))
    assert v["F0final_quartile2"] == pytest.approx(200.0, rel=0.03)


@pytest.mark.parametrize("f0", [110.0, 220.0, 330.0, 440.0])
def test_tone_median_f0(f0):
    v = extract_is10(clip_of(tone(f0, 1.0)))
    assert v["F0final_quartile2"] == pytest.approx(f0, rel=0.03)


def test_sawtooth_and_constant_amplitude_voice_quality():
    saw = 0.5 * ((np.arange(SR) % 160) / 160 - 0.5)
    v = extract_is10(clip_of(saw))
    assert v["jitterLocal_amean"] < 1e-6 and v["jitterDDP_amean"] < 1e-6
    v = extract_is10(clip_of(tone(200, 1.0)))
    assert v["shimmerLocal_amean"] < 1e-6


def test_scaling_changes_only_log_energy_features():
    x = voice(seconds=1.0, level=0.3)
    a = extract_is10(clip_of(x)).values
    b = extract_is10(clip_of(2 * x)).values
    energy = np.array([is_log_energy_feature(n) for n in FEATURE_NAMES])
    np.testing.assert_allclose(b[~energy], a[~energy], rtol=0, atol=1e-9)
    assert np.any(np.abs(a[energy] - b[energy]) > 1e-3)


def test_onsets_count_voiced_segments():
    x = np.concatenate([tone(200, 0.3), np.zeros(3200), tone(200, 0.3), np.zeros(3200), tone(200, 0.3)])
    llds = compute_llds(clip_of(x))
    assert llds.pitch_onset_count == 3
    assert llds.voicing.shape[0] == int(llds.voiced.sum())


def test_csv_roundtrip(tmp_path):
    vecs = [extract_is10(clip_of(voice(f0, 0.6))) for f0 in (150.0, 300.0)]
    path = tmp_path / "f.csv"
    write_features_csv(path, [("a", "ADULT", vecs[0]), ("b", "KID", vecs[1].values)])
    ids, labels, X = read_features_csv(path)
    assert ids == ["a", "b"] and labels == ["ADULT", "KID"]
    np.testing.assert_allclose(X, np.vstack([v.values for v in vecs]), rtol=1e-8, atol=1e-12)


def test_kid_voice_has_higher_pitch_and_formants():
    kid = extract_is10(clip_of(synthesize_voice(np.random.default_rng(0), 320.0, (750.0, 1875.0), 1.0, 0.5, SR, -40)))
    man = extract_is10(clip_of(synthesize_voice(np.random.default_rng(0), 110.0, (600.0, 1500.0), 1.0, 0.5, SR, -40)))
    assert kid["F0final_quartile2"] > 2 * man["F0final_quartile2"]
