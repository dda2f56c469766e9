from __future__ import annotations

import struct
import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SR, clip_of, tone
from kidvoice.audio import (
    AudioClip,
    Preprocessor,
    PreprocessMode,
    load_wav,
    normalize_energy,
    remove_silence,
    rms,
    silence_mask,
    write_wav,
)
from kidvoice.errors import CorruptFile, DegenerateSignal, EmptyAudio, UnsupportedFormat


def _riff(fmt_tag: int, channels: int, bits: int, payload: bytes, sr: int = SR, extra: bytes = b"") -> bytes:
    block = channels * bits // 8
    fmt = struct.pack("<HHIIHH", fmt_tag, channels, sr, sr * block, block, bits) + extra
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(payload)) + payload
    return b"RIFF" + struct.pack("<I", len(body)) + body


def test_clip_invariants():
    c = AudioClip(np.array([2.0, -3.0, 0.25]), 8000, "x")
    assert c.samples.tolist() == [1.0, -1.0, 0.25]
    assert c.duration_seconds == pytest.approx(3 / 8000)
    with pytest.raises(ValueError):
        c.samples[0] = 0.0
    with pytest.raises(ValueError):
        AudioClip(np.zeros(3), 0)


def test_load_16bit_against_stdlib_wave(tmp_path):
    rng = np.random.default_rng(0)
    ints = rng.integers(-32768, 32767, 19200, dtype=np.int16)
    path = tmp_path / "a.wav"
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(SR)
        w.writeframes(ints.tobytes())
    clip = load_wav(path)
    assert clip.sample_rate == SR
    assert clip.duration_seconds == pytest.approx(1.2)
    np.testing.assert_array_equal(clip.samples, ints / 32768.0)


def test_stereo_is_averaged(tmp_path):
    frames = np.tile(np.array([16384, -16384], dtype=np.int16), 100)
    path = tmp_path / "s.wav"
    with wave.open(str(path), "wb") as w:
        w.setnchannels(2)
        w.setsampwidth(2)
        w.setframerate(SR)
        w.writeframes(frames.tobytes())
    clip = load_wav(path)
    assert len(clip) == 100
    assert np.all(clip.samples == 0.0)


@pytest.mark.parametrize("bits", [8, 24, 32])
def test_integer_widths(tmp_path, bits):
    vals = np.array([-1.0, -0.5, 0.0, 0.5])
    if bits == 8:
        payload = bytes((vals * 128 + 128).astype(np.uint8))
    elif bits == 24:
        ints = (vals * 2**23).astype(np.int64)
        payload = b"".join(int(v).to_bytes(3, "little", signed=True) for v in ints)
    else:
        payload = (vals * 2**31).astype(np.int32).tobytes()
    path = tmp_path / f"i{bits}.wav"
    path.write_bytes(_riff(1, 1, bits, payload))
    np.testing.assert_allclose(load_wav(path).samples, vals, atol=1e-12)


def test_float32_is_clamped(tmp_path):
    payload = np.array([0.25, 1.5, -2.0], dtype=np.float32).tobytes()
    path = tmp_path / "f.wav"
    path.write_bytes(_riff(3, 1, 32, payload))
    assert load_wav(path).samples.tolist() == [0.25, 1.0, -1.0]


def test_error_paths(tmp_path):
    bad = tmp_path / "bad.wav"
    bad.write_bytes(b"RIFX0000")
    with pytest.raises(CorruptFile):
        load_wav(bad)
    mp3 = tmp_path / "codec.wav"
    mp3.write_bytes(_riff(0x55, 1, 16, b"\x00\x00"))
    with pytest.raises(UnsupportedFormat):
        load_wav(mp3)
    empty = tmp_path / "empty.wav"
    empty.write_bytes(_riff(1, 1, 16, b""))
    with pytest.raises(EmptyAudio):
        load_wav(empty)
    full = _riff(1, 1, 16, np.zeros(100, np.int16).tobytes())
    trunc = tmp_path / "trunc.wav"
    trunc.write_bytes(full[:30])
    with pytest.raises(CorruptFile):
        load_wav(trunc)


def test_write_read_roundtrip(tmp_path):
    x = tone(300, 0.1)
    write_wav(tmp_path / "t.wav", clip_of(x))
    back = load_wav(tmp_path / "t.wav")
    np.testing.assert_allclose(back.samples, x, atol=1.0 / 32768)


# ---------------------------------------------------------------------------
# silence removal


def oracle_removed_samples(x, sr, thr_db, min_ms, win_ms=25.0, hop_ms=10.0):
    """Independent frame-energy count: samples covered by long silent runs."""
    win, hop = int(round(win_ms * sr / 1000)), int(round(hop_ms * sr / 1000))
    levels, start = [], 0
    while True:
        seg = x[start : start + win]
        levels.append(np.sqrt(np.sum(seg**2) / len(seg)))
        if start + win >= len(x):
            break
        start += hop
    peak = max(levels)
    silent = [lv < peak * 10 ** (thr_db / 20) for lv in levels]
    covered = set()
    i = 0
    while i < len(silent):
        if not silent[i]:
            i += 1
            continue
        j = i
        while j + 1 < len(silent) and silent[j + 1]:
            j += 1
        lo, hi = i * hop, min(j * hop + win, len(x))
        if hi - lo >= min_ms * sr / 1000:
            covered.update(range(lo, hi))
        i = j + 1
    return len(covered)


@pytest.mark.parametrize("gap", [0.25, 0.5, 0.8])
def test_tone_silence_tone_matches_oracle(gap):
    x = np.concatenate((tone(440, 0.5), np.zeros(int(gap * SR)), tone(440, 0.5)))
    out = remove_silence(clip_of(x))
    assert len(x) - len(out) == oracle_removed_samples(x, SR, -35.0, 200.0)
    assert abs(out.duration_seconds - 1.0) <= 0.010


def test_short_gap_is_kept():
    x = np.concatenate((tone(440, 0.5), np.zeros(int(0.15 * SR)), tone(440, 0.5)))
    out = remove_silence(clip_of(x))
    assert out is not None and len(out) == len(x)


def test_no_silence_is_identity_and_all_zero_raises():
    c = clip_of(tone(200, 0.4))
    assert remove_silence(c) is c
    with pytest.raises(EmptyAudio):
        remove_silence(clip_of(np.zeros(8000)))
    with pytest.raises(ValueError):
        remove_silence(c, threshold_db=3.0)


@settings(max_examples=25, deadline=None)
@given(
    pieces=st.lists(st.tuples(st.booleans(), st.floats(0.05, 0.5)), min_size=1, max_size=5),
    amp=st.floats(0.05, 1.0),
)
def test_silence_removal_properties(pieces, amp):
    rng = np.random.default_rng(1)
    parts = [tone(330, 0.2, amp)]
    for loud, dur in pieces:
        n = int(dur * SR)
        parts.append(amp * rng.uniform(-1, 1, n) if loud else np.zeros(n))
    x = np.concatenate(parts)
    c = clip_of(x)
    mask = silence_mask(c)
    once = remove_silence(c)
    assert len(once) <= len(c)
    np.testing.assert_array_equal(once.samples, c.samples[~mask])
    twice = remove_silence(once)
    np.testing.assert_array_equal(twice.samples, once.samples)


# ---------------------------------------------------------------------------
# energy normalisation


def test_normalize_energy_gain():
    x = tone(250, 0.3, amp=0.1 * np.sqrt(2))
    out, n = normalize_energy(clip_of(x), 0.05)
    assert n == 0
    np.testing.assert_allclose(out.samples, x * (0.05 / rms(x)))
    assert rms(out.samples) == pytest.approx(0.05, rel=1e-6)
    with pytest.raises(DegenerateSignal):
        normalize_energy(clip_of(np.zeros(100)))


def test_normalize_energy_reports_clipping():
    x = np.r_[np.full(10, 0.001), 0.9]
    out, n = normalize_energy(clip_of(x), 0.5)
    assert n > 0 and np.max(np.abs(out.samples)) == 1.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), k=st.floats(0.05, 0.95))
def test_normalize_energy_properties(seed, k):
    x = np.random.default_rng(seed).uniform(-0.5, 0.5, 400)
    c = clip_of(x)
    same, _ = normalize_energy(c, rms(x))
    np.testing.assert_allclose(same.samples, x, rtol=1e-12, atol=0)
    a, _ = normalize_energy(c, 0.1)
    b, _ = normalize_energy(clip_of(k * x), 0.1)
    np.testing.assert_allclose(a.samples, b.samples, rtol=1e-9, atol=1e-15)


def test_preprocessor_modes():
    x = np.concatenate((tone(440, 0.3), np.zeros(SR // 2), tone(440, 0.3)))
    c = clip_of(x)
    assert Preprocessor(PreprocessMode.parse("wn"))(c) is c
    assert len(Preprocessor(PreprocessMode.parse("sr"))(c)) < len(c)
    assert rms(Preprocessor(PreprocessMode.parse("en"), target_rms=0.2)(c).samples) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        PreprocessMode.parse("xx")
