"""Utterance audio: WAV ingest, silence removal and energy normalisation."""

from __future__ import annotations

import enum
import logging
import struct
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptFile, DegenerateSignal, EmptyAudio, UnsupportedFormat

log = logging.getLogger(__name__)

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

DEFAULT_THRESHOLD_DB = -35.0
DEFAULT_MIN_SILENCE_MS = 200.0
DEFAULT_TARGET_RMS = 0.1
VAD_WINDOW_MS = 25.0
VAD_HOP_MS = 10.0


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int
    source_id: str = ""
    # samples are stored read-only float64, clamped to [-1, 1]

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(x)):
            raise ValueError("audio samples must be finite")
        np.clip(x, -1.0, 1.0, out=x)
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration_seconds(self) -> float:
        return len(self) / self.sample_rate

    def with_samples(self, samples: np.ndarray) -> "AudioClip":
        return AudioClip(samples, self.sample_rate, self.source_id)


class PreprocessMode(str, enum.Enum):
    WITHOUT_NORMALIZATION = "wn"
    ENERGY_NORMALIZED = "en"
    SILENCE_REMOVED = "sr"

    @classmethod
    def parse(cls, value: "str | PreprocessMode") -> "PreprocessMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown preprocess mode {value!r}; expected wn, en or sr") from None


def rms(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return 0.0
    return float(np.sqrt(np.mean(x * x)))


# ---------------------------------------------------------------------------
# WAV I/O


def _chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8 : pos + 8 + size]
        if len(body) < size:
            # truncated final chunk; only tolerable for 'data'
            yield cid, body, True
            return
        yield cid, body, False
        pos += 8 + size + (size & 1)


def load_wav(path, source_id: str | None = None) -> AudioClip:
    """Read a RIFF/WAVE file into a mono clip scaled to [-1, 1].

    Integer PCM (8/16/24/32-bit) and IEEE float (32/64-bit) are accepted.
    Multichannel audio is averaged to mono; the sample rate is kept as is.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise CorruptFile(f"{path}: not a RIFF/WAVE file")

    fmt = None
    pcm = None
    for cid, body, truncated in _chunks(data):
        if cid == b"fmt ":
            if len(body) < 16:
                raise CorruptFile(f"{path}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
            tag = fmt[0]
            if tag == WAVE_FORMAT_EXTENSIBLE:
                if len(body) < 40:
                    raise CorruptFile(f"{path}: extensible fmt chunk too short")
                tag = struct.unpack_from("<H", body, 24)[0]
                fmt = (tag,) + fmt[1:]
        elif cid == b"data":
            if truncated:
                raise CorruptFile(f"{path}: data chunk truncated")
            pcm = body
    if fmt is None or pcm is None:
        raise CorruptFile(f"{path}: missing fmt or data chunk")

    tag, channels, rate, _, block_align, bits = fmt
    if channels < 1 or rate <= 0 or bits == 0:
        raise CorruptFile(f"{path}: invalid header fields")
    width = bits // 8
    if block_align != channels * width:
        raise CorruptFile(f"{path}: block_align {block_align} inconsistent with {channels}x{bits}-bit")

    if tag == WAVE_FORMAT_PCM:
        x = _decode_int(pcm, width, path)
    elif tag == WAVE_FORMAT_IEEE_FLOAT:
        if width not in (4, 8):
            raise UnsupportedFormat(f"{path}: {bits}-bit float not supported")
        n = len(pcm) // width
        x = np.frombuffer(pcm[: n * width], dtype="<f4" if width == 4 else "<f8").astype(np.float64)
    else:
        raise UnsupportedFormat(f"{path}: codec tag 0x{tag:04x} is not PCM or IEEE float")

    frames = x.size // channels
    if frames == 0:
        raise EmptyAudio(f"{path}: no samples")
    x = x[: frames * channels].reshape(frames, channels).mean(axis=1)
    x[~np.isfinite(x)] = 0.0
    return AudioClip(x, rate, source_id if source_id is not None else path.stem)


def _decode_int(pcm: bytes, width: int, path) -> np.ndarray:
    n = len(pcm) // width
    pcm = pcm[: n * width]
    if width == 1:
        return (np.frombuffer(pcm, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    if width == 2:
        return np.frombuffer(pcm, dtype="<i2").astype(np.float64) / 32768.0
    if width == 3:
        b = np.frombuffer(pcm, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        v = np.where(v >= 1 << 23, v - (1 << 24), v)
        return v.astype(np.float64) / float(1 << 23)
    if width == 4:
        return np.frombuffer(pcm, dtype="<i4").astype(np.float64) / float(1 << 31)
    raise UnsupportedFormat(f"{path}: {width * 8}-bit integer PCM not supported")


def write_wav(path, clip: AudioClip) -> None:
    """Write a 16-bit mono PCM file."""
    q = np.round(np.clip(clip.samples, -1.0, 1.0) * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(clip.sample_rate)
        w.writeframes(q.tobytes())


# ---------------------------------------------------------------------------
# preprocessing


def frame_rms(x: np.ndarray, window: int, hop: int) -> np.ndarray:
    """RMS of every analysis window; the last window may be partial.

    Each value depends only on the samples inside its window, so the result
    for a stretch of audio does not change when unrelated audio is cut away.
    """
    n = x.shape[0]
    n_frames = 1 if n <= window else 1 + -(-(n - window) // hop)
    padded = np.zeros((n_frames - 1) * hop + window)
    padded[:n] = x
    frames = np.lib.stride_tricks.sliding_window_view(padded, window)[::hop][:n_frames]
    starts = np.arange(n_frames) * hop
    counts = np.minimum(starts + window, n) - starts
    return np.sqrt(np.sum(frames * frames, axis=1) / counts)


def silence_mask(
    clip: AudioClip,
    threshold_db: float = DEFAULT_THRESHOLD_DB,
    min_silence_ms: float = DEFAULT_MIN_SILENCE_MS,
) -> np.ndarray:
    """Boolean mask of samples that :func:`remove_silence` would cut."""
    if len(clip) == 0:
        raise EmptyAudio(f"{clip.source_id}: empty clip")
    if threshold_db >= 0:
        raise ValueError("threshold_db must be negative")
    if min_silence_ms < 0:
        raise ValueError("min_silence_ms must be >= 0")

    x = clip.samples
    n = x.shape[0]
    window = max(1, int(round(VAD_WINDOW_MS * clip.sample_rate / 1000)))
    hop = max(1, int(round(VAD_HOP_MS * clip.sample_rate / 1000)))
    levels = frame_rms(x, window, hop)
    peak = levels.max()
    if peak <= 0.0:
        raise EmptyAudio(f"{clip.source_id}: every frame is silent")

    silent = levels < peak * 10.0 ** (threshold_db / 20.0)
    min_len = min_silence_ms * clip.sample_rate / 1000.0
    mask = np.zeros(n, dtype=bool)
    # walk runs of consecutive silent frames
    edges = np.flatnonzero(np.diff(np.concatenate(([0], silent.astype(np.int8), [0]))))
    for first, stop in zip(edges[::2], edges[1::2]):
        lo = first * hop
        hi = min((stop - 1) * hop + window, n)
        if hi - lo >= min_len:
            mask[lo:hi] = True
    return mask


def remove_silence(
    clip: AudioClip,
    threshold_db: float = DEFAULT_THRESHOLD_DB,
    min_silence_ms: float = DEFAULT_MIN_SILENCE_MS,
) -> AudioClip:
    """Cut long runs of low-energy frames out of ``clip``.

    Frames are 25 ms windows on a 10 ms hop. A frame is silent when its RMS
    lies more than ``threshold_db`` below the loudest frame. Runs of silent
    frames whose covered span is at least ``min_silence_ms`` long are removed
    (the whole span of their windows); everything else is concatenated
    unchanged.
    """
    mask = silence_mask(clip, threshold_db, min_silence_ms)
    if not mask.any():
        return clip
    kept = clip.samples[~mask]
    if kept.size == 0:
        raise EmptyAudio(f"{clip.source_id}: nothing left after silence removal")
    return clip.with_samples(kept)


def normalize_energy(clip: AudioClip, target_rms: float = DEFAULT_TARGET_RMS) -> tuple[AudioClip, int]:
    """Scale ``clip`` to ``target_rms``.

    Returns the scaled clip and the number of samples that had to be
    hard-clipped to [-1, 1] after the gain was applied.
    """
    if len(clip) == 0:
        raise EmptyAudio(f"{clip.source_id}: empty clip")
    if target_rms <= 0:
        raise ValueError("target_rms must be positive")
    level = rms(clip.samples)
    if level == 0.0:
        raise DegenerateSignal(f"{clip.source_id}: zero RMS, cannot normalise")
    gain = target_rms / level
    y = clip.samples * gain
    n_clipped = int(np.count_nonzero(np.abs(y) > 1.0))
    if n_clipped:
        log.warning("%s: %d samples clipped after gain %.3f", clip.source_id, n_clipped, gain)
    return clip.with_samples(y), n_clipped


@dataclass
class Preprocessor:
    """One experiment arm (WN / EN / SR) with its knobs."""

    mode: PreprocessMode = PreprocessMode.SILENCE_REMOVED
    threshold_db: float = DEFAULT_THRESHOLD_DB
    min_silence_ms: float = DEFAULT_MIN_SILENCE_MS
    target_rms: float = DEFAULT_TARGET_RMS
    clipped: dict = field(default_factory=dict)

    def __call__(self, clip: AudioClip) -> AudioClip:
        mode = PreprocessMode.parse(self.mode)
        if mode is PreprocessMode.SILENCE_REMOVED:
            return remove_silence(clip, self.threshold_db, self.min_silence_ms)
        if mode is PreprocessMode.ENERGY_NORMALIZED:
            out, n = normalize_energy(clip, self.target_rms)
            if n:
                self.clipped[clip.source_id] = n
            return out
        return clip
