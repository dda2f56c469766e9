"""IS10-style 1582-dimensional paralinguistic feature vector."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.signal

from ..audio import AudioClip
from ..errors import DimensionMismatch, TooShort
from . import dsp
from .functionals import PRIMARY_SET, VOICING_SET, FunctionalSet, compute_functionals

N_MEL = 26
N_MFCC = 15
N_LOGMEL = 8
LPC_ORDER = 8
LIFTER = 22.0
F0_MIN = 55.0
F0_MAX = 500.0
VOICING_THRESHOLD = 0.45
PITCH_WINDOW_MS = 60.0
F0_ENV_KEEP = 0.5

PRIMARY_LLDS = (
    ("pcm_loudness",)
    + tuple(f"mfcc[{i}]" for i in range(N_MFCC))
    + tuple(f"logMelFreqBand[{i}]" for i in range(N_LOGMEL))
    + tuple(f"lspFreq[{i}]" for i in range(LPC_ORDER))
    + ("F0finEnv", "voicingFinalUnclipped")
)
VOICING_LLDS = ("F0final", "jitterLocal", "jitterDDP", "shimmerLocal")
EXTRA_FEATURES = ("F0final_nOnsets", "duration")

# contours whose values shift by a constant when the input is rescaled
LOG_ENERGY_LLDS = ("pcm_loudness", "mfcc[0]") + tuple(f"logMelFreqBand[{i}]" for i in range(N_LOGMEL))


def _names(llds, fset: FunctionalSet) -> list[str]:
    contours = list(llds) + [f"{name}_de" for name in llds]
    return [f"{c}_{f}" for c in contours for f in fset.names]


FEATURE_NAMES: tuple[str, ...] = tuple(
    _names(PRIMARY_LLDS, PRIMARY_SET) + _names(VOICING_LLDS, VOICING_SET) + list(EXTRA_FEATURES)
)
N_FEATURES = len(FEATURE_NAMES)
assert N_FEATURES == 34 * 2 * 21 + 4 * 2 * 19 + 2 == 1582


def is_log_energy_feature(name: str) -> bool:
    base = name.split("_de_")[0] if "_de_" in name else name.rsplit("_", 1)[0]
    return base in LOG_ENERGY_LLDS


@dataclass(frozen=True)
class FrameConfig:
    window_ms: float = 20.0
    hop_ms: float = 10.0
    window_fn: str = "hamming"
    analysis_rate: int = 16000

    def __post_init__(self):
        if not (self.window_ms >= self.hop_ms > 0):
            raise ValueError("FrameConfig requires window_ms >= hop_ms > 0")

    @property
    def window(self) -> int:
        return int(round(self.window_ms * self.analysis_rate / 1000))

    @property
    def hop(self) -> int:
        return int(round(self.hop_ms * self.analysis_rate / 1000))


@dataclass
class LldMatrix:
    primary: np.ndarray  # (n_frames, 34)
    primary_deltas: np.ndarray
    voicing: np.ndarray  # (n_voiced, 4)
    voicing_deltas: np.ndarray
    voiced: np.ndarray  # (n_frames,) bool
    pitch_onset_count: int
    duration_s: float

    @property
    def n_frames(self) -> int:
        return self.primary.shape[0]

    def column(self, name: str) -> np.ndarray:
        if name in PRIMARY_LLDS:
            return self.primary[:, PRIMARY_LLDS.index(name)]
        return self.voicing[:, VOICING_LLDS.index(name)]


@dataclass(frozen=True)
class Is10Vector:
    values: np.ndarray
    index_map: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        if self.values.shape != (len(self.index_map),):
            raise DimensionMismatch(f"expected {len(self.index_map)} values, got {self.values.shape}")

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.index_map.index(name)])


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Polyphase windowed-sinc resampling; identity when rates already match."""
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if clip.sample_rate == target_rate:
        return clip
    y = dsp.resample_poly(clip.samples, clip.sample_rate, target_rate)
    return AudioClip(y, target_rate, clip.source_id)


def _pitch_track(x: np.ndarray, centers: np.ndarray, sr: int):
    length = int(round(PITCH_WINDOW_MS * sr / 1000))
    min_lag = int(np.floor(sr / F0_MAX))
    max_lag = int(np.ceil(sr / F0_MIN))
    frames = dsp.centered_frames(x, centers, length)
    curves = dsp.nccf(frames, max_lag + 1)
    n = centers.shape[0]
    f0 = np.zeros(n)
    prob = np.zeros(n)
    quality = np.zeros((n, 3))
    half = length // 2
    for i in range(n):
        lag, height = dsp.pick_pitch(curves[i], min_lag, max_lag)
        prob[i] = min(max(height, 0.0), 1.0)
        if lag <= 0.0:
            continue
        freq = sr / lag
        if height >= VOICING_THRESHOLD and F0_MIN <= freq <= F0_MAX:
            f0[i] = freq
            lo = max(0, centers[i] - half)
            quality[i] = dsp.voice_quality(x[lo : centers[i] - half + length], lag)
    return f0, prob, quality


def compute_llds(clip: AudioClip, cfg: FrameConfig = FrameConfig()) -> LldMatrix:
    """Frame-level descriptors of a clip already at ``cfg.analysis_rate``."""
    if clip.sample_rate != cfg.analysis_rate:
        raise ValueError(f"clip at {clip.sample_rate} Hz, expected {cfg.analysis_rate} Hz")
    x = clip.samples
    sr = cfg.analysis_rate
    win, hop = cfg.window, cfg.hop
    if x.shape[0] < win:
        raise TooShort(f"{clip.source_id}: {x.shape[0]} samples < one {win}-sample window")

    frames = dsp.frame_signal(x, win, hop)
    n = frames.shape[0]
    windowed = frames * scipy.signal.get_window(cfg.window_fn, win, fftbins=True)
    n_fft = 1 << (win - 1).bit_length()

    loud = dsp.loudness_db(frames)
    fbank = dsp.mel_filterbank(N_MEL, n_fft, sr, 0.0, sr / 2.0)
    log_mel, mfcc = dsp.log_mel_and_mfcc(windowed, fbank, n_fft, N_MFCC, LIFTER)

    r = dsp.autocorr(windowed, LPC_ORDER)
    lsp = np.empty((n, LPC_ORDER))
    for i in range(n):
        a, _, _ = dsp.levinson_durbin(r[i], LPC_ORDER)
        lsp[i] = dsp.lpc_to_lsf(a)

    centers = np.arange(n) * hop + win // 2
    f0, prob, quality = _pitch_track(x, centers, sr)
    voiced = f0 > 0.0
    env = dsp.smoothed_envelope(f0, voiced, F0_ENV_KEEP)

    primary = np.column_stack([loud, mfcc, log_mel[:, :N_LOGMEL], lsp, env, prob])
    voicing = np.column_stack([f0, quality])[voiced]
    onsets = int(np.count_nonzero(np.diff(np.concatenate(([False], voiced)).astype(np.int8)) == 1))
    return LldMatrix(
        primary=primary,
        primary_deltas=dsp.regression_deltas(primary),
        voicing=voicing,
        voicing_deltas=dsp.regression_deltas(voicing),
        voiced=voiced,
        pitch_onset_count=onsets,
        duration_s=x.shape[0] / sr,
    )


def apply_functionals(llds: LldMatrix, fset: FunctionalSet = PRIMARY_SET, voicing_set: FunctionalSet = VOICING_SET) -> Is10Vector:
    """Summarise the LLD matrix into the 1582-value vector in FEATURE_NAMES order."""
    if llds.n_frames < 1:
        raise TooShort("no frames to summarise")
    parts = [
        compute_functionals(llds.primary, fset).ravel(),
        compute_functionals(llds.primary_deltas, fset).ravel(),
    ]
    if llds.voicing.shape[0] > 0:
        parts.append(compute_functionals(llds.voicing, voicing_set).ravel())
        parts.append(compute_functionals(llds.voicing_deltas, voicing_set).ravel())
        onsets = float(llds.pitch_onset_count)
    else:
        parts.append(np.zeros(2 * len(VOICING_LLDS) * len(voicing_set)))
        onsets = 0.0
    parts.append(np.array([onsets, llds.duration_s]))
    values = np.concatenate(parts)
    values[~np.isfinite(values)] = 0.0
    return Is10Vector(values)


def extract_is10(clip: AudioClip, cfg: FrameConfig = FrameConfig()) -> Is10Vector:
    return apply_functionals(compute_llds(resample(clip, cfg.analysis_rate), cfg))


# ---------------------------------------------------------------------------
# CSV interchange


def _fmt(v: float) -> str:
    return f"{v:.9g}"


def write_features_csv(path, rows) -> None:
    """Write ``(source_id, label, Is10Vector | array)`` rows with the index map as header."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(FEATURE_NAMES) + ["source_id", "label"])
        for source_id, label, vec in rows:
            values = vec.values if isinstance(vec, Is10Vector) else np.asarray(vec)
            if values.shape != (N_FEATURES,):
                raise DimensionMismatch(f"{source_id}: expected {N_FEATURES} features")
            w.writerow([_fmt(v) for v in values] + [source_id, "" if label is None else label])


def read_features_csv(path):
    """Inverse of :func:`write_features_csv`: (ids, labels, matrix)."""
    ids, labels, rows = [], [], []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if tuple(header[:-2]) != FEATURE_NAMES or header[-2:] != ["source_id", "label"]:
            raise DimensionMismatch(f"{Path(path).name}: header does not match the feature index map")
        for row in r:
            rows.append([float(v) for v in row[:-2]])
            ids.append(row[-2])
            labels.append(row[-1] or None)
    return ids, labels, np.asarray(rows, dtype=np.float64).reshape(-1, N_FEATURES)
