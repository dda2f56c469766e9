"""Frame-level DSP primitives: framing, mel/MFCC, LPC/LSP, pitch and voice quality."""

from __future__ import annotations

import math

import numpy as np
import scipy.fft
import scipy.signal

LOUDNESS_FLOOR_DB = -87.0
MEL_FLOOR = 1e-30


# ---------------------------------------------------------------------------
# framing


def n_frames(n_samples: int, window: int, hop: int) -> int:
    if n_samples < window:
        return 0
    return 1 + (n_samples - window) // hop


def frame_signal(x: np.ndarray, window: int, hop: int) -> np.ndarray:
    """Return an (n_frames, window) view of ``x``; trailing samples are dropped."""
    n = n_frames(x.shape[0], window, hop)
    return np.lib.stride_tricks.sliding_window_view(x, window)[::hop][:n]


def centered_frames(x: np.ndarray, centers: np.ndarray, length: int) -> np.ndarray:
    """Frames of ``length`` samples centred on ``centers``, zero-padded at the edges."""
    half = length // 2
    padded = np.concatenate((np.zeros(half), x, np.zeros(length)))
    view = np.lib.stride_tricks.sliding_window_view(padded, length)
    return view[centers]


def regression_deltas(contour: np.ndarray, width: int = 2) -> np.ndarray:
    """Regression deltas over +-``width`` frames along axis 0, edges replicated."""
    c = np.asarray(contour, dtype=np.float64)
    if c.shape[0] == 0:
        return c.copy()
    pad = [(width, width)] + [(0, 0)] * (c.ndim - 1)
    p = np.pad(c, pad, mode="edge")
    n = c.shape[0]
    num = np.zeros_like(c)
    for k in range(1, width + 1):
        num += k * (p[width + k : width + k + n] - p[width - k : width - k + n])
    return num / (2.0 * sum(k * k for k in range(1, width + 1)))


# ---------------------------------------------------------------------------
# energy / spectral


def loudness_db(frames: np.ndarray) -> np.ndarray:
    energy = np.mean(frames * frames, axis=1)
    return 10.0 * np.log10(np.maximum(energy, 10.0 ** (LOUDNESS_FLOOR_DB / 10.0)))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, n_fft: int, sample_rate: int, fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular HTK-mel filters, shape (n_filters, n_fft // 2 + 1)."""
    fmax = sample_rate / 2.0 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_filters + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs - lo) / (mid - lo)
    down = (hi - freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(up, down))


def lifter_weights(n_ceps: int, lifter: float) -> np.ndarray:
    n = np.arange(n_ceps)
    return 1.0 + (lifter / 2.0) * np.sin(np.pi * n / lifter)


def log_mel_and_mfcc(windowed: np.ndarray, fbank: np.ndarray, n_fft: int, n_ceps: int, lifter: float):
    spec = np.abs(np.fft.rfft(windowed, n=n_fft, axis=1)) ** 2
    mel = spec @ fbank.T
    log_mel = np.log(np.maximum(mel, MEL_FLOOR))
    ceps = scipy.fft.dct(log_mel, type=2, norm="ortho", axis=1)[:, :n_ceps]
    return log_mel, ceps * lifter_weights(n_ceps, lifter)


# ---------------------------------------------------------------------------
# LPC / LSP


def autocorr(frame: np.ndarray, max_lag: int) -> np.ndarray:
    n = frame.shape[-1]
    spec = np.fft.rfft(frame, n=2 * n, axis=-1)
    r = np.fft.irfft(spec * np.conj(spec), n=2 * n, axis=-1)
    return r[..., : max_lag + 1]


def levinson_durbin(r: np.ndarray, order: int):
    """Solve for predictor polynomial a (a[0] = 1) from autocorrelation r.

    Returns (a, reflection coefficients, prediction error). Recursion stops
    early (remaining coefficients zero) if the error stops being positive.
    """
    a = np.zeros(order + 1)
    a[0] = 1.0
    k = np.zeros(order)
    err = float(r[0])
    if err <= 0.0:
        return a, k, 0.0
    for i in range(1, order + 1):
        acc = r[i] + np.dot(a[1:i], r[i - 1 : 0 : -1])
        ki = -acc / err
        if not abs(ki) < 1.0:
            break
        a[1 : i + 1] = a[1 : i + 1] + ki * a[i - 1 :: -1][:i]
        k[i - 1] = ki
        err *= 1.0 - ki * ki
        if err <= 0.0:
            break
    return a, k, err


def lpc_to_lsf(a: np.ndarray) -> np.ndarray:
    """Line spectral frequencies (radians, ascending) of predictor polynomial ``a``."""
    p = a.shape[0] - 1
    ext = np.concatenate((a, [0.0]))
    sym = ext + ext[::-1]
    anti = ext - ext[::-1]
    # strip the trivial roots at z = -1 and z = +1 (p even)
    if p % 2 == 0:
        sym, _ = np.polydiv(sym, [1.0, 1.0])
        anti, _ = np.polydiv(anti, [1.0, -1.0])
    else:
        anti, _ = np.polydiv(anti, [1.0, 0.0, -1.0])
    out = []
    for poly in (sym, anti):
        ang = np.sort(np.abs(np.angle(np.roots(poly))))
        out.append(ang[::2])
    lsf = np.sort(np.concatenate(out))[:p]
    if lsf.shape[0] < p:
        lsf = np.concatenate((lsf, np.full(p - lsf.shape[0], np.pi)))
    return lsf


# ---------------------------------------------------------------------------
# pitch


def nccf(frames: np.ndarray, max_lag: int) -> np.ndarray:
    """Normalised cross-correlation of each frame with its lagged self.

    ``out[i, tau] = sum x[n] x[n+tau] / sqrt(sum x[n]^2 * sum x[n+tau]^2)`` over
    the overlapping part, for tau in [0, max_lag].
    """
    n = frames.shape[1]
    r = autocorr(frames, max_lag)
    sq = frames * frames
    head = np.cumsum(sq, axis=1)  # head[:, m-1] = sum_{j<m}
    tail = np.cumsum(sq[:, ::-1], axis=1)  # tail[:, m-1] = sum of last m
    lags = np.arange(max_lag + 1)
    e0 = head[:, n - 1 - lags]
    e1 = tail[:, n - 1 - lags]
    den = np.sqrt(e0 * e1)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0.0, r / np.where(den > 0.0, den, 1.0), 0.0)
    return out


def parabolic_peak(y_left: float, y_mid: float, y_right: float) -> tuple[float, float]:
    """Offset in (-0.5, 0.5) and height of the vertex through three points."""
    den = y_left - 2.0 * y_mid + y_right
    if den >= 0.0:
        return 0.0, y_mid
    off = 0.5 * (y_left - y_right) / den
    off = min(max(off, -0.5), 0.5)
    return off, y_mid - 0.25 * (y_left - y_right) * off


def pick_pitch(curve: np.ndarray, min_lag: int, max_lag: int, octave_ratio: float = 0.9):
    """Pick the period lag from one NCCF curve.

    Candidates are local maxima within [min_lag, max_lag]. The shortest lag
    whose peak reaches ``octave_ratio`` times the best peak wins, which keeps
    the tracker from locking onto multiples of the true period.
    Returns (lag, peak value); lag is 0.0 when no candidate exists.
    """
    seg = curve[min_lag - 1 : max_lag + 2]
    mid = seg[1:-1]
    is_peak = (mid > seg[:-2]) & (mid >= seg[2:])
    idx = np.flatnonzero(is_peak)
    if idx.size == 0:
        return 0.0, 0.0
    vals = mid[idx]
    best = vals.max()
    if best <= 0.0:
        return 0.0, float(best)
    chosen = idx[np.argmax(vals >= octave_ratio * best)]
    lag = chosen + min_lag
    off, height = parabolic_peak(curve[lag - 1], curve[lag], curve[lag + 1])
    return lag + off, float(height)


def cycle_peaks(x: np.ndarray, period: float) -> np.ndarray:
    """Indices of one positive peak per pitch cycle, walking forward from the start."""
    t = int(round(period))
    if t < 2 or x.shape[0] < 2 * t:
        return np.zeros(0, dtype=int)
    peaks = [int(np.argmax(x[:t]))]
    lo_step = max(1, int(math.floor(0.8 * period)))
    hi_step = int(math.ceil(1.2 * period))
    while True:
        lo = peaks[-1] + lo_step
        hi = peaks[-1] + hi_step + 1
        if hi > x.shape[0]:
            break
        peaks.append(lo + int(np.argmax(x[lo:hi])))
    return np.asarray(peaks)


def voice_quality(x: np.ndarray, period: float) -> tuple[float, float, float]:
    """(jitterLocal, jitterDDP, shimmerLocal) of one voiced analysis window.

    Cycle peaks are refined to sub-sample position and height by parabolic
    interpolation before differencing.
    """
    idx = cycle_peaks(x, period)
    if idx.shape[0] < 3:
        return 0.0, 0.0, 0.0
    pos = idx.astype(np.float64)
    amps = x[idx].astype(np.float64)
    for j, i in enumerate(idx):
        if 0 < i < x.shape[0] - 1:
            off, height = parabolic_peak(x[i - 1], x[i], x[i + 1])
            pos[j] += off
            amps[j] = height
    periods = np.diff(pos)
    amps = np.abs(amps)
    mean_p = periods.mean()
    jit = float(np.mean(np.abs(np.diff(periods))) / mean_p) if periods.shape[0] > 1 else 0.0
    ddp = float(np.mean(np.abs(np.diff(periods, n=2))) / mean_p) if periods.shape[0] > 2 else 0.0
    mean_a = amps.mean()
    shim = float(np.mean(np.abs(np.diff(amps))) / mean_a) if mean_a > 0.0 else 0.0
    return jit, ddp, shim


def smoothed_envelope(f0: np.ndarray, voiced: np.ndarray, keep: float = 0.5) -> np.ndarray:
    """Exponentially smoothed F0 held across unvoiced frames (0 before first voicing)."""
    env = np.zeros_like(f0)
    cur = 0.0
    for i in range(f0.shape[0]):
        if voiced[i]:
            cur = f0[i] if cur == 0.0 else keep * cur + (1.0 - keep) * f0[i]
        env[i] = cur
    return env


def resample_poly(x: np.ndarray, src_rate: int, dst_rate: int) -> np.ndarray:
    g = math.gcd(int(src_rate), int(dst_rate))
    return scipy.signal.resample_poly(x, dst_rate // g, src_rate // g)
