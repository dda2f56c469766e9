"""Statistical functionals mapping LLD contours to fixed-size summaries.

Every function works column-wise on an (n_frames, n_contours) matrix and
returns an (n_contours, n_functionals) matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PRIMARY_FUNCTIONALS = (
    "maxPos",
    "minPos",
    "amean",
    "linregc1",
    "linregc2",
    "linregerrA",
    "linregerrQ",
    "stddev",
    "skewness",
    "kurtosis",
    "quartile1",
    "quartile2",
    "quartile3",
    "iqr1-2",
    "iqr2-3",
    "iqr1-3",
    "percentile1.0",
    "percentile99.0",
    "pctlrange0-1",
    "upleveltime75",
    "upleveltime90",
)
VOICING_FUNCTIONALS = PRIMARY_FUNCTIONALS[:-2]


@dataclass(frozen=True)
class FunctionalSet:
    names: tuple[str, ...]

    def __len__(self):
        return len(self.names)

    @property
    def with_uplevel(self) -> bool:
        return "upleveltime75" in self.names


PRIMARY_SET = FunctionalSet(PRIMARY_FUNCTIONALS)
VOICING_SET = FunctionalSet(VOICING_FUNCTIONALS)


def normalized_time(n: int) -> np.ndarray:
    if n == 1:
        return np.zeros(1)
    return np.arange(n) / (n - 1.0)


def compute_functionals(contours: np.ndarray, fset: FunctionalSet = PRIMARY_SET) -> np.ndarray:
    """Apply ``fset`` to every column of ``contours``.

    Conventions: positions are frame indices scaled to [0, 1]; regression is
    fitted over normalised time [0, 1]; stddev is the population value;
    skewness and kurtosis (non-excess) are 0 for constant contours; quantiles
    interpolate linearly between order statistics; up-level time X is the
    fraction of frames at or above min + X * (max - min), 1.0 when the range
    is zero. An empty contour yields all zeros.
    """
    c = np.asarray(contours, dtype=np.float64)
    if c.ndim == 1:
        c = c[:, None]
    n, m = c.shape
    if n == 0:
        return np.zeros((m, len(fset)))

    t = normalized_time(n)
    denom = max(n - 1, 1)
    max_pos = np.argmax(c, axis=0) / denom
    min_pos = np.argmin(c, axis=0) / denom

    mean = c.mean(axis=0)
    dev = c - mean
    var = np.mean(dev * dev, axis=0)
    std = np.sqrt(var)

    t_dev = t - t.mean()
    t_var = np.mean(t_dev * t_dev)
    if t_var > 0:
        slope = (t_dev @ dev) / n / t_var
    else:
        slope = np.zeros(m)
    offset = mean - slope * t.mean()
    resid = c - (offset + np.outer(t, slope))
    err_a = np.mean(np.abs(resid), axis=0)
    err_q = np.mean(resid * resid, axis=0)

    lo = c.min(axis=0)
    hi = c.max(axis=0)
    rng = hi - lo
    flat = (rng <= 1e-12 * np.maximum(np.maximum(np.abs(lo), np.abs(hi)), 1e-300)) | (std == 0.0)
    safe_std = np.where(flat, 1.0, std)
    skew = np.where(flat, 0.0, np.mean(dev**3, axis=0) / safe_std**3)
    kurt = np.where(flat, 0.0, np.mean(dev**4, axis=0) / safe_std**4)

    q1, q2, q3, p1, p99 = np.percentile(c, [25.0, 50.0, 75.0, 1.0, 99.0], axis=0)

    values = {
        "maxPos": max_pos,
        "minPos": min_pos,
        "amean": mean,
        "linregc1": slope,
        "linregc2": offset,
        "linregerrA": err_a,
        "linregerrQ": err_q,
        "stddev": std,
        "skewness": skew,
        "kurtosis": kurt,
        "quartile1": q1,
        "quartile2": q2,
        "quartile3": q3,
        "iqr1-2": q2 - q1,
        "iqr2-3": q3 - q2,
        "iqr1-3": q3 - q1,
        "percentile1.0": p1,
        "percentile99.0": p99,
        "pctlrange0-1": p99 - p1,
    }
    if fset.with_uplevel:
        for pct in (75, 90):
            thr = lo + (pct / 100.0) * rng
            frac = np.mean(c >= thr, axis=0)
            values[f"upleveltime{pct}"] = np.where(rng == 0.0, 1.0, frac)
    return np.stack([values[name] for name in fset.names], axis=1)
