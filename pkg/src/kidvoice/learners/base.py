from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import DimensionMismatch, SingleClassData

ADULT, KID = 0, 1


@dataclass(frozen=True)
class Standardizer:
    """Per-column mean / population stddev captured from training rows."""

    mean: np.ndarray
    scale: np.ndarray  # 0 marks a zero-variance column

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] < 2:
            raise ValueError("standardisation needs at least two rows")
        return cls(X.mean(axis=0), X.std(axis=0))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.dim:
            raise DimensionMismatch(f"expected {self.dim} columns, got {X.shape[-1]}")
        live = self.scale > 0.0
        out = np.zeros_like(X)
        out[..., live] = (X[..., live] - self.mean[live]) / self.scale[live]
        return out

    def inverse_transform(self, Z: np.ndarray) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        return Z * self.scale + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict | None) -> "Standardizer | None":
        if d is None:
            return None
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["scale"], dtype=np.float64))


@dataclass
class LabeledMatrix:
    features: np.ndarray
    labels: np.ndarray
    feature_names: list[str] = field(default_factory=list)
    standardization: Standardizer | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise DimensionMismatch("features must be a 2-D matrix")
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.labels.shape[0] != self.features.shape[0]:
            raise DimensionMismatch("one label per row required")
        if not np.all(np.isin(self.labels, (ADULT, KID))):
            raise ValueError("labels must be 0 (ADULT) or 1 (KID)")
        if np.isnan(self.features).any():
            raise ValueError("features contain NaN")
        if not self.feature_names:
            self.feature_names = [f"f{i}" for i in range(self.features.shape[1])]
        elif len(self.feature_names) != self.features.shape[1]:
            raise DimensionMismatch("feature_names length does not match columns")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "LabeledMatrix":
        return replace(self, features=self.features[idx], labels=self.labels[idx])


def standardize_fit_transform(train: LabeledMatrix) -> LabeledMatrix:
    """Standardise ``train`` in place of its raw columns and remember the stats."""
    if train.n < 2:
        raise ValueError("standardisation needs at least two rows")
    stats = Standardizer.fit(train.features)
    return replace(train, features=stats.transform(train.features), standardization=stats)


def require_both_classes(labels: np.ndarray) -> None:
    present = np.unique(labels)
    if present.shape[0] < 2:
        raise SingleClassData(f"training data holds a single class {present.tolist()}")


def as_2d(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


def proba_pair(p_kid: np.ndarray) -> np.ndarray:
    p_kid = np.clip(p_kid, 0.0, 1.0)
    return np.column_stack((1.0 - p_kid, p_kid))


class Model:
    """Shared predict plumbing: optional stored standardisation and dimension check."""

    model_kind = "model"
    standardization: Standardizer | None = None
    n_features: int = 0

    def _prepare(self, x):
        X, single = as_2d(x)
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"{self.model_kind} expects {self.n_features} features, got {X.shape[1]}")
        if self.standardization is not None:
            X = self.standardization.transform(X)
        return X, single

    def _proba(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict_proba(self, x) -> np.ndarray:
        """(p_adult, p_kid) rows; a 1-D input gives a single pair."""
        X, single = self._prepare(x)
        P = self._proba(X)
        return P[0] if single else P

    def predict(self, x) -> np.ndarray:
        P = np.atleast_2d(self.predict_proba(x))
        # ties go to ADULT
        return (P[:, 1] > 0.5).astype(np.int64)
