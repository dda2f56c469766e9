"""Linear SVM trained in the primal with Pegasos-style subgradient steps."""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .base import LabeledMatrix, Model, proba_pair, require_both_classes


class LinearSvmModel(Model):
    model_kind = "linear_svm"

    def __init__(self, weights, bias, lam, epochs, seed, standardization=None, objective_history=None):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = float(bias)
        self.lam = float(lam)
        self.epochs = int(epochs)
        self.seed = int(seed)
        self.standardization = standardization
        self.n_features = self.weights.shape[0]
        self.objective_history = list(objective_history or [])

    def decision_function(self, x) -> np.ndarray:
        X, single = self._prepare(x)
        s = X @ self.weights + self.bias
        return s[0] if single else s

    def _proba(self, X):
        # logistic link on the raw margin, no Platt fitting
        return proba_pair(expit(X @ self.weights + self.bias))

    def params(self) -> dict:
        return {"weights": self.weights.tolist(), "bias": self.bias, "objective_history": self.objective_history}

    def hyperparams(self) -> dict:
        return {"lam": self.lam, "epochs": self.epochs}

    @classmethod
    def from_params(cls, params, hyper, seed, standardization):
        return cls(params["weights"], params["bias"], hyper["lam"], hyper["epochs"], seed, standardization,
                   params.get("objective_history"))


def svm_objective(w: np.ndarray, b: float, X: np.ndarray, s: np.ndarray, lam: float) -> float:
    """lam/2 (|w|^2 + b^2) + mean hinge loss, with labels ``s`` in {-1, +1}."""
    hinge = np.maximum(0.0, 1.0 - s * (X @ w + b))
    return 0.5 * lam * (float(w @ w) + b * b) + float(hinge.mean())


def train_svm(train: LabeledMatrix, lam: float = 1e-3, epochs: int = 50, seed: int = 0) -> LinearSvmModel:
    """Fit a linear SVM by stochastic subgradient descent (step 1/(lam*t)).

    The bias is learned (and regularised) as the weight of a constant input. An epoch's updates
    are kept only if they do not raise the full objective; otherwise the
    weights roll back to the best epoch end and the step schedule continues.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    require_both_classes(train.labels)
    X = train.features
    s = np.where(train.labels == 1, 1.0, -1.0)
    n, d = X.shape
    Xa = np.hstack((X, np.ones((n, 1))))
    rng = np.random.default_rng(seed)
    w = np.zeros(d + 1)
    best_w, best_obj = w.copy(), np.inf
    radius = 1.0 / np.sqrt(lam)
    history = []
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            margin = s[i] * (Xa[i] @ w)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += eta * s[i] * Xa[i]
            norm = np.sqrt(w @ w)
            if norm > radius:
                w *= radius / norm
        obj = svm_objective(w[:-1], w[-1], X, s, lam)
        if obj <= best_obj:
            best_obj, best_w = obj, w.copy()
        else:
            w = best_w.copy()
        history.append(best_obj)
    return LinearSvmModel(best_w[:-1], best_w[-1], lam, epochs, seed, train.standardization, history)
