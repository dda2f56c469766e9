"""Versioned JSON envelopes for trained models."""

from __future__ import annotations

import json
from pathlib import Path

from ..errors import ModelFormatError
from .base import Standardizer

FORMAT_VERSION = 1


def _registry() -> dict:
    from ..fusion import AdaBoostModel
    from .forest import RandomForestModel
    from .mlp import MlpModel
    from .svm import LinearSvmModel

    return {cls.model_kind: cls for cls in (LinearSvmModel, RandomForestModel, MlpModel, AdaBoostModel)}


def model_to_dict(model, feature_names=None) -> dict:
    std = getattr(model, "standardization", None)
    return {
        "format_version": FORMAT_VERSION,
        "model_kind": model.model_kind,
        "standardization": std.to_dict() if std is not None else None,
        "parameters": model.params(),
        "hyperparameters": model.hyperparams(),
        "seed": getattr(model, "seed", None),
        "feature_names": list(feature_names) if feature_names is not None else getattr(model, "feature_names", None),
    }


def model_from_dict(env: dict):
    if env.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format_version {env.get('format_version')!r}")
    cls = _registry().get(env.get("model_kind"))
    if cls is None:
        raise ModelFormatError(f"unknown model_kind {env.get('model_kind')!r}")
    model = cls.from_params(env["parameters"], env["hyperparameters"], env.get("seed"),
                            Standardizer.from_dict(env.get("standardization")))
    if env.get("feature_names") is not None:
        model.feature_names = list(env["feature_names"])
    return model


def save_model(path, model, feature_names=None) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model, feature_names)))


def load_model(path):
    try:
        env = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: {exc}") from exc
    return model_from_dict(env)
