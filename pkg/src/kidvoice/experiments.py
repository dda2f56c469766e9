"""Preset experiment grids that emit the result tables of the study layout."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .audio import PreprocessMode
from .fusion import Table, cross_validate
from .learners import LabeledMatrix
from .pipeline import (
    ExperimentConfig,
    FeatureBuilder,
    labels_of,
    load_inputs,
    prepare_records,
    stage,
    staged_output,
    train_and_evaluate,
    train_learner,
)
from .seeds import derive_seed

PRESETS = ("normalization", "metadata", "test", "fusion", "all")
CLASSIFIERS = (("svm", "SVM"), ("forest", "Rand. Forest"))
MODES = (PreprocessMode.WITHOUT_NORMALIZATION, PreprocessMode.ENERGY_NORMALIZED, PreprocessMode.SILENCE_REMOVED)
META_DOMAINS = (("time", "Time"), ("ratio", "Show-type"), ("bow", "BOW"))


@dataclass
class ExperimentReport:
    preset: str
    tables: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "preset": self.preset,
            "tables": {k: t.to_dict() for k, t in self.tables.items()},
            "reports": {k: r.to_dict() for k, r in self.reports.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        return "\n\n".join(t.render() for t in self.tables.values()) + "\n"


class _Grid:
    """Shared state for one preset run: config, split and feature cache."""

    def __init__(self, cfg: ExperimentConfig, records, usage):
        self.cfg = cfg
        self.builder = FeatureBuilder(cfg, usage)
        self.train, self.test = prepare_records(cfg, records)
        self.y_train = labels_of(self.train)
        self._runs: dict = {}

    def cv_accuracy(self, learner: str, X: np.ndarray, names, stream: str) -> float:
        data = LabeledMatrix(X, self.y_train, names)
        with stage("train"):
            res = cross_validate(data, self.cfg.cv_folds, lambda d: train_learner(learner, d, self.cfg, stream),
                                 derive_seed(self.cfg.seed, "cv"))
        return res.mean

    def run(self, fusion: str):
        if fusion not in self._runs:
            cfg = replace(self.cfg, fusion=fusion, preprocess=PreprocessMode.SILENCE_REMOVED,
                          domains=("acoustic", "bow", "time", "ratio"), models=("forest", "svm", "mlp"))
            self._runs[fusion] = train_and_evaluate(cfg, None, builder=self.builder, split=(self.train, self.test))
        return self._runs[fusion]


def normalization_table(g: _Grid) -> Table:
    cells = []
    for learner, _ in CLASSIFIERS:
        row = []
        for mode in MODES:
            X = g.builder.acoustic(g.train, mode)
            row.append(g.cv_accuracy(learner, X, g.builder.names("acoustic"), f"{learner}_{mode.value}"))
        cells.append(row)
    return Table("Audio normalization (CV accuracy on train)", [c[1] for c in CLASSIFIERS],
                 [m.value.upper() for m in MODES], cells)


def metadata_table(g: _Grid) -> Table:
    g.builder.cfg = replace(g.cfg, domains=("acoustic", "bow", "time", "ratio"))
    g.builder.fit_context(g.train)
    cells = []
    for learner, _ in CLASSIFIERS:
        row = []
        for dom, _ in META_DOMAINS:
            X = g.builder.domain(dom, g.train)
            row.append(g.cv_accuracy(learner, X, g.builder.names(dom), f"{learner}_{dom}"))
        cells.append(row)
    return Table("Metadata and language (CV accuracy on train)", [c[1] for c in CLASSIFIERS],
                 [d[1] for d in META_DOMAINS], cells)


def test_table(g: _Grid) -> Table:
    acc = g.run("stack").report.per_model_accuracy
    cols = (("forest_acoustic", "Audio"), ("mlp_acoustic", "DL"), ("time_usage", "Time"), ("show_type", "Show-type"),
            ("bow", "BOW"))
    return Table("Test results", ["Accuracy"], [c[1] for c in cols], [[acc[k] for k, _ in cols]])


def baseline_accuracy(g: _Grid) -> float:
    """Linear SVM on unaltered (WN) acoustic features, scored on the test split."""
    mode = PreprocessMode.WITHOUT_NORMALIZATION
    X_tr = g.builder.acoustic(g.train, mode)
    X_te = g.builder.acoustic(g.test, mode)
    with stage("train"):
        model = train_learner("svm", LabeledMatrix(X_tr, g.y_train, g.builder.names("acoustic")), g.cfg, "baseline")
    return float(np.mean(model.predict(X_te) == labels_of(g.test)))


def fusion_tables(g: _Grid) -> tuple[dict, dict]:
    stacked = g.run("stack").report
    feature = g.run("feature").report
    tables = {
        "table5": Table("Feature and model level fusion", ["Accuracy"], ["Baseline", "Feature", "Model"],
                        [[baseline_accuracy(g), feature.accuracy, stacked.accuracy]]),
        "table6": stacked.class_table(),
        "table7": stacked.gender_table(),
    }
    return tables, {"feature": feature, "stack": stacked}


def run_experiment(preset: str, cfg: ExperimentConfig, manifest, out_dir=None) -> ExperimentReport:
    """Run one preset grid (or ``all``) on ``manifest``."""
    if preset not in PRESETS:
        raise ValueError(f"preset must be one of {PRESETS}")
    records, usage = load_inputs(replace(cfg, domains=("acoustic", "bow", "time", "ratio")), manifest)
    g = _Grid(cfg, records, usage)
    rep = ExperimentReport(preset)
    if preset in ("normalization", "all"):
        rep.tables["table2"] = normalization_table(g)
    if preset in ("metadata", "all"):
        rep.tables["table3"] = metadata_table(g)
    if preset in ("test", "all"):
        rep.tables["table4"] = test_table(g)
    if preset in ("fusion", "all"):
        tables, reports = fusion_tables(g)
        rep.tables.update(tables)
        rep.reports.update(reports)
    if out_dir is not None:
        with staged_output(out_dir) as tmp, stage("persist"):
            (Path(tmp) / "experiment.json").write_text(rep.to_json())
            (Path(tmp) / "experiment.txt").write_text(rep.to_text())
    return rep

