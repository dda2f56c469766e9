"""Data protocol, feature/model-level fusion and evaluation reports."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .errors import DimensionMismatch, SingleClassData
from .learners.base import LabeledMatrix, Model, as_2d, proba_pair

STACK_ORDER = ("forest_acoustic", "time_usage", "show_type", "bow", "mlp_acoustic")
EPS_CLAMP = 1e-10


# ---------------------------------------------------------------------------
# partitioning


def _labels_of(records) -> np.ndarray:
    return np.array([r.y if hasattr(r, "y") else int(r) for r in records], dtype=np.int64)


def _tag(records, idx, name):
    out = []
    for i in idx:
        r = records[i]
        out.append(replace(r, split=name) if hasattr(r, "split") else r)
    return out


def stratified_split_indices(labels: np.ndarray, ratio: float, rng: np.random.Generator):
    """Train/test index arrays; |train| = round(ratio * n), per-class shares by largest remainder."""
    labels = np.asarray(labels)
    n = labels.shape[0]
    classes = np.unique(labels)
    n_train = int(math.floor(ratio * n + 0.5))
    quotas = {c: ratio * np.count_nonzero(labels == c) for c in classes}
    alloc = {c: int(math.floor(q)) for c, q in quotas.items()}
    leftover = n_train - sum(alloc.values())
    for c in sorted(classes, key=lambda c: (-(quotas[c] - alloc[c]), c))[:leftover]:
        alloc[c] += 1
    train, test = [], []
    for c in classes:
        members = np.flatnonzero(labels == c)
        members = members[rng.permutation(members.shape[0])]
        train.append(members[: alloc[c]])
        test.append(members[alloc[c] :])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def split_train_test(records: Sequence, ratio: float = 0.75, seed: int = 0):
    """Stratified split, returned in input order and tagged ``split='train'/'test'``."""
    labels = _labels_of(records)
    if labels.shape[0] < 4:
        raise ValueError("need at least 4 records to split")
    if np.unique(labels).shape[0] < 2:
        raise SingleClassData("cannot stratify a single-class manifest")
    tr, te = stratified_split_indices(labels, ratio, np.random.default_rng(seed))
    return _tag(records, tr, "train"), _tag(records, te, "test")


def balance_classes(records: Sequence, seed: int = 0) -> list:
    """Downsample the majority class to the minority size, then shuffle."""
    labels = _labels_of(records)
    classes, counts = np.unique(labels, return_counts=True)
    if classes.shape[0] < 2:
        raise SingleClassData("balancing needs both classes present")
    m = counts.min()
    rng = np.random.default_rng(seed)
    keep = []
    for c in classes:
        members = np.flatnonzero(labels == c)
        if members.shape[0] > m:
            members = np.sort(rng.choice(members, size=m, replace=False))
        keep.append(members)
    keep = np.concatenate(keep)
    keep = keep[rng.permutation(keep.shape[0])]
    return [records[i] for i in keep]


def stratified_folds(labels: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Fold id per row: classes are shuffled, laid end to end and dealt round-robin."""
    labels = np.asarray(labels)
    n = labels.shape[0]
    if k < 2 or k > n:
        raise ValueError(f"k must be in [2, n={n}], got {k}")
    order = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        order.append(members[rng.permutation(members.shape[0])])
    order = np.concatenate(order)
    fold = np.empty(n, dtype=np.int64)
    fold[order] = np.arange(n) % k
    return fold


@dataclass
class CVResult:
    fold_scores: list  # accuracy per fold, None where the fold failed
    folds: np.ndarray  # fold id per row
    failed: dict = field(default_factory=dict)

    @property
    def scores(self) -> np.ndarray:
        return np.array([s for s in self.fold_scores if s is not None])

    @property
    def mean(self) -> float:
        s = self.scores
        return float(s.mean()) if s.size else float("nan")

    @property
    def std(self) -> float:
        s = self.scores
        return float(s.std()) if s.size else float("nan")


def cross_validate(data: LabeledMatrix, k: int, trainer: Callable[[LabeledMatrix], Model], seed: int = 0,
                   return_oof: bool = False):
    """Stratified k-fold accuracy of ``trainer``.

    A fold whose training part holds a single class is recorded as failed
    and skipped. With ``return_oof`` the held-out probabilities are returned
    as well (NaN rows for failed folds).
    """
    folds = stratified_folds(data.labels, k, np.random.default_rng(seed))
    scores, failed = [], {}
    oof = np.full((data.n, 2), np.nan)
    for f in range(k):
        test = folds == f
        try:
            model = trainer(data.subset(~test))
        except SingleClassData as exc:
            scores.append(None)
            failed[f] = str(exc)
            continue
        P = np.atleast_2d(model.predict_proba(data.features[test]))
        oof[test] = P
        pred = (P[:, 1] > 0.5).astype(np.int64)
        scores.append(float(np.mean(pred == data.labels[test])))
    res = CVResult(scores, folds, failed)
    return (res, oof) if return_oof else res


# ---------------------------------------------------------------------------
# feature-level fusion


def fuse_features(parts: Sequence[np.ndarray], dims: Sequence[int] | None = None) -> np.ndarray:
    """Concatenate per-domain vectors (or row-aligned matrices) in the given order."""
    if not parts:
        raise DimensionMismatch("nothing to fuse")
    arrs = [np.asarray(p, dtype=np.float64) for p in parts]
    ndim = arrs[0].ndim
    if any(a.ndim != ndim for a in arrs):
        raise DimensionMismatch("mixing vectors and matrices")
    if ndim == 2 and len({a.shape[0] for a in arrs}) != 1:
        raise DimensionMismatch("domains disagree on the number of utterances")
    if dims is not None:
        if len(dims) != len(arrs):
            raise DimensionMismatch(f"{len(arrs)} domains but {len(dims)} dimensions")
        for i, (a, d) in enumerate(zip(arrs, dims)):
            if a.shape[-1] != d:
                raise DimensionMismatch(f"domain {i}: expected {d} values, got {a.shape[-1]}")
    return np.concatenate(arrs, axis=-1)


# ---------------------------------------------------------------------------
# model-level fusion


@dataclass(frozen=True)
class StackInput:
    """p_kid of each base model, in STACK_ORDER."""

    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(STACK_ORDER):
            raise DimensionMismatch(f"stack input needs {len(STACK_ORDER)} values")
        if not all(0.0 <= v <= 1.0 for v in self.values):
            raise ValueError("stack inputs must lie in [0, 1]")


def write_stack_csv(path, ids, stack: np.ndarray, labels=None, names: Sequence[str] = STACK_ORDER) -> None:
    if stack.shape[1] != len(names):
        raise DimensionMismatch(f"{stack.shape[1]} stack columns but {len(names)} names")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", *names] + (["label"] if labels is not None else []))
        for i, rid in enumerate(ids):
            row = [rid] + [f"{v:.9g}" for v in stack[i]]
            if labels is not None:
                row.append(int(labels[i]))
            w.writerow(row)


@dataclass(frozen=True)
class Stump:
    feature: int
    threshold: float
    polarity: int  # +1: KID above threshold, -1: KID at or below

    def predict(self, X: np.ndarray) -> np.ndarray:
        """+1 for KID, -1 for ADULT."""
        return np.where(X[:, self.feature] > self.threshold, 1.0, -1.0) * self.polarity


class _StumpSearch:
    """Exact weighted-error stump search with per-feature sort orders cached."""

    def __init__(self, X: np.ndarray, s: np.ndarray):
        self.X = X
        self.s = s
        self.orders = [np.argsort(X[:, j], kind="stable") for j in range(X.shape[1])]
        self.sorted = [X[o, j] for j, o in enumerate(self.orders)]

    def best(self, w: np.ndarray):
        total = w.sum()
        best = None
        for j, (o, xs) in enumerate(zip(self.orders, self.sorted)):
            cut = np.flatnonzero(xs[1:] > xs[:-1])
            if cut.size == 0:
                continue
            wk = np.cumsum(np.where(self.s[o] > 0, w[o], 0.0))
            wa = np.cumsum(np.where(self.s[o] < 0, w[o], 0.0))
            # polarity +1 predicts KID above: mistakes are kids at/below and adults above
            err_pos = wk[cut] + (wa[-1] - wa[cut])
            err_neg = total - err_pos
            i_pos, i_neg = int(np.argmin(err_pos)), int(np.argmin(err_neg))
            for err, i, pol in ((err_pos[i_pos], i_pos, 1), (err_neg[i_neg], i_neg, -1)):
                if best is None or err < best[0]:
                    c = cut[i]
                    thr = 0.5 * (xs[c] + xs[c + 1])
                    if not xs[c] <= thr < xs[c + 1]:
                        thr = xs[c]
                    best = (float(err), Stump(j, float(thr), pol))
        if best is None:
            # every feature constant: fall back to the weighted-majority constant
            kid_w = w[self.s > 0].sum()
            pol = 1 if kid_w > total - kid_w else -1
            return float(min(kid_w, total - kid_w)), Stump(0, -math.inf, pol)
        return best


class AdaBoostModel(Model):
    """Discrete AdaBoost over depth-1 stumps on the stacked base-model probabilities."""

    model_kind = "adaboost_stacker"

    def __init__(self, stumps, alphas, n_features=len(STACK_ORDER), eps_clamp=EPS_CLAMP, n_rounds=None,
                 errors=None, bounds=None, weight_sums=None, seed=None):
        self.stumps = list(stumps)
        self.alphas = [float(a) for a in alphas]
        self.n_features = int(n_features)
        self.eps_clamp = float(eps_clamp)
        self.n_rounds = int(n_rounds if n_rounds is not None else len(self.stumps))
        self.errors = list(errors or [])
        self.bounds = list(bounds or [])
        self.weight_sums = list(weight_sums or [])
        self.seed = seed
        self.standardization = None

    def decision_function(self, x) -> np.ndarray:
        X, single = as_2d(x)
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"stacker expects {self.n_features} inputs, got {X.shape[1]}")
        F = np.zeros(X.shape[0])
        for stump, a in zip(self.stumps, self.alphas):
            F += a * stump.predict(X)
        return F[0] if single else F

    def _proba(self, X):
        return proba_pair(expit(2.0 * self.decision_function(X)))

    def params(self) -> dict:
        return {
            "stumps": [[s.feature, s.threshold if math.isfinite(s.threshold) else None, s.polarity] for s in self.stumps],
            "alphas": self.alphas,
            "errors": self.errors,
            "bounds": self.bounds,
            "weight_sums": self.weight_sums,
        }

    def hyperparams(self) -> dict:
        return {"n_rounds": self.n_rounds, "eps_clamp": self.eps_clamp, "n_features": self.n_features}

    @classmethod
    def from_params(cls, params, hyper, seed, standardization):
        stumps = [Stump(int(f), -math.inf if t is None else float(t), int(p)) for f, t, p in params["stumps"]]
        return cls(stumps, params["alphas"], hyper["n_features"], hyper["eps_clamp"], hyper["n_rounds"],
                   params.get("errors"), params.get("bounds"), params.get("weight_sums"), seed)


def train_stacker(stack_inputs, labels, n_rounds: int = 100, eps_clamp: float = EPS_CLAMP) -> AdaBoostModel:
    """Discrete AdaBoost with exhaustive stump search.

    Each round picks the stump with the lowest weighted error e, clamps e to
    [eps_clamp, 1 - eps_clamp], sets alpha = 0.5 * ln((1 - e) / e) and
    reweights by exp(-alpha * y * h). Training stops early once a stump is
    perfect or no stump beats chance. The per-round training-error bound
    prod 2 sqrt(e (1 - e)) is recorded in ``bounds``.
    """
    X = np.asarray(stack_inputs, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch("stack inputs must be an (n, k) matrix")
    if X.size and (X.min() < 0.0 or X.max() > 1.0):
        raise ValueError("stack inputs must lie in [0, 1]")
    y = np.asarray(labels, dtype=np.int64)
    if np.unique(y).shape[0] < 2:
        raise SingleClassData("stacker needs both classes")
    s = np.where(y == 1, 1.0, -1.0)
    n = X.shape[0]
    w = np.full(n, 1.0 / n)
    search = _StumpSearch(X, s)
    stumps, alphas, errors, bounds, sums = [], [], [], [], []
    bound = 1.0
    for _ in range(n_rounds):
        err, stump = search.best(w)
        if err >= 0.5 * w.sum() and stumps:
            break
        eps = min(max(err, eps_clamp), 1.0 - eps_clamp)
        alpha = 0.5 * math.log((1.0 - eps) / eps)
        w = w * np.exp(-alpha * s * stump.predict(X))
        w /= w.sum()
        bound *= 2.0 * math.sqrt(eps * (1.0 - eps))
        stumps.append(stump)
        alphas.append(alpha)
        errors.append(err)
        bounds.append(bound)
        sums.append(float(w.sum()))
        if err <= eps_clamp or alpha == 0.0:
            break
    return AdaBoostModel(stumps, alphas, X.shape[1], eps_clamp, n_rounds, errors, bounds, sums)


# ---------------------------------------------------------------------------
# evaluation

CLASS_NAMES = ("ADULT", "KID")
GENDER_NAMES = ("MALE", "FEMALE", "KID")


def _as_int_label(v) -> int:
    if isinstance(v, str) or hasattr(v, "value"):
        return CLASS_NAMES.index(getattr(v, "value", v))
    return int(v)


def _as_gender(v):
    if v is None:
        return None
    return GENDER_NAMES.index(getattr(v, "value", v))


@dataclass
class Table:
    title: str
    row_labels: list[str]
    col_labels: list[str]
    cells: list[list]  # floats (fractions or percents) or None
    percent: bool = True

    def render(self) -> str:
        def fmt(v):
            if v is None:
                return "-"
            return f"{100.0 * v:.1f}%" if self.percent else f"{v:.4g}"

        body = [[fmt(v) for v in row] for row in self.cells]
        widths = [max(len(r) for r in [""] + self.row_labels)]
        for j, c in enumerate(self.col_labels):
            widths.append(max([len(c)] + [len(row[j]) for row in body]))
        lines = [self.title]
        lines.append("  ".join([" " * widths[0]] + [c.rjust(widths[j + 1]) for j, c in enumerate(self.col_labels)]))
        for label, row in zip(self.row_labels, body):
            lines.append("  ".join([label.ljust(widths[0])] + [v.rjust(widths[j + 1]) for j, v in enumerate(row)]))
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"title": self.title, "rows": self.row_labels, "columns": self.col_labels, "cells": self.cells}


@dataclass
class EvalReport:
    n: int
    accuracy: float
    confusion: list[list[int]]  # rows predicted (ADULT, KID), columns true (ADULT, KID)
    confusion_pct: list[list[float]]
    gender_confusion: list[list[int]] | None = None  # rows predicted, columns true (MALE, FEMALE, KID)
    gender_confusion_pct: list[list[float]] | None = None
    per_model_accuracy: dict = field(default_factory=dict)
    fold_scores: list | None = None
    tables: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def class_table(self, title="Class confusion matrix") -> Table:
        return Table(title, ["Adult", "Kid"], ["Adult", "Kid"], [[v / 100.0 for v in row] for row in self.confusion_pct])

    def gender_table(self, title="Gender confusion matrix") -> Table | None:
        if self.gender_confusion_pct is None:
            return None
        return Table(title, ["Adult", "Kid"], ["Male", "Female", "Kid"],
                     [[v / 100.0 for v in row] for row in self.gender_confusion_pct])

    def to_dict(self) -> dict:
        d = {
            "n": self.n,
            "accuracy": self.accuracy,
            "confusion": self.confusion,
            "confusion_pct": self.confusion_pct,
            "gender_confusion": self.gender_confusion,
            "gender_confusion_pct": self.gender_confusion_pct,
            "per_model_accuracy": self.per_model_accuracy,
            "fold_scores": self.fold_scores,
            "tables": {k: t.to_dict() for k, t in self.tables.items()},
            "notes": self.notes,
        }
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        parts = [f"n = {self.n}   accuracy = {100.0 * self.accuracy:.1f}%"]
        if self.per_model_accuracy:
            parts.append(Table("Per-model accuracy", list(self.per_model_accuracy), ["Accuracy"],
                               [[v] for v in self.per_model_accuracy.values()]).render())
        for t in self.tables.values():
            parts.append(t.render())
        parts.append(self.class_table().render())
        g = self.gender_table()
        if g is not None:
            parts.append(g.render())
        if self.notes:
            parts.append("\n".join(self.notes))
        return "\n\n".join(parts) + "\n"


def apply_night_rule(pred: np.ndarray, is_night: np.ndarray) -> np.ndarray:
    """Force ADULT on night-time records."""
    pred = np.asarray(pred, dtype=np.int64).copy()
    pred[np.asarray(is_night, dtype=bool)] = 0
    return pred


def _col_pct(counts: np.ndarray, totals: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(totals > 0, 100.0 * counts / np.where(totals > 0, totals, 1), 0.0)


def evaluate(predictions, night_flags=None, night_rule: bool = False) -> EvalReport:
    """Accuracy and confusion matrices from ``(predicted, truth[, gender])`` tuples.

    Class percentages are normalised per true class (columns). In the
    gender table the MALE and FEMALE columns are normalised by the adult
    total, so together they add up to the adult column of the class table;
    the KID column is normalised by the kid total.
    """
    rows = list(predictions)
    if not rows:
        raise ValueError("nothing to evaluate")
    pred = np.array([_as_int_label(r[0]) for r in rows])
    truth = np.array([_as_int_label(r[1]) for r in rows])
    genders = [_as_gender(r[2]) if len(r) > 2 else None for r in rows]
    if night_rule:
        if night_flags is None:
            raise ValueError("night rule needs per-record night flags")
        pred = apply_night_rule(pred, night_flags)

    conf = np.zeros((2, 2), dtype=np.int64)
    np.add.at(conf, (pred, truth), 1)
    conf_pct = _col_pct(conf, conf.sum(axis=0, keepdims=True))
    report = EvalReport(
        n=len(rows),
        accuracy=float(np.mean(pred == truth)),
        confusion=conf.tolist(),
        confusion_pct=conf_pct.tolist(),
    )
    if all(g is not None for g in genders):
        g = np.array(genders)
        gc = np.zeros((2, 3), dtype=np.int64)
        np.add.at(gc, (pred, g), 1)
        adult_total = gc[:, :2].sum()
        kid_total = gc[:, 2].sum()
        totals = np.array([[adult_total, adult_total, kid_total]])
        report.gender_confusion = gc.tolist()
        report.gender_confusion_pct = _col_pct(gc, totals).tolist()
    return report
