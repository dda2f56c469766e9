"""End-to-end orchestration: config, feature building, training, fusion, bundles."""

from __future__ import annotations

import contextlib
import json
import os
import shutil
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .audio import AudioClip, Preprocessor, PreprocessMode, load_wav
from .context import (
    RATIO_FEATURE_NAMES,
    UtteranceRecord,
    Vocabulary,
    build_usage_profiles,
    build_vocabulary,
    bow_vector,
    load_manifest,
    load_profiles,
    load_usage_log,
    parse_timestamp,
    ratio_features,
    save_profiles,
    time_feature_names,
    time_features,
    write_jsonl,
)
from .errors import KidVoiceError, MissingModality, PipelineError
from .features import FEATURE_NAMES, extract_is10, write_features_csv
from .fusion import (
    AdaBoostModel,
    EvalReport,
    balance_classes,
    cross_validate,
    evaluate,
    fuse_features,
    split_train_test,
    train_stacker,
    write_stack_csv,
)
from .learners import (
    DESK_HYPER,
    LabeledMatrix,
    MlpHyper,
    desk_layers,
    load_model,
    paper_layers,
    save_model,
    standardize_fit_transform,
    train_mlp,
    train_random_forest,
    train_svm,
)
from .seeds import derive_seed

DOMAINS = ("acoustic", "bow", "time", "ratio")
MODEL_KINDS = ("forest", "svm", "mlp")
FUSION_MODES = ("none", "feature", "stack")
BASE_ORDER = ("forest_acoustic", "svm_acoustic", "time_usage", "show_type", "bow", "mlp_acoustic")
DOMAIN_OF = {
    "forest_acoustic": "acoustic",
    "svm_acoustic": "acoustic",
    "time_usage": "time",
    "show_type": "ratio",
    "bow": "bow",
    "mlp_acoustic": "acoustic",
}
BUNDLE_VERSION = 1


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ForestParams:
    n_trees: int = 200
    max_features: int | None = None
    min_leaf: int = 1
    max_depth: int | None = None


@dataclass
class SvmParams:
    lam: float = 1e-3
    epochs: int = 50


@dataclass
class MlpParams:
    lr: float = DESK_HYPER.lr
    momentum: float = DESK_HYPER.momentum
    batch: int = DESK_HYPER.batch
    epochs: int = DESK_HYPER.epochs
    dropout: float = DESK_HYPER.dropout
    layers: str = "desk"  # or "paper"

    def hyper(self) -> MlpHyper:
        return MlpHyper(self.lr, self.momentum, self.batch, self.epochs, self.dropout)


@dataclass
class ExperimentConfig:
    preprocess: PreprocessMode = PreprocessMode.SILENCE_REMOVED
    domains: tuple[str, ...] = DOMAINS
    models: tuple[str, ...] = MODEL_KINDS
    fusion: str = "stack"
    night_rule: bool = True
    paper_protocol: bool = False
    seed: int = 0
    split_ratio: float = 0.75
    balance: bool = True
    cv_folds: int = 5
    stack_rounds: int = 100
    max_vocab: int = 2000
    vad_threshold_db: float = -35.0
    vad_min_silence_ms: float = 200.0
    target_rms: float = 0.1
    usage_log: str | None = None
    forest: ForestParams = field(default_factory=ForestParams)
    svm: SvmParams = field(default_factory=SvmParams)
    mlp: MlpParams = field(default_factory=MlpParams)

    def __post_init__(self):
        self.preprocess = PreprocessMode.parse(self.preprocess)
        self.domains = tuple(d for d in DOMAINS if d in set(self.domains))
        self.models = tuple(m for m in MODEL_KINDS if m in set(self.models))
        for name, cls in (("forest", ForestParams), ("svm", SvmParams), ("mlp", MlpParams)):
            if isinstance(getattr(self, name), dict):
                setattr(self, name, cls(**getattr(self, name)))
        self.validate()

    def validate(self) -> None:
        if not self.domains:
            raise ValueError("at least one feature domain must be enabled")
        if not self.models:
            raise ValueError("at least one model kind must be enabled")
        if self.fusion not in FUSION_MODES:
            raise ValueError(f"fusion must be one of {FUSION_MODES}")
        if not base_models(self):
            raise ValueError("no base model can be built from the enabled domains and model kinds")
        if self.fusion == "stack" and len(base_models(self)) < 2:
            raise ValueError("stack fusion needs at least two base models")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be >= 2")
        if self.mlp.layers not in ("desk", "paper"):
            raise ValueError("mlp.layers must be 'desk' or 'paper'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["preprocess"] = self.preprocess.value
        d["domains"] = list(self.domains)
        d["models"] = list(self.models)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def override(self, **kw) -> "ExperimentConfig":
        """Copy with the non-None keyword values replaced."""
        d = self.to_dict()
        d.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig.from_dict(d)


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    return ExperimentConfig.from_dict(data or {})


def base_models(cfg: ExperimentConfig) -> list[str]:
    """Names of the per-domain base models this config trains, in stacking order."""
    learner = domain_learner(cfg)
    out = []
    for name in BASE_ORDER:
        dom = DOMAIN_OF[name]
        if dom not in cfg.domains:
            continue
        if name == "forest_acoustic" and "forest" in cfg.models:
            out.append(name)
        elif name == "svm_acoustic" and "forest" not in cfg.models and "svm" in cfg.models:
            out.append(name)
        elif name == "mlp_acoustic" and "mlp" in cfg.models:
            out.append(name)
        elif dom != "acoustic" and learner is not None:
            out.append(name)
    return out


def domain_learner(cfg: ExperimentConfig) -> str | None:
    """Learner used for metadata domains: forest when enabled, else SVM."""
    if "forest" in cfg.models:
        return "forest"
    if "svm" in cfg.models:
        return "svm"
    return None


def learner_of(cfg: ExperimentConfig, name: str) -> str:
    if name.startswith("mlp"):
        return "mlp"
    if name.startswith("svm"):
        return "svm"
    if name.startswith("forest"):
        return "forest"
    return domain_learner(cfg)


def train_learner(learner: str, data: LabeledMatrix, cfg: ExperimentConfig, stream: str):
    """Train one learner kind; SVM and MLP see standardised inputs."""
    seed = derive_seed(cfg.seed, stream)
    if learner == "forest":
        f = cfg.forest
        return train_random_forest(data, f.n_trees, seed, f.max_features, f.min_leaf, f.max_depth)
    if learner == "svm":
        return train_svm(standardize_fit_transform(data), cfg.svm.lam, cfg.svm.epochs, seed)
    if learner == "mlp":
        layers = desk_layers(data.d) if cfg.mlp.layers == "desk" else paper_layers(data.d)
        return train_mlp(standardize_fit_transform(data), cfg.mlp.hyper(), seed, layers)
    raise ValueError(f"unknown learner {learner!r}")


# ---------------------------------------------------------------------------
# feature building


@contextlib.contextmanager
def stage(name: str, record_id: str | None = None):
    """Re-raise package and I/O errors as PipelineError tagged with ``name``."""
    try:
        yield
    except PipelineError:
        raise
    except (KidVoiceError, OSError, ValueError) as exc:
        raise PipelineError(name, f"{type(exc).__name__}: {exc}", record_id) from exc


class FeatureBuilder:
    """Per-domain feature matrices with an in-memory cache of acoustic vectors."""

    def __init__(self, cfg: ExperimentConfig, usage_log=None):
        self.cfg = cfg
        self.usage_log = list(usage_log or [])
        self.vocabulary: Vocabulary | None = None
        self.profiles: dict | None = None
        self._acoustic: dict = {}

    def preprocessor(self, mode=None) -> Preprocessor:
        return Preprocessor(PreprocessMode.parse(mode or self.cfg.preprocess), self.cfg.vad_threshold_db,
                            self.cfg.vad_min_silence_ms, self.cfg.target_rms)

    def acoustic_vector(self, clip: AudioClip, mode=None) -> np.ndarray:
        return extract_is10(self.preprocessor(mode)(clip)).values

    def acoustic(self, records, mode=None) -> np.ndarray:
        mode = PreprocessMode.parse(mode or self.cfg.preprocess)
        rows = []
        for rec in records:
            key = (mode, rec.id, rec.audio_path)
            if key not in self._acoustic:
                with stage("extract", rec.id):
                    if not rec.audio_path:
                        raise MissingModality("record has no audio path")
                    clip = load_wav(rec.audio_path, rec.id)
                    self._acoustic[key] = self.acoustic_vector(clip, mode)
            rows.append(self._acoustic[key])
        return np.array(rows).reshape(-1, len(FEATURE_NAMES))

    def fit_context(self, train_records) -> None:
        """Train-only statistics: vocabulary and device usage profiles."""
        with stage("context"):
            if "bow" in self.cfg.domains:
                self.vocabulary = build_vocabulary(train_records, self.cfg.max_vocab)
            if "ratio" in self.cfg.domains:
                self.profiles = build_usage_profiles(self.usage_log)

    def domain(self, name: str, records, mode=None) -> np.ndarray:
        if name == "acoustic":
            return self.acoustic(records, mode)
        rows = []
        for rec in records:
            with stage("context", rec.id):
                if name == "bow":
                    rows.append(bow_vector(rec.transcript, self.vocabulary))
                elif name == "time":
                    rows.append(time_features(rec).vector())
                elif name == "ratio":
                    rows.append(ratio_features(rec, self.profiles))
                else:
                    raise ValueError(f"unknown domain {name!r}")
        return np.array(rows).reshape(len(rows), -1)

    def names(self, domain: str) -> list[str]:
        if domain == "acoustic":
            return list(FEATURE_NAMES)
        if domain == "bow":
            return [f"bow_{w}" for w in self.vocabulary.words]
        if domain == "time":
            return time_feature_names()
        return list(RATIO_FEATURE_NAMES)

    def matrices(self, records, domains, mode=None) -> dict:
        return {d: self.domain(d, records, mode) for d in domains}


def labels_of(records) -> np.ndarray:
    return np.array([r.y for r in records], dtype=np.int64)


def night_flags(records) -> np.ndarray:
    return np.array([r.timestamp_utc is not None and r.is_night for r in records], dtype=bool)


# ---------------------------------------------------------------------------
# trained bundle


@dataclass
class Bundle:
    """Everything needed to score new utterances under one config."""

    config: ExperimentConfig
    models: dict  # base model name -> Model
    feature_model: object | None = None
    stacker: AdaBoostModel | None = None
    vocabulary: Vocabulary | None = None
    profiles: dict | None = None

    @property
    def required_domains(self) -> tuple[str, ...]:
        if self.config.fusion == "feature":
            return self.config.domains
        names = list(self.models) if self.config.fusion == "stack" else [self.primary]
        return tuple(d for d in DOMAINS if any(DOMAIN_OF[n] == d for n in names))

    @property
    def primary(self) -> str:
        return next(iter(self.models))

    def base_scores(self, feats: dict) -> dict:
        """p_kid of every base model whose domain is present in ``feats``."""
        return {
            name: np.atleast_2d(model.predict_proba(feats[DOMAIN_OF[name]]))[:, 1]
            for name, model in self.models.items()
            if DOMAIN_OF[name] in feats
        }

    def score(self, feats: dict) -> tuple[np.ndarray, dict]:
        """(final p_kid, per-model p_kid) from per-domain row-aligned matrices."""
        per_model = self.base_scores(feats)
        fusion = self.config.fusion
        if fusion == "none":
            final = per_model[self.primary]
        elif fusion == "feature":
            X = fuse_features([feats[d] for d in self.config.domains])
            final = np.atleast_2d(self.feature_model.predict_proba(X))[:, 1]
        else:
            final = np.atleast_2d(self.stacker.predict_proba(self.stack_matrix(per_model)))[:, 1]
        return final, per_model

    def stack_matrix(self, per_model: dict) -> np.ndarray:
        return np.column_stack([per_model[n] for n in self.models])

    def decide(self, p_kid: np.ndarray, night: np.ndarray) -> np.ndarray:
        pred = (np.asarray(p_kid) > 0.5).astype(np.int64)
        if self.config.night_rule:
            pred[np.asarray(night, dtype=bool)] = 0
        return pred

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        (out / "models").mkdir(parents=True, exist_ok=True)
        files = {}
        for name, model in self.models.items():
            files[name] = f"models/{name}.json"
            save_model(out / files[name], model)
        manifest = {
            "bundle_version": BUNDLE_VERSION,
            "config": self.config.to_dict(),
            "models": files,
            "model_order": list(self.models),
            "feature_model": None,
            "stacker": None,
            "vocabulary": None,
            "usage_profiles": None,
        }
        if self.feature_model is not None:
            manifest["feature_model"] = "models/feature_fusion.json"
            save_model(out / manifest["feature_model"], self.feature_model)
        if self.stacker is not None:
            manifest["stacker"] = "models/stacker.json"
            save_model(out / manifest["stacker"], self.stacker, list(self.models))
        if self.vocabulary is not None:
            manifest["vocabulary"] = "vocabulary.tsv"
            self.vocabulary.save(out / "vocabulary.tsv")
        if self.profiles is not None:
            manifest["usage_profiles"] = "usage_profiles.json"
            save_profiles(out / "usage_profiles.json", self.profiles)
        (out / "bundle.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))

    @classmethod
    def load(cls, bundle_dir) -> "Bundle":
        root = Path(bundle_dir)
        path = root / "bundle.json" if root.is_dir() else root
        root = path.parent
        manifest = json.loads(path.read_text())
        if manifest.get("bundle_version") != BUNDLE_VERSION:
            raise PipelineError("load", f"unsupported bundle version {manifest.get('bundle_version')!r}")
        cfg = ExperimentConfig.from_dict(manifest["config"])
        files = manifest["models"]
        models = {name: load_model(root / files[name]) for name in manifest["model_order"]}
        opt = {k: manifest.get(k) for k in ("feature_model", "stacker", "vocabulary", "usage_profiles")}
        return cls(
            cfg,
            models,
            load_model(root / opt["feature_model"]) if opt["feature_model"] else None,
            load_model(root / opt["stacker"]) if opt["stacker"] else None,
            Vocabulary.load(root / opt["vocabulary"]) if opt["vocabulary"] else None,
            load_profiles(root / opt["usage_profiles"]) if opt["usage_profiles"] else None,
        )


@dataclass
class Prediction:
    label: str
    p_kid: float
    per_model: dict
    night_override: bool

    def to_dict(self) -> dict:
        return asdict(self)


def predict(bundle: Bundle | str | Path, audio=None, metadata: dict | None = None) -> Prediction:
    """Score one utterance; ``metadata`` carries transcript, device_id, timestamp_utc, timezone."""
    if not isinstance(bundle, Bundle):
        bundle = Bundle.load(bundle)
    meta = dict(metadata or {})
    need = bundle.required_domains
    if "acoustic" in need and audio is None:
        raise MissingModality("acoustic features need an audio file")
    if "bow" in need and meta.get("transcript") is None:
        raise MissingModality("bag-of-words model needs a transcript")
    if "time" in need and not meta.get("timestamp_utc"):
        raise MissingModality("time model needs a timestamp")
    if "ratio" in need and (not meta.get("timestamp_utc") or not meta.get("device_id")):
        raise MissingModality("usage-ratio model needs a device id and a timestamp")
    rec = UtteranceRecord(
        id=str(meta.get("id", "query")),
        transcript=meta.get("transcript") or "",
        device_id=str(meta.get("device_id") or ""),
        timestamp_utc=parse_timestamp(meta["timestamp_utc"]) if meta.get("timestamp_utc") else None,
        timezone=meta.get("timezone") or "UTC",
    )
    builder = FeatureBuilder(bundle.config)
    builder.vocabulary, builder.profiles = bundle.vocabulary, bundle.profiles
    feats = {}
    for dom in need:
        if dom == "acoustic":
            clip = audio if isinstance(audio, AudioClip) else load_wav(audio)
            feats[dom] = builder.acoustic_vector(clip)[None, :]
        else:
            feats[dom] = builder.domain(dom, [rec])
    p, per_model = bundle.score(feats)
    night = night_flags([rec])
    pred = bundle.decide(p, night)
    return Prediction(
        label="KID" if pred[0] == 1 else "ADULT",
        p_kid=float(p[0]),
        per_model={k: float(v[0]) for k, v in per_model.items()},
        night_override=bool(bundle.config.night_rule and night[0] and p[0] > 0.5),
    )


# ---------------------------------------------------------------------------
# the pipeline


@dataclass
class PipelineRun:
    report: EvalReport
    bundle: Bundle
    train: list
    test: list
    p_test: np.ndarray
    per_model_test: dict
    stack_train: np.ndarray | None = None


def prepare_records(cfg: ExperimentConfig, records) -> tuple[list, list]:
    with stage("balance"):
        recs = balance_classes(records, derive_seed(cfg.seed, "balance")) if cfg.balance else list(records)
    with stage("split"):
        return split_train_test(recs, cfg.split_ratio, derive_seed(cfg.seed, "split"))


def default_usage_path(manifest) -> Path | None:
    p = Path(manifest).resolve().parent / "usage.jsonl"
    return p if p.exists() else None


def train_and_evaluate(cfg: ExperimentConfig, records, usage_log=None, builder: FeatureBuilder | None = None,
                       split=None) -> PipelineRun:
    """Balance, split, featurise, train, fuse and evaluate in memory."""
    train, test = split if split is not None else prepare_records(cfg, records)
    builder = builder or FeatureBuilder(cfg, usage_log)
    builder.cfg = cfg
    builder.fit_context(train)
    y_tr, y_te = labels_of(train), labels_of(test)
    names = base_models(cfg)
    used = {DOMAIN_OF[n] for n in names} | (set(cfg.domains) if cfg.fusion == "feature" else set())
    needed = tuple(d for d in DOMAINS if d in used)
    F_tr = builder.matrices(train, needed)
    F_te = builder.matrices(test, needed)

    models = {}
    with stage("train"):
        for name in names:
            dom = DOMAIN_OF[name]
            data = LabeledMatrix(F_tr[dom], y_tr, builder.names(dom))
            models[name] = train_learner(learner_of(cfg, name), data, cfg, name)
    bundle = Bundle(cfg, models, vocabulary=builder.vocabulary, profiles=builder.profiles)
    notes, fold_scores, stack_train = [], None, None

    with stage("fusion"):
        if cfg.fusion == "feature":
            X = fuse_features([F_tr[d] for d in cfg.domains])
            fnames = [n for d in cfg.domains for n in builder.names(d)]
            bundle.feature_model = train_learner("forest", LabeledMatrix(X, y_tr, fnames), cfg, "feature_fusion")
        elif cfg.fusion == "stack" and not cfg.paper_protocol:
            cols = []
            for name in names:
                dom = DOMAIN_OF[name]
                data = LabeledMatrix(F_tr[dom], y_tr, builder.names(dom))
                learner = learner_of(cfg, name)
                res, oof = cross_validate(data, cfg.cv_folds, lambda d, l=learner, n=name: train_learner(l, d, cfg, n),
                                          derive_seed(cfg.seed, "cv"), return_oof=True)
                cols.append(np.nan_to_num(oof[:, 1], nan=0.5))
                notes.append(f"{name}: {cfg.cv_folds}-fold CV accuracy on train {100 * res.mean:.1f}%")
            stack_train = np.column_stack(cols)
            bundle.stacker = train_stacker(stack_train, y_tr, cfg.stack_rounds)
            notes.append("stacker trained on out-of-fold base-model probabilities")

    if cfg.fusion == "stack" and cfg.paper_protocol:
        per_model = bundle.base_scores(F_te)
        with stage("fusion"):
            S = bundle.stack_matrix(per_model)
            data = LabeledMatrix(S, y_te, list(names))
            res, oof = cross_validate(data, cfg.cv_folds, lambda d: train_stacker(d.features, d.labels, cfg.stack_rounds),
                                      derive_seed(cfg.seed, "cv"), return_oof=True)
            p_test = np.nan_to_num(oof[:, 1], nan=0.5)
            fold_scores = res.fold_scores
            bundle.stacker = train_stacker(S, y_te, cfg.stack_rounds)
            stack_train = S
            notes.append("paper protocol: stacker cross-validated on test-set base-model probabilities")
    else:
        p_test, per_model = bundle.score(F_te)

    with stage("evaluate"):
        night = night_flags(test)
        pred = bundle.decide(p_test, night)
        report = evaluate([(p, t, r.gender) for p, t, r in zip(pred, y_te, test)])
        report.per_model_accuracy = {
            name: float(np.mean((p > 0.5).astype(np.int64) == y_te)) for name, p in per_model.items()
        }
        report.fold_scores = fold_scores
        if cfg.night_rule:
            notes.append(f"night rule on: {int(np.count_nonzero(night))} night-time test records forced to ADULT")
        report.notes = notes
    return PipelineRun(report, bundle, train, test, p_test, per_model, stack_train)


@contextlib.contextmanager
def staged_output(out_dir):
    """Yield a staging directory that replaces ``out_dir`` contents on success and vanishes on failure."""
    out = Path(out_dir).resolve()
    out.parent.mkdir(parents=True, exist_ok=True)
    staging = out.parent / f".{out.name}.staging-{os.getpid()}"
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir()
    try:
        yield staging
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    if not out.exists():
        staging.rename(out)
        return
    for entry in sorted(staging.iterdir()):
        target = out / entry.name
        if target.is_dir():
            shutil.rmtree(target)
        elif target.exists():
            target.unlink()
        entry.rename(target)
    staging.rmdir()


def persist_run(run: PipelineRun, builder: FeatureBuilder, out_dir) -> None:
    cfg = run.bundle.config
    out = Path(out_dir)
    run.bundle.save(out)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True))
    write_jsonl(out / "split_manifest.jsonl", (r.to_dict() for r in run.train + run.test))
    if "acoustic" in cfg.domains:
        recs = run.train + run.test
        X = builder.acoustic(recs)
        write_features_csv(out / "features_acoustic.csv", [(r.id, r.label.value, x) for r, x in zip(recs, X)])
    names = list(run.bundle.models)
    if run.stack_train is not None:
        ids = [r.id for r in (run.test if cfg.paper_protocol else run.train)]
        labels = labels_of(run.test if cfg.paper_protocol else run.train)
        write_stack_csv(out / "stack_train.csv", ids, run.stack_train, labels, names)
    if run.per_model_test:
        S = np.column_stack([run.per_model_test[n] for n in names])
        write_stack_csv(out / "stack_test.csv", [r.id for r in run.test], S, labels_of(run.test), names)
    (out / "report.json").write_text(run.report.to_json())
    (out / "report.txt").write_text(run.report.to_text())


def load_inputs(cfg: ExperimentConfig, manifest) -> tuple[list, list]:
    with stage("manifest"):
        records = load_manifest(manifest)
        usage_path = cfg.usage_log or default_usage_path(manifest)
        usage = load_usage_log(usage_path) if usage_path and "ratio" in cfg.domains else []
    return records, usage


def run_pipeline(cfg: ExperimentConfig, manifest, out_dir=None) -> EvalReport:
    """Run the configured experiment on ``manifest``; persist artifacts under ``out_dir`` if given."""
    records, usage = load_inputs(cfg, manifest)
    builder = FeatureBuilder(cfg, usage)
    if out_dir is None:
        return train_and_evaluate(cfg, records, builder=builder).report
    with staged_output(out_dir) as tmp:
        run = train_and_evaluate(cfg, records, builder=builder)
        with stage("persist"):
            persist_run(run, builder, tmp)
    return run.report


def evaluate_bundle(bundle: Bundle | str | Path, manifest) -> EvalReport:
    """Score every record of ``manifest`` with a saved bundle."""
    if not isinstance(bundle, Bundle):
        bundle = Bundle.load(bundle)
    with stage("manifest"):
        records = load_manifest(manifest)
    builder = FeatureBuilder(bundle.config)
    builder.vocabulary, builder.profiles = bundle.vocabulary, bundle.profiles
    feats = builder.matrices(records, bundle.required_domains)
    p, per_model = bundle.score(feats)
    night = night_flags(records)
    y = labels_of(records)
    with stage("evaluate"):
        report = evaluate([(pr, t, r.gender) for pr, t, r in zip(bundle.decide(p, night), y, records)])
        report.per_model_accuracy = {k: float(np.mean((v > 0.5).astype(np.int64) == y)) for k, v in per_model.items()}
    return report
