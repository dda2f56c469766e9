"""Command-line entry point: ``kidvoice <command> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

from .audio import load_wav
from .context import load_manifest
from .errors import KidVoiceError
from .experiments import PRESETS, run_experiment
from .features import write_features_csv
from .pipeline import Bundle, ExperimentConfig, FeatureBuilder, evaluate_bundle, load_config, predict, run_pipeline
from .synth import SyntheticCorpusSpec, generate_corpus


def _common(p: argparse.ArgumentParser, fusion_default=None) -> None:
    p.add_argument("--config", type=Path, help="YAML or JSON experiment config")
    p.add_argument("--manifest", type=Path, required=True, help="JSONL utterance manifest")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--seed", type=int, help="root seed for every random substream")
    p.add_argument("--preprocess", choices=("wn", "en", "sr"))
    p.add_argument("--fusion", choices=("none", "feature", "stack"), default=fusion_default)
    p.add_argument("--night-rule", choices=("on", "off"))
    p.add_argument("--paper-protocol", action="store_true", default=None,
                   help="cross-validate the stacker on test-set probabilities")


def config_from_args(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    night = getattr(args, "night_rule", None)
    return cfg.override(
        seed=getattr(args, "seed", None),
        preprocess=getattr(args, "preprocess", None),
        fusion=getattr(args, "fusion", None),
        night_rule=None if night is None else night == "on",
        paper_protocol=getattr(args, "paper_protocol", None),
    )


def cmd_generate(args) -> int:
    spec_kw = {}
    if args.spec:
        spec_kw = json.loads(args.spec.read_text())
    known = {f.name for f in fields(SyntheticCorpusSpec)}
    spec_kw = {k: v for k, v in spec_kw.items() if k in known}
    for key, val in (("n_utterances", args.n), ("seed", args.seed)):
        if val is not None:
            spec_kw[key] = val
    if args.kid_prior is not None:
        spec_kw["priors"] = (1.0 - args.kid_prior, args.kid_prior)
    if args.complementary:
        spec_kw["complementary"] = True
    out = args.out or Path("corpus")
    manifest = generate_corpus(SyntheticCorpusSpec(**spec_kw), out)
    print(manifest)
    return 0


def cmd_extract(args) -> int:
    cfg = config_from_args(args)
    records = load_manifest(args.manifest)
    builder = FeatureBuilder(cfg)
    X = builder.acoustic(records)
    out = args.out or Path("features.csv")
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / f"features_{cfg.preprocess.value}.csv"
    write_features_csv(out, [(r.id, r.label.value if r.label else None, x) for r, x in zip(records, X)])
    print(out)
    return 0


def cmd_train(args) -> int:
    cfg = config_from_args(args)
    report = run_pipeline(cfg, args.manifest, args.out or Path("run"))
    print(report.to_text(), end="")
    return 0


def cmd_eval(args) -> int:
    report = evaluate_bundle(args.bundle, args.manifest)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "report.json").write_text(report.to_json())
        (args.out / "report.txt").write_text(report.to_text())
    print(report.to_text(), end="")
    return 0


def cmd_predict(args) -> int:
    meta = {
        "transcript": args.transcript,
        "device_id": args.device_id,
        "timestamp_utc": args.timestamp,
        "timezone": args.timezone,
    }
    audio = load_wav(args.audio) if args.audio else None
    result = predict(Bundle.load(args.bundle), audio, {k: v for k, v in meta.items() if v is not None})
    print(json.dumps(result.to_dict(), indent=1, sort_keys=True))
    return 0


def cmd_experiment(args) -> int:
    cfg = config_from_args(args)
    rep = run_experiment(args.preset, cfg, args.manifest, args.out)
    print(rep.to_text(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kidvoice", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic corpus (WAVs, manifest, usage log)")
    p.add_argument("--out", type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int, help="number of utterances")
    p.add_argument("--kid-prior", type=float)
    p.add_argument("--complementary", action="store_true",
                   help="each utterance informative in exactly one modality")
    p.add_argument("--spec", type=Path, help="JSON file with SyntheticCorpusSpec fields")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("extract", help="acoustic feature CSV for every manifest record")
    _common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="balance, split, train, fuse, evaluate and save a bundle")
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fuse", help="train with model-level fusion (stacking) unless --fusion says otherwise")
    _common(p, fusion_default="stack")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a manifest with a saved bundle")
    p.add_argument("--bundle", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="classify one utterance with a saved bundle")
    p.add_argument("--bundle", type=Path, required=True)
    p.add_argument("--audio", type=Path)
    p.add_argument("--transcript")
    p.add_argument("--device-id")
    p.add_argument("--timestamp", help="UTC timestamp, ISO 8601")
    p.add_argument("--timezone", help="IANA zone name of the device")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("experiment", help="run a preset grid and print its tables")
    p.add_argument("preset", choices=PRESETS)
    _common(p)
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (KidVoiceError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
