"""Command-line entry point.

Subcommands cover the whole pipeline::

    lrc synth      generate a synthetic corpus
    lrc features   raw descriptors -> fused feature files
    lrc visememap  build the phoneme-to-viseme map
    lrc train      fit the LDA bank and phoneme HMM
    lrc decode     Viterbi-decode a split and assemble words
    lrc eval       score decoded output against the ground truth
    lrc stats      cohort hypothesis tests over participant accuracies

Artifacts land under ``--output`` (written atomically) and embed config
fingerprints; downstream commands reject mismatched inputs. One summary line
per command goes to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields as dataclass_fields
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .corpus import CorpusError, format_label_file, load_manifest, read_label_file
from .evaluation import cohort_compare
from .pipeline import (
    PipelineError,
    decode_utterances,
    fit_recognizer,
    fit_viseme_map,
    load_feature_sequences,
    process_features,
)
from .recognizer import load_model, save_model
from .report import evaluate_dataset, write_plot_tables, write_report
from .storage import atomic_write_text
from .synth import SynthConfig, confusable_config, gen_corpus, separable_config
from .visememap import VisemeMap


def _require(path: Path, what: str) -> Path:
    if not Path(path).exists():
        raise PipelineError(f"missing {what}: {path} (run the upstream command first)")
    return Path(path)


def cmd_synth(config: RunConfig, args) -> str:
    overrides = dict(config.synth)
    known = {f.name for f in dataclass_fields(SynthConfig)}
    unknown = set(overrides) - known
    if unknown:
        raise ConfigError(f"unknown synth config keys {sorted(unknown)}")
    if args.speakers is not None:
        overrides["speakers"] = args.speakers
    if args.separation is not None:
        overrides["separation"] = args.separation
    if args.spread is not None:
        overrides["spread"] = args.spread
    overrides["seed"] = config.seed
    preset = separable_config if args.preset == "separable" else confusable_config
    synth_config = preset(**overrides)
    corpus_dir = config.output_dir() / "corpus"
    manifest = gen_corpus(synth_config, corpus_dir)
    dataset = load_manifest(manifest)
    return (
        f"synth: {len(dataset)} utterances, {len(dataset.speakers())} speakers, "
        f"preset {args.preset} -> {manifest}"
    )


def _corpus_manifest(config: RunConfig) -> Path:
    if config.manifest:
        return _require(Path(config.manifest), "manifest")
    return _require(config.output_dir() / "corpus" / "manifest.json", "corpus manifest")


def _feature_manifest(config: RunConfig) -> Path:
    return _require(config.output_dir() / "manifest_features.json", "feature manifest")


def cmd_features(config: RunConfig, args) -> str:
    dataset = load_manifest(_corpus_manifest(config))
    manifest = process_features(dataset, config, config.output_dir())
    processed = load_manifest(manifest)
    _, dim = load_feature_sequences(processed, config.feature_fingerprint())
    return (
        f"features: {len(processed)} utterances, dimension {dim}, "
        f"fingerprint {config.feature_fingerprint()} -> {manifest}"
    )


def _load_features(config: RunConfig):
    manifest = _feature_manifest(config)
    dataset = load_manifest(manifest)
    doc = json.loads(manifest.read_text(encoding="utf-8"))
    stored = doc.get("feature_fingerprint", "")
    expected = config.feature_fingerprint()
    if stored != expected:
        raise PipelineError(
            f"feature manifest fingerprint {stored!r} does not match the "
            f"active feature config {expected!r}; re-run 'lrc features'"
        )
    features, dim = load_feature_sequences(dataset, expected)
    return dataset, features, dim


def cmd_visememap(config: RunConfig, args) -> str:
    dataset, features, _ = _load_features(config)
    viseme_map = fit_viseme_map(dataset, features, config)
    path = config.output_dir() / "viseme_map.tsv"
    viseme_map.save(path, dataset.alphabet, fingerprint=config.full_fingerprint())
    return (
        f"visememap: {viseme_map.num_phonemes} phonemes -> "
        f"{viseme_map.num_visemes} visemes ({len(viseme_map.history)} merges) "
        f"-> {path}"
    )


def _ensure_viseme_map(config: RunConfig, dataset, features) -> VisemeMap:
    """Load the viseme map, building and saving it first if absent."""
    path = config.output_dir() / "viseme_map.tsv"
    if path.exists():
        viseme_map, stored = VisemeMap.load(path, dataset.alphabet)
        if stored and stored != config.full_fingerprint():
            raise PipelineError(
                f"viseme map fingerprint {stored!r} does not match the active "
                f"config {config.full_fingerprint()!r}; re-run 'lrc visememap'"
            )
        return viseme_map
    viseme_map = fit_viseme_map(dataset, features, config)
    viseme_map.save(path, dataset.alphabet, fingerprint=config.full_fingerprint())
    return viseme_map


def cmd_train(config: RunConfig, args) -> str:
    dataset, features, dim = _load_features(config)
    viseme_map = _ensure_viseme_map(config, dataset, features)
    recognizer = fit_recognizer(dataset, features, viseme_map, config)
    path = config.output_dir() / "model.lrm"
    save_model(
        path, recognizer.bank_, recognizer.hmm_, viseme_map,
        fingerprint=config.full_fingerprint(),
        feature_fingerprint=config.feature_fingerprint(),
        metadata={"train_utterances": len(dataset.by_split("train"))},
    )
    return (
        f"train: LDA bank {viseme_map.num_visemes}x{dim}, "
        f"HMM {viseme_map.num_phonemes} states -> {path}"
    )


def cmd_decode(config: RunConfig, args) -> str:
    dataset, features, _ = _load_features(config)
    model_path = _require(config.output_dir() / "model.lrm", "model file")
    bank, hmm, _, header = load_model(
        model_path, expected_feature_fingerprint=config.feature_fingerprint()
    )
    if header["fingerprint"] != config.full_fingerprint():
        raise PipelineError(
            f"model fingerprint {header['fingerprint']!r} does not match the "
            f"active config {config.full_fingerprint()!r}; re-run 'lrc train'"
        )
    decoded = decode_utterances(dataset, features, bank, hmm, config)
    out_dir = config.output_dir()
    records = {}
    for utt_id in sorted(decoded):
        path, words, logp = decoded[utt_id]
        rel = f"decoded/{utt_id}.tsv"
        atomic_write_text(out_dir / rel, format_label_file(path, dataset.alphabet))
        records[utt_id] = {
            "words": list(words),
            "log_probability": logp,
            "label_path": rel,
        }
    doc = {
        "fingerprint": config.full_fingerprint(),
        "feature_fingerprint": config.feature_fingerprint(),
        "split": config.split,
        "utterances": records,
    }
    path = out_dir / "decode.json"
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return f"decode: {len(records)} utterances (split {config.split}) -> {path}"


def cmd_eval(config: RunConfig, args) -> str:
    dataset, _, _ = _load_features(config)
    decode_path = _require(config.output_dir() / "decode.json", "decode output")
    doc = json.loads(decode_path.read_text(encoding="utf-8"))
    if doc.get("fingerprint") != config.full_fingerprint():
        raise PipelineError(
            f"decode fingerprint {doc.get('fingerprint')!r} does not match the "
            f"active config {config.full_fingerprint()!r}; re-run 'lrc decode'"
        )
    decoded = {}
    for utt_id, rec in doc["utterances"].items():
        labels = read_label_file(
            config.output_dir() / rec["label_path"], dataset.alphabet
        )
        decoded[utt_id] = (labels, rec["words"], rec["log_probability"])
    report = evaluate_dataset(
        dataset, decoded,
        fingerprint=config.full_fingerprint(),
        feature_fingerprint=config.feature_fingerprint(),
        force_exact=config.exact_permutation,
    )
    report_path = config.output_dir() / "report.json"
    write_report(report, report_path)
    write_plot_tables(report, config.output_dir() / "plots")
    overall = report["aggregates"]["overall"]
    word = overall["word_rate"]
    frame = overall["frame_phoneme_rate"]
    word_text = "n/a" if word is None else f"{word:.3f}"
    return (
        f"eval: word rate {word_text}, frame phoneme rate {frame:.3f} "
        f"over {report['num_utterances']} utterances -> {report_path}"
    )


def cmd_stats(config: RunConfig, args) -> str:
    dataset = load_manifest(_corpus_manifest(config))
    if not dataset.participants:
        raise PipelineError("manifest has no participant records")
    repetitions = sorted(
        {rep for p in dataset.participants for rep in p.accuracies}
    )
    if args.repetition is not None:
        repetitions = [args.repetition]
    results = {}
    for rep in repetitions:
        eligible = [p for p in dataset.participants if rep in p.accuracies]
        results[str(rep)] = cohort_compare(
            eligible, rep, force_exact=config.exact_permutation
        ).to_dict()
    doc = {"fingerprint": config.full_fingerprint(), "repetitions": results}
    path = config.output_dir() / "stats.json"
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    pieces = [
        f"rep{rep}: rank-sum p={res['rank_sum']['p_value']:.4f}, "
        f"t p={res['t_test']['p_value']:.4f}"
        for rep, res in sorted(results.items())
    ]
    return f"stats: {'; '.join(pieces)} -> {path}"


COMMANDS = {
    "synth": cmd_synth,
    "features": cmd_features,
    "visememap": cmd_visememap,
    "train": cmd_train,
    "decode": cmd_decode,
    "eval": cmd_eval,
    "stats": cmd_stats,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--output", help="output directory (default: out)")
    common.add_argument("--manifest", help="dataset manifest path")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--jobs", type=int,
                        help="worker threads (default: logical cores)")
    common.add_argument("--viseme-count", type=int, dest="viseme_count",
                        help="target viseme count (1-32, default 20)")
    common.add_argument("--split", choices=["train", "test", "all"],
                        help="utterance split for decode/eval (default test)")

    parser = argparse.ArgumentParser(
        prog="lrc",
        description="Continuous visual speech recognition pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common],
                       help="generate a synthetic corpus")
    p.add_argument("--preset", choices=["separable", "confusable"],
                   default="separable",
                   help="cluster geometry: one cluster per phoneme, or "
                        "visually identical groups sharing clusters")
    p.add_argument("--speakers", type=int, help="number of synthetic speakers")
    p.add_argument("--separation", type=float, help="cluster mean separation")
    p.add_argument("--spread", type=float, help="cluster standard deviation")

    sub.add_parser("features", parents=[common],
                   help="process raw descriptors into fused features")

    p = sub.add_parser("visememap", parents=[common],
                       help="build the phoneme-to-viseme map")
    p.add_argument("--retrain-each-step", action="store_true",
                   dest="retrain_each_step", default=None,
                   help="retrain the classifier after every merge")

    sub.add_parser("train", parents=[common], help="train LDA bank and HMM")
    sub.add_parser("decode", parents=[common], help="decode a split")
    sub.add_parser("eval", parents=[common], help="score decoded output")

    p = sub.add_parser("stats", parents=[common],
                       help="cohort comparison tests")
    p.add_argument("--exact-permutation", action="store_true",
                   dest="exact_permutation", default=None,
                   help="force exact enumeration for the rank-sum test")
    p.add_argument("--repetition", type=int, choices=[1, 2, 3],
                   help="restrict to one repetition")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {
        name: getattr(args, name, None)
        for name in ("output", "manifest", "seed", "jobs", "viseme_count",
                     "split", "retrain_each_step", "exact_permutation")
    }
    try:
        config = load_config(path=args.config, overrides=overrides)
        summary = COMMANDS[args.command](config, args)
    except (ConfigError, CorpusError, PipelineError, ValueError,
            FileNotFoundError) as exc:
        print(f"lrc {args.command}: error: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
