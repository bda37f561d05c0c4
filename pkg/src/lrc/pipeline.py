"""Pipeline stages glueing corpus, features, map, model, and decoding.

Per-utterance work (feature processing, decoding) runs through a thread map
whose result order matches input order, so parallelism never changes
artifacts.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunConfig
from .corpus import Dataset, validate_alignment
from .features import (
    EarlyFusion,
    FeatureError,
    dct_features,
    read_feature_file,
    temporal_stack,
    write_feature_file,
)
from .recognizer import LdaVisemeBank, PhonemeHmm, VisemeRecognizer, assemble_words
from .storage import atomic_write_text
from .visememap import VisemeMap, VisemeMapper


class PipelineError(ValueError):
    """Raised for missing upstream artifacts or inconsistent inputs."""


def parallel_map(fn, items, jobs):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _split_parts(frames, layout):
    parts = []
    offset = 0
    for entry in layout:
        dim = int(entry["dim"])
        parts.append((entry, frames[:, offset : offset + dim]))
        offset += dim
    if offset != frames.shape[1]:
        raise PipelineError("feature layout does not cover all columns")
    return parts


def process_features(dataset: Dataset, config: RunConfig, out_dir) -> Path:
    """Raw descriptor files to final fused features.

    ROI-kind parts are DCT-coded and truncated to the configured coefficient
    count; every part is temporally stacked and z-scored with training-split
    statistics before concatenation. Writes one feature file per utterance
    plus a manifest copy pointing at them, and returns the manifest path.
    """
    out_dir = Path(out_dir)
    fingerprint = config.feature_fingerprint()
    window = config.temporal_window

    def load_parts(utt):
        if utt.feature_path is None:
            raise PipelineError(f"utterance {utt.id} has no feature file")
        frames, header = read_feature_file(dataset.resolve(utt.feature_path))
        alignment = validate_alignment(utt.frame_labels, frames.shape[0])
        if not alignment.ok:
            raise PipelineError(
                f"utterance {utt.id}: labels and features misaligned "
                f"({alignment.reason})"
            )
        processed = []
        for entry, values in _split_parts(frames, header["layout"]):
            kind = entry.get("kind", "external")
            if kind == "roi":
                rows, cols = int(entry["rows"]), int(entry["cols"])
                stack = values.reshape(-1, rows, cols)
                values = dct_features(stack, config.dct_coefficients)
                entry = {
                    "name": entry["name"],
                    "dim": config.dct_coefficients,
                    "kind": "dct",
                }
            processed.append((entry, temporal_stack(values, window)))
        return processed

    all_parts = parallel_map(load_parts, dataset.utterances, config.effective_jobs())

    reference_layout = [entry["name"] for entry, _ in all_parts[0]]
    for utt, parts in zip(dataset.utterances, all_parts):
        if [entry["name"] for entry, _ in parts] != reference_layout:
            raise PipelineError(f"utterance {utt.id} has a different feature layout")

    train_rows = [
        parts for utt, parts in zip(dataset.utterances, all_parts)
        if utt.split == "train"
    ]
    if not train_rows:
        raise PipelineError("no training utterances to estimate fusion statistics")
    n_parts = len(all_parts[0])
    fusion = EarlyFusion().fit(
        [
            np.concatenate([parts[i][1] for parts in train_rows])
            for i in range(n_parts)
        ]
    )

    feature_dir = out_dir / "features"
    feature_dir.mkdir(parents=True, exist_ok=True)
    new_paths = {}
    for utt, parts in zip(dataset.utterances, all_parts):
        fused = fusion.transform([values for _, values in parts])
        layout = [
            {
                "name": entry["name"],
                "dim": int(values.shape[1]),
                "kind": entry["kind"],
                "window": window,
            }
            for entry, values in parts
        ]
        rel = f"features/{utt.id}.lrf"
        write_feature_file(out_dir / rel, fused.astype(np.float32), layout,
                           fingerprint=fingerprint)
        new_paths[utt.id] = rel

    base = dataset.base_dir if dataset.base_dir is not None else Path(".")
    doc = {
        "alphabet": list(dataset.alphabet.symbols),
        "lexicon": _relative(base / dataset.lexicon_path, out_dir),
        "feature_fingerprint": fingerprint,
        "feature_config": config.feature_fields(),
        "utterances": [
            {
                "id": u.id,
                "speaker": u.speaker_id,
                "level": u.level,
                "text": list(u.text),
                "frame_rate": u.frame_rate,
                "split": u.split,
                "label_path": _relative(base / u.label_path, out_dir),
                "feature_path": new_paths[u.id],
            }
            for u in dataset.utterances
        ],
        "participants": [
            {
                "id": p.id,
                "cohort": p.cohort,
                "accuracies": {str(k): v for k, v in sorted(p.accuracies.items())},
            }
            for p in dataset.participants
        ],
    }
    manifest_path = out_dir / "manifest_features.json"
    atomic_write_text(manifest_path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return manifest_path


def _relative(target: Path, base: Path) -> str:
    return Path(os.path.relpath(Path(target).resolve(), Path(base).resolve())).as_posix()


def load_feature_sequences(dataset: Dataset, expected_fingerprint=None):
    """Read all feature files; returns (features by id, common dimension)."""
    features = {}
    dim = None
    for utt in dataset.utterances:
        frames, header = read_feature_file(dataset.resolve(utt.feature_path))
        if (expected_fingerprint is not None
                and header.get("fingerprint") != expected_fingerprint):
            raise PipelineError(
                f"utterance {utt.id}: feature fingerprint "
                f"{header.get('fingerprint')!r} does not match expected "
                f"{expected_fingerprint!r}"
            )
        alignment = validate_alignment(utt.frame_labels, frames.shape[0])
        if not alignment.ok:
            raise PipelineError(
                f"utterance {utt.id}: labels and features misaligned "
                f"({alignment.reason})"
            )
        if dim is None:
            dim = frames.shape[1]
        elif frames.shape[1] != dim:
            raise FeatureError(
                f"utterance {utt.id}: dimension {frames.shape[1]} != {dim}"
            )
        features[utt.id] = frames
    return features, dim


def fit_viseme_map(dataset: Dataset, features: dict, config: RunConfig) -> VisemeMap:
    train = dataset.by_split("train")
    if not train:
        raise PipelineError("no training utterances in dataset")
    mapper = VisemeMapper(
        target_visemes=config.viseme_count,
        seed=config.seed,
        retrain_each_step=config.retrain_each_step,
    )
    mapper.fit(
        [features[u.id] for u in train],
        [u.frame_labels for u in train],
        num_classes=len(dataset.alphabet),
    )
    return mapper.map_


def fit_recognizer(dataset: Dataset, features: dict, viseme_map: VisemeMap,
                   config: RunConfig) -> VisemeRecognizer:
    train = dataset.by_split("train")
    if not train:
        raise PipelineError("no training utterances in dataset")
    recognizer = VisemeRecognizer(
        viseme_map=viseme_map,
        ridge=config.lda_ridge,
        smoothing=config.hmm_smoothing,
    )
    recognizer.fit(
        [features[u.id] for u in train],
        [u.frame_labels for u in train],
    )
    return recognizer


def decode_utterances(dataset: Dataset, features: dict, bank: LdaVisemeBank,
                      hmm: PhonemeHmm, config: RunConfig, split=None):
    """Decode the selected split; returns {id: DecodedUtterance}."""
    split = config.split if split is None else split
    targets = dataset.utterances if split == "all" else dataset.by_split(split)
    if not targets:
        raise PipelineError(f"no utterances in split {split!r}")

    def decode_one(utt):
        scores = bank.predict_proba(features[utt.id])
        path, logp = hmm.decode(scores)
        words = assemble_words(path, dataset.lexicon, dataset.alphabet)
        return utt.id, path, words, logp

    results = parallel_map(decode_one, targets, config.effective_jobs())
    return {utt_id: (path, words, logp) for utt_id, path, words, logp in results}
