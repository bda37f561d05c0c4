"""Evaluation report assembly and serialization.

The report is a JSON document with per-utterance rates, aggregate tables
(overall, by split, speaker, and level), per-phoneme detection counts,
cumulative-average curves, and, when participant records are present, the
human-side tables and cohort hypothesis tests. Flat TSV tables for plotting
are written alongside it.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .corpus import COHORTS, Dataset
from .evaluation import (
    LEVEL_LAYOUT,
    SIGNIFICANCE_THRESHOLD,
    EvaluationError,
    cohort_compare,
    cumulative_curve,
    frame_phoneme_rate,
    participant_word_accuracy,
    phoneme_prf,
    word_recognition_rate,
)
from .storage import atomic_write_text


def _round_trip_safe(value):
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def _summary(values):
    values = list(values)
    if not values:
        return {"count": 0, "mean": None}
    return {"count": len(values), "mean": float(np.mean(values))}


def evaluate_dataset(dataset: Dataset, decoded: dict, fingerprint="",
                     feature_fingerprint="", threshold=SIGNIFICANCE_THRESHOLD,
                     force_exact=False) -> dict:
    """Build the full evaluation report.

    ``decoded`` maps utterance id to ``(frame_labels, words, log_probability)``
    for every decoded utterance; utterances missing from it are skipped.
    """
    per_utterance = []
    pooled_true = []
    pooled_pred = []
    for utt in dataset.utterances:
        if utt.id not in decoded:
            continue
        pred_labels, words, logp = decoded[utt.id]
        pred_labels = np.asarray(pred_labels, dtype=np.int64)
        rate = frame_phoneme_rate(utt.frame_labels, pred_labels)
        word_rate = (
            word_recognition_rate(utt.text, words) if utt.text else None
        )
        per_utterance.append(
            {
                "id": utt.id,
                "speaker": utt.speaker_id,
                "level": utt.level,
                "split": utt.split,
                "frames": utt.num_frames,
                "frame_phoneme_rate": rate,
                "word_rate": _round_trip_safe(word_rate),
                "reference_words": len(utt.text),
                "hypothesis_words": len(words),
                "log_probability": _round_trip_safe(logp),
            }
        )
        pooled_true.append(utt.frame_labels)
        pooled_pred.append(pred_labels)

    report = {
        "fingerprint": fingerprint,
        "feature_fingerprint": feature_fingerprint,
        "num_utterances": len(per_utterance),
        "per_utterance": per_utterance,
        "aggregates": _aggregates(per_utterance),
        "per_phoneme": [],
        "cumulative_by_speaker": {},
    }

    if pooled_true:
        counts = phoneme_prf(
            np.concatenate(pooled_true), np.concatenate(pooled_pred),
            dataset.alphabet,
        )
        report["per_phoneme"] = [
            {
                "phoneme": c.phoneme,
                "tp": c.tp,
                "fp": c.fp,
                "fn": c.fn,
                "precision": _round_trip_safe(c.precision),
                "recall": _round_trip_safe(c.recall),
            }
            for c in counts
        ]
        micro_tp = sum(c.tp for c in counts)
        micro_frames = int(sum(len(t) for t in pooled_true))
        report["aggregates"]["overall"]["micro_frame_rate"] = (
            micro_tp / micro_frames if micro_frames else None
        )

    for speaker in dataset.speakers():
        rates = [
            row["word_rate"] for row in per_utterance
            if row["speaker"] == speaker and row["word_rate"] is not None
        ]
        if rates:
            report["cumulative_by_speaker"][speaker] = [
                float(v) for v in cumulative_curve(rates)
            ]

    if dataset.participants:
        report["human"] = _human_tables(
            dataset.participants, threshold, force_exact
        )
    return report


def _aggregates(rows):
    def block(selected):
        word = [r["word_rate"] for r in selected if r["word_rate"] is not None]
        frame = [r["frame_phoneme_rate"] for r in selected]
        out = _summary(frame)
        out["frame_phoneme_rate"] = out.pop("mean")
        word_summary = _summary(word)
        out["word_rate"] = word_summary["mean"]
        return out

    by_split = {}
    for split in sorted({r["split"] for r in rows}):
        by_split[split] = block([r for r in rows if r["split"] == split])
    by_speaker = {}
    for speaker in sorted({r["speaker"] for r in rows}):
        by_speaker[speaker] = block([r for r in rows if r["speaker"] == speaker])
    by_level = {}
    for level in sorted({r["level"] for r in rows}):
        by_level[str(level)] = block([r for r in rows if r["level"] == level])
    return {
        "overall": block(rows),
        "by_split": by_split,
        "by_speaker": by_speaker,
        "by_level": by_level,
    }


def _human_tables(participants, threshold, force_exact):
    repetitions = sorted(
        {rep for p in participants for rep in p.accuracies}
    )
    table = []
    for p in participants:
        entry = {"id": p.id, "cohort": p.cohort, "accuracy_by_repetition": {}}
        for rep in sorted(p.accuracies):
            entry["accuracy_by_repetition"][str(rep)] = participant_word_accuracy(
                p, rep
            )
        table.append(entry)

    cohort_means = {}
    for cohort in COHORTS:
        members = [p for p in participants if p.cohort == cohort]
        cohort_means[cohort] = {
            str(rep): _summary(
                [participant_word_accuracy(p, rep)
                 for p in members if rep in p.accuracies]
            )["mean"]
            for rep in repetitions
        }

    # per-level means assume the canonical 6+6+6+7 session layout
    level_means = {}
    for rep in repetitions:
        per_level = {}
        for level in (1, 2, 3, 4):
            values = []
            for p in participants:
                sentences = p.accuracies.get(rep, [])
                values.extend(
                    v for v, lv in zip(sentences, LEVEL_LAYOUT) if lv == level
                )
            per_level[str(level)] = _summary(values)["mean"]
        level_means[str(rep)] = per_level

    cumulative = {}
    for rep in repetitions:
        rows = [p.accuracies[rep] for p in participants if rep in p.accuracies]
        width = min(len(r) for r in rows)
        if width:
            mean_per_sentence = np.mean([r[:width] for r in rows], axis=0)
            cumulative[str(rep)] = [
                float(v) for v in cumulative_curve(mean_per_sentence)
            ]

    tests = {}
    has_both = all(
        any(p.cohort == cohort for p in participants) for cohort in COHORTS
    )
    if has_both:
        for rep in repetitions:
            eligible = [p for p in participants if rep in p.accuracies]
            try:
                tests[str(rep)] = cohort_compare(
                    eligible, rep, threshold=threshold, force_exact=force_exact
                ).to_dict()
            except EvaluationError:
                continue

    return {
        "participants": table,
        "cohort_means": cohort_means,
        "level_means": level_means,
        "cumulative_by_repetition": cumulative,
        "tests": tests,
        "significance_threshold": threshold,
    }


def write_report(report: dict, path) -> None:
    atomic_write_text(
        path, json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"
    )


def load_report(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _format_cell(value):
    if value is None:
        return "NA"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def _write_table(path, header, rows):
    lines = ["\t".join(header)]
    lines.extend("\t".join(_format_cell(c) for c in row) for row in rows)
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_plot_tables(report: dict, out_dir) -> list:
    """Write flat TSV tables matching the report's figures axes.

    Returns the list of written paths.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    rows = [
        (r["id"], r["speaker"], r["level"], r["split"],
         r["frame_phoneme_rate"], r["word_rate"])
        for r in report["per_utterance"]
    ]
    path = out_dir / "per_utterance.tsv"
    _write_table(path, ("utterance", "speaker", "level", "split",
                        "frame_phoneme_rate", "word_rate"), rows)
    written.append(path)

    by_level = report["aggregates"]["by_level"]
    path = out_dir / "word_rate_by_level.tsv"
    _write_table(
        path, ("level", "word_rate", "frame_phoneme_rate", "utterances"),
        [(lvl, blk["word_rate"], blk["frame_phoneme_rate"], blk["count"])
         for lvl, blk in sorted(by_level.items())],
    )
    written.append(path)

    path = out_dir / "cumulative_by_speaker.tsv"
    rows = []
    for speaker, curve in sorted(report["cumulative_by_speaker"].items()):
        rows.extend(
            (speaker, idx + 1, value) for idx, value in enumerate(curve)
        )
    _write_table(path, ("speaker", "sentence", "cumulative_word_rate"), rows)
    written.append(path)

    path = out_dir / "per_phoneme.tsv"
    _write_table(
        path, ("phoneme", "tp", "fp", "fn", "precision", "recall"),
        [(r["phoneme"], r["tp"], r["fp"], r["fn"], r["precision"], r["recall"])
         for r in report["per_phoneme"]],
    )
    written.append(path)

    human = report.get("human")
    if human:
        path = out_dir / "human_by_repetition.tsv"
        rows = []
        for cohort, by_rep in sorted(human["cohort_means"].items()):
            rows.extend(
                (cohort, rep, mean) for rep, mean in sorted(by_rep.items())
            )
        _write_table(path, ("cohort", "repetition", "word_accuracy"), rows)
        written.append(path)

        path = out_dir / "human_participants.tsv"
        rows = []
        for entry in human["participants"]:
            for rep, acc in sorted(entry["accuracy_by_repetition"].items()):
                rows.append((entry["id"], entry["cohort"], rep, acc))
        _write_table(path, ("participant", "cohort", "repetition",
                            "word_accuracy"), rows)
        written.append(path)

        path = out_dir / "human_by_level.tsv"
        rows = []
        for rep, by_level in sorted(human["level_means"].items()):
            rows.extend(
                (rep, level, mean) for level, mean in sorted(by_level.items())
            )
        _write_table(path, ("repetition", "level", "word_accuracy"), rows)
        written.append(path)

        path = out_dir / "human_cumulative.tsv"
        rows = []
        for rep, curve in sorted(human["cumulative_by_repetition"].items()):
            rows.extend(
                (rep, idx + 1, value) for idx, value in enumerate(curve)
            )
        _write_table(path, ("repetition", "sentence", "cumulative_accuracy"),
                     rows)
        written.append(path)
    return written
