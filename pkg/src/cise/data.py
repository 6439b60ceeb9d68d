"""Dataset ingestion, validation, splitting, and persistence.

Datasets are JSONL, one record per line:

    {"id": "...", "sentences": ["...", ...],
     "labels": [0, 1, ...],            # optional, aligned with sentences
     "reference_summary": "...",       # optional
     "label_source": "...",            # optional provenance tag
     "scores": [0.0, ...],             # optional, aligned with sentences
     "scorer_id": "...",               # optional provenance tag
     "score_flags": ["..."]}           # optional degraded-result markers

Validation is strict on the fields above (types, alignment, duplicate
ids) and failures cite the 1-based line number; unrecognized keys are
ignored so foreign exports load. Loaded collections are immutable
records, safe to share.
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import Document, GroundTruth, ScoreVector
from .errors import DataFormatError, UsageError

__all__ = [
    "DatasetRecord",
    "load_jsonl",
    "save_jsonl",
    "split",
    "attach_scores",
    "attach_labels",
    "dataset_stats",
    "segment_sentences",
    "convert_mts",
    "record_document",
    "record_truth",
    "record_scores",
    "records_to_corpus",
    "write_atomic",
]


@dataclass(frozen=True)
class DatasetRecord:
    """One document with whatever annotations it has accumulated."""

    id: str
    sentences: Tuple[str, ...]
    labels: Optional[Tuple[int, ...]] = None
    reference_summary: Optional[str] = None
    label_source: Optional[str] = None
    scores: Optional[Tuple[float, ...]] = None
    scorer_id: Optional[str] = None
    score_flags: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(int(v) for v in self.labels))
        if self.scores is not None:
            object.__setattr__(self, "scores", tuple(float(v) for v in self.scores))
        object.__setattr__(self, "score_flags", tuple(self.score_flags))
        self._check()

    def _check(self):
        if not self.id:
            raise DataFormatError("record id must be a non-empty string")
        if not self.sentences:
            raise DataFormatError(f"record {self.id!r} has no sentences")
        for i, s in enumerate(self.sentences):
            if not isinstance(s, str) or not s:
                raise DataFormatError(f"record {self.id!r}: sentence {i} is empty")
        p = len(self.sentences)
        if self.labels is not None:
            if len(self.labels) != p:
                raise DataFormatError(
                    f"record {self.id!r}: {len(self.labels)} labels for {p} sentences"
                )
            if any(v not in (0, 1) for v in self.labels):
                raise DataFormatError(f"record {self.id!r}: labels must be 0/1")
        if self.scores is not None:
            if len(self.scores) != p:
                raise DataFormatError(
                    f"record {self.id!r}: {len(self.scores)} scores for {p} sentences"
                )
            if any(not math.isfinite(v) or v < 0 for v in self.scores):
                raise DataFormatError(
                    f"record {self.id!r}: scores must be finite and >= 0"
                )

    @property
    def p(self) -> int:
        return len(self.sentences)

    def to_dict(self) -> dict:
        out: dict = {"id": self.id, "sentences": list(self.sentences)}
        if self.labels is not None:
            out["labels"] = list(self.labels)
        if self.reference_summary is not None:
            out["reference_summary"] = self.reference_summary
        if self.label_source is not None:
            out["label_source"] = self.label_source
        if self.scores is not None:
            out["scores"] = list(self.scores)
        if self.scorer_id is not None:
            out["scorer_id"] = self.scorer_id
        if self.score_flags:
            out["score_flags"] = list(self.score_flags)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetRecord":
        if not isinstance(d, dict):
            raise DataFormatError("record must be a JSON object")
        if "id" not in d or "sentences" not in d:
            raise DataFormatError("record needs 'id' and 'sentences'")
        if not isinstance(d["id"], str):
            raise DataFormatError("'id' must be a string")
        if not isinstance(d["sentences"], list):
            raise DataFormatError("'sentences' must be a list")
        for key in ("reference_summary", "label_source", "scorer_id"):
            if key in d and d[key] is not None and not isinstance(d[key], str):
                raise DataFormatError(f"'{key}' must be a string")
        for key in ("labels", "scores", "score_flags"):
            if key in d and d[key] is not None and not isinstance(d[key], list):
                raise DataFormatError(f"'{key}' must be a list")
        return cls(
            id=d["id"],
            sentences=d["sentences"],
            labels=d.get("labels"),
            reference_summary=d.get("reference_summary"),
            label_source=d.get("label_source"),
            scores=d.get("scores"),
            scorer_id=d.get("scorer_id"),
            score_flags=d.get("score_flags") or (),
        )


def load_jsonl(path) -> List[DatasetRecord]:
    """Load and validate a dataset; errors cite the offending line."""
    records: List[DatasetRecord] = []
    seen: Dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            try:
                record = DatasetRecord.from_dict(payload)
            except DataFormatError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
            if record.id in seen:
                raise DataFormatError(
                    f"{path}:{lineno}: duplicate id {record.id!r} "
                    f"(first seen on line {seen[record.id]})"
                )
            seen[record.id] = lineno
            records.append(record)
    if not records:
        raise DataFormatError(f"{path}: dataset is empty")
    return records


def write_atomic(path, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see halves."""
    tmp = str(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def save_jsonl(records: Sequence[DatasetRecord], path) -> None:
    lines = [json.dumps(r.to_dict(), ensure_ascii=False) for r in records]
    write_atomic(path, "\n".join(lines) + "\n")


def split(
    records: Sequence[DatasetRecord], cal_size: int, seed: int
) -> Tuple[List[DatasetRecord], List[DatasetRecord]]:
    """Seeded shuffle, then a deterministic prefix/suffix partition."""
    if not (0 < cal_size < len(records)):
        raise UsageError(
            f"cal_size must be in (0, {len(records)}), got {cal_size}"
        )
    perm = np.random.default_rng(seed).permutation(len(records))
    shuffled = [records[i] for i in perm]
    return shuffled[:cal_size], shuffled[cal_size:]


def _index_by_id(records: Sequence[DatasetRecord]) -> Dict[str, int]:
    return {r.id: i for i, r in enumerate(records)}


def attach_scores(
    records: Sequence[DatasetRecord],
    vectors: Sequence[ScoreVector],
    scorer_id: str = "",
    overwrite: bool = False,
) -> List[DatasetRecord]:
    """Merge score vectors into records by id.

    Existing scores are never silently replaced: attaching over them
    requires ``overwrite``. Unknown ids are an error rather than a skip.
    """
    out = list(records)
    index = _index_by_id(records)
    for sv in vectors:
        if sv.doc_id not in index:
            raise UsageError(f"scores refer to unknown record {sv.doc_id!r}")
        i = index[sv.doc_id]
        rec = out[i]
        if rec.scores is not None and not overwrite:
            raise UsageError(
                f"record {rec.id!r} already has scores; pass overwrite to replace"
            )
        if sv.p != rec.p:
            raise UsageError(
                f"record {rec.id!r} has {rec.p} sentences but scores cover {sv.p}"
            )
        out[i] = replace(
            rec,
            scores=sv.scores,
            scorer_id=scorer_id or rec.scorer_id,
            score_flags=sv.flags,
        )
    return out


def attach_labels(
    records: Sequence[DatasetRecord],
    truths: Sequence[GroundTruth],
    label_source: str = "provided",
    overwrite: bool = False,
) -> List[DatasetRecord]:
    """Merge ground-truth index sets into records as 0/1 label lists."""
    out = list(records)
    index = _index_by_id(records)
    for gt in truths:
        if gt.doc_id not in index:
            raise UsageError(f"labels refer to unknown record {gt.doc_id!r}")
        i = index[gt.doc_id]
        rec = out[i]
        if rec.labels is not None and not overwrite:
            raise UsageError(
                f"record {rec.id!r} already has labels; pass overwrite to replace"
            )
        if gt.important and gt.important[-1] >= rec.p:
            raise UsageError(
                f"labels for {rec.id!r} index sentence {gt.important[-1]} "
                f"but the record has {rec.p}"
            )
        important = set(gt.important)
        labels = tuple(1 if j in important else 0 for j in range(rec.p))
        out[i] = replace(rec, labels=labels, label_source=label_source)
    return out


def dataset_stats(records: Sequence[DatasetRecord]) -> dict:
    """Corpus shape numbers: document count, mean length, label positive rate."""
    if not records:
        raise UsageError("no records")
    lengths = [r.p for r in records]
    labeled = [r for r in records if r.labels is not None]
    positives = sum(sum(r.labels) for r in labeled)
    label_total = sum(r.p for r in labeled)
    return {
        "n_docs": len(records),
        "mean_sentences": float(np.mean(lengths)),
        "n_labeled_docs": len(labeled),
        "label_positive_rate": (positives / label_total) if label_total else None,
        "n_with_reference": sum(
            1 for r in records if r.reference_summary is not None
        ),
        "n_with_scores": sum(1 for r in records if r.scores is not None),
    }


_ABBREVIATIONS = {
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "no", "vs", "etc",
    "e.g", "i.e", "fig", "al", "inc", "ltd", "co", "dept", "est", "approx",
}

_SENTENCE_END = re.compile(r"([.!?]+)(\s+|$)")


def segment_sentences(text: str) -> List[str]:
    """Rule-based sentence splitter on [.!?] with an abbreviation allowlist.

    A fallback for raw-text input; benchmark datasets arrive
    pre-segmented and skip this entirely.
    """
    sentences: List[str] = []
    start = 0
    for match in _SENTENCE_END.finditer(text):
        end = match.end(1)
        candidate = text[start:end].strip()
        if not candidate:
            start = match.end()
            continue
        last_word = candidate[: -len(match.group(1))].rstrip().rsplit(None, 1)
        token = last_word[-1].lower().strip(".") if last_word else ""
        if match.group(1) == "." and token in _ABBREVIATIONS:
            continue
        sentences.append(candidate)
        start = match.end()
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def convert_mts(raw_records: Iterable[dict]) -> List[DatasetRecord]:
    """Convert question/answer dialogue transcripts into sentence units.

    Input rows look like ``{"id", "turns": [{"speaker", "text"}, ...],
    "reference_summary"}``. Consecutive doctor turns become the question
    part and the following patient turns the answer part of one merged
    unit, "Doctor: ... Patient: ...", so each unit is interpretable
    without surrounding context. Samples left with two or fewer units
    are dropped entirely.
    """
    out: List[DatasetRecord] = []
    for row_no, row in enumerate(raw_records, start=1):
        try:
            rid = row["id"]
            turns = row["turns"]
        except (KeyError, TypeError) as exc:
            raise DataFormatError(
                f"dialogue record {row_no}: missing {exc}"
            ) from exc
        units: List[str] = []
        doctor: List[str] = []
        patient: List[str] = []

        def flush():
            if not doctor and not patient:
                return
            parts = []
            if doctor:
                parts.append("Doctor: " + " ".join(doctor))
            if patient:
                parts.append("Patient: " + " ".join(patient))
            units.append(" ".join(parts))
            doctor.clear()
            patient.clear()

        for turn in turns:
            speaker = str(turn.get("speaker", "")).strip().lower()
            text = str(turn.get("text", "")).strip()
            if not text:
                continue
            if speaker == "doctor":
                if patient:
                    # A new doctor question closes the previous unit.
                    flush()
                doctor.append(text)
            else:
                patient.append(text)
        flush()

        if len(units) <= 2:
            continue
        out.append(
            DatasetRecord(
                id=str(rid),
                sentences=tuple(units),
                reference_summary=row.get("reference_summary"),
            )
        )
    return out


def record_document(record: DatasetRecord) -> Document:
    return Document(record.id, record.sentences)


def record_truth(record: DatasetRecord) -> GroundTruth:
    if record.labels is None:
        raise UsageError(f"record {record.id!r} has no labels")
    return GroundTruth(
        record.id, tuple(i for i, v in enumerate(record.labels) if v == 1)
    )


def record_scores(record: DatasetRecord) -> ScoreVector:
    if record.scores is None:
        raise UsageError(f"record {record.id!r} has no scores")
    return ScoreVector(record.id, record.scores, record.score_flags)


def records_to_corpus(
    records: Sequence[DatasetRecord],
) -> List[Tuple[ScoreVector, GroundTruth]]:
    """(scores, truth) pairs for calibration/evaluation; all fields required."""
    return [(record_scores(r), record_truth(r)) for r in records]
