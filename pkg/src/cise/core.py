"""Calibrated sentence filtering with finite-sample retention guarantees.

A document is an ordered list of sentences, a subset of which is marked
important. Given per-sentence importance scores, the filtration ``F_q``
keeps every sentence scoring at least ``q``. Calibration picks a single
threshold ``q_hat`` from a small labeled sample so that, on exchangeable
test documents, the filtered summary keeps at least a fraction ``beta``
of the important sentences with probability at least ``1 - alpha``.

The mechanism is split-conformal: each calibration document is reduced
to one score (the largest threshold under which it still meets the
recall target), and ``q_hat`` is a fixed order statistic of those
scores. All operations here are pure functions over immutable values.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Tuple

from .errors import DataFormatError, UsageError

__all__ = [
    "Document",
    "GroundTruth",
    "ScoreVector",
    "CalibrationConfig",
    "CalibrationArtifact",
    "SummarySelection",
    "recall",
    "filter_at",
    "conformal_score",
    "calibrate",
    "summarize",
    "coverage_bounds",
]


@dataclass(frozen=True)
class Document:
    """An ordered, immutable list of sentences with an identity.

    Sentence order is significant and preserved by every downstream
    operation; indices are 0-based.
    """

    id: str
    sentences: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))
        if len(self.sentences) < 1:
            raise UsageError(f"document {self.id!r} has no sentences")
        for i, s in enumerate(self.sentences):
            if not isinstance(s, str) or len(s) == 0:
                raise UsageError(f"document {self.id!r}: sentence {i} is empty")

    @property
    def p(self) -> int:
        """Number of sentences."""
        return len(self.sentences)


def _sorted_index_tuple(indices: Iterable[int], what: str) -> Tuple[int, ...]:
    out = tuple(sorted(set(int(i) for i in indices)))
    if out and out[0] < 0:
        raise UsageError(f"{what} contains a negative sentence index")
    return out


@dataclass(frozen=True)
class GroundTruth:
    """The set of important sentence indices for one document.

    May be empty; calibration drops such records (see :func:`calibrate`)
    while evaluation treats them as vacuously covered.
    """

    doc_id: str
    important: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "important", _sorted_index_tuple(self.important, "ground truth")
        )

    def validate_against(self, doc: Document) -> None:
        if doc.id != self.doc_id:
            raise UsageError(f"ground truth is for {self.doc_id!r}, not {doc.id!r}")
        if self.important and self.important[-1] >= doc.p:
            raise UsageError(
                f"ground truth for {self.doc_id!r} indexes sentence "
                f"{self.important[-1]} but the document has {doc.p}"
            )


@dataclass(frozen=True)
class ScoreVector:
    """Per-sentence importance scores for one document.

    Scores are finite and nonnegative, one per sentence, larger meaning
    more important. ``flags`` carries degraded-result markers attached
    by scorers (e.g. a power iteration that hit its iteration cap); an
    empty tuple means a clean result.
    """

    doc_id: str
    scores: Tuple[float, ...]
    flags: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "scores", tuple(float(s) for s in self.scores))
        object.__setattr__(self, "flags", tuple(self.flags))
        if len(self.scores) < 1:
            raise UsageError(f"score vector for {self.doc_id!r} is empty")
        for i, s in enumerate(self.scores):
            if not math.isfinite(s) or s < 0:
                raise UsageError(
                    f"score vector for {self.doc_id!r}: entry {i} is {s!r}; "
                    "scores must be finite and >= 0"
                )

    @property
    def p(self) -> int:
        return len(self.scores)


@dataclass(frozen=True)
class CalibrationConfig:
    """Target error rate ``alpha`` and target recall fraction ``beta``."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (0 < self.alpha <= 1):
            raise UsageError(f"alpha must be in (0, 1], got {self.alpha}")
        if not (0 < self.beta <= 1):
            raise UsageError(f"beta must be in (0, 1], got {self.beta}")


@dataclass(frozen=True)
class CalibrationArtifact:
    """The persisted outcome of one calibration run.

    ``threshold`` is a nonnegative float, or ``None`` meaning retain-all
    (no filtering): that sentinel is produced when ``alpha < 1/(n+1)``,
    where no order statistic certifies the requested coverage and a full
    copy trivially does.
    """

    alpha: float
    beta: float
    n: int
    threshold: Optional[float]
    scorer_id: str = ""
    seed: Optional[int] = None
    dropped_empty_truth: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise UsageError(f"artifact n must be >= 1, got {self.n}")
        if self.threshold is not None and not (
            math.isfinite(self.threshold) and self.threshold >= 0
        ):
            raise UsageError(
                f"artifact threshold must be finite and >= 0 or None, got {self.threshold!r}"
            )

    @property
    def retains_all(self) -> bool:
        return self.threshold is None

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "n": self.n,
            "threshold": "retain_all" if self.threshold is None else self.threshold,
            "scorer_id": self.scorer_id,
            "seed": self.seed,
            "dropped_empty_truth": self.dropped_empty_truth,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationArtifact":
        try:
            threshold = d["threshold"]
            if threshold == "retain_all":
                threshold = None
            return cls(
                alpha=float(d["alpha"]),
                beta=float(d["beta"]),
                n=int(d["n"]),
                threshold=None if threshold is None else float(threshold),
                scorer_id=str(d.get("scorer_id", "")),
                seed=d.get("seed"),
                dropped_empty_truth=int(d.get("dropped_empty_truth", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"bad calibration artifact: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "CalibrationArtifact":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"artifact is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise DataFormatError("artifact JSON must be an object")
        return cls.from_dict(d)


@dataclass(frozen=True)
class SummarySelection:
    """Indices of the sentences a summary keeps, in document order."""

    doc_id: str
    retained: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "retained", _sorted_index_tuple(self.retained, "selection")
        )

    def render(self, doc: Document, sep: str = " ") -> str:
        """The summary text: retained sentences joined in original order."""
        if doc.id != self.doc_id:
            raise UsageError(f"selection is for {self.doc_id!r}, not {doc.id!r}")
        if self.retained and self.retained[-1] >= doc.p:
            raise UsageError(
                f"selection for {self.doc_id!r} indexes sentence "
                f"{self.retained[-1]} but the document has {doc.p}"
            )
        return sep.join(doc.sentences[i] for i in self.retained)


def recall(selection: SummarySelection, truth: GroundTruth) -> float:
    """Fraction of important sentences the selection retained.

    Returns 1.0 when the ground truth is empty: with nothing marked
    important, any summary vacuously covers it (convention; see
    :func:`calibrate` for the calibration-side treatment).
    """
    if selection.doc_id != truth.doc_id:
        raise UsageError(
            f"selection is for {selection.doc_id!r} but truth is for {truth.doc_id!r}"
        )
    if not truth.important:
        return 1.0
    hit = len(set(selection.retained) & set(truth.important))
    return hit / len(truth.important)


def filter_at(scores: ScoreVector, q: Optional[float]) -> SummarySelection:
    """Keep exactly the sentences scoring at least ``q`` (inclusive).

    ``q=0`` keeps everything because scores are nonnegative; ``q=None``
    is the retain-all sentinel and also keeps everything. The family is
    nested: raising ``q`` never adds a sentence.
    """
    if q is None:
        return SummarySelection(scores.doc_id, tuple(range(scores.p)))
    if not (math.isfinite(q) and q >= 0):
        raise UsageError(f"threshold must be finite and >= 0 or None, got {q!r}")
    return SummarySelection(
        scores.doc_id, tuple(i for i, s in enumerate(scores.scores) if s >= q)
    )


def _min_retained_for_recall(m: int, beta: float) -> int:
    """Smallest k in [1, m] with k/m >= beta, under float comparison.

    Starts from ceil(beta*m) and fixes up so the result is consistent
    with the exact division-based recall comparison used everywhere
    else; float rounding of beta*m near an integer cannot skew it.
    """
    k = min(m, max(1, math.ceil(beta * m)))
    while k > 1 and (k - 1) / m >= beta:
        k -= 1
    while k < m and k / m < beta:
        k += 1
    return k


def conformal_score(scores: ScoreVector, truth: GroundTruth, beta: float) -> float:
    """Largest threshold q at which the filtration still meets recall beta.

    Closed form: sort the important sentences' scores descending as
    r_1 >= ... >= r_m and return r_k for k = ceil(beta*m). Keeping the
    top k important sentences needs q <= r_k, and any q > r_k keeps
    fewer than k of them, so this equals the brute-force maximum of q
    over the breakpoint set (the score values themselves).

    With beta = 1 this is the minimum score over the important
    sentences: the all-or-nothing retention criterion.
    """
    if scores.doc_id != truth.doc_id:
        raise UsageError(
            f"scores are for {scores.doc_id!r} but truth is for {truth.doc_id!r}"
        )
    if not truth.important:
        raise UsageError(
            f"document {truth.doc_id!r} has empty ground truth; "
            "conformal scores are undefined (calibrate() drops such records)"
        )
    if not (0 < beta <= 1):
        raise UsageError(f"beta must be in (0, 1], got {beta}")
    if truth.important[-1] >= scores.p:
        raise UsageError(
            f"ground truth for {truth.doc_id!r} indexes sentence "
            f"{truth.important[-1]} but scores cover {scores.p}"
        )
    ranked = sorted((scores.scores[i] for i in truth.important), reverse=True)
    k = _min_retained_for_recall(len(ranked), beta)
    return ranked[k - 1]


def _quantile_index(alpha: float, n: int) -> int:
    """floor(alpha * (n+1)), computed exactly for the IEEE value of alpha."""
    return math.floor(Fraction(alpha) * (n + 1))


def calibrate(
    corpus: Sequence[Tuple[ScoreVector, GroundTruth]],
    config: CalibrationConfig,
    scorer_id: str = "",
    seed: Optional[int] = None,
) -> CalibrationArtifact:
    """Pick the threshold as the floor(alpha*(n+1))-th smallest score.

    Records with empty ground truth are dropped (their score would be
    unbounded and would silently loosen the threshold); the count is
    recorded on the artifact and a warning is emitted. When
    ``alpha < 1/(n+1)`` no order statistic works and the retain-all
    sentinel is returned instead.

    The order statistic is taken without interpolation: the guarantee
    is a rank statement about exchangeable scores, and interpolating
    would void it.
    """
    kept = [(sv, gt) for sv, gt in corpus if gt.important]
    dropped = len(corpus) - len(kept)
    if dropped:
        warnings.warn(
            f"calibrate: dropped {dropped} record(s) with empty ground truth",
            stacklevel=2,
        )
    if not kept:
        raise UsageError("no calibration records with non-empty ground truth")

    ordered = sorted(conformal_score(sv, gt, config.beta) for sv, gt in kept)
    n = len(ordered)
    k = _quantile_index(config.alpha, n)
    if k == 0:
        # alpha < 1/(n+1): outside the guaranteed range; a full copy
        # trivially satisfies coverage.
        warnings.warn(
            f"alpha={config.alpha} is below 1/(n+1)={1 / (n + 1):.4g}; "
            "returning the retain-all sentinel",
            stacklevel=2,
        )
        threshold = None
    else:
        # alpha in (n/(n+1), 1] can push k to n+1; the largest score is
        # the most aggressive threshold the sample supports.
        threshold = ordered[min(k, n) - 1]
    return CalibrationArtifact(
        alpha=config.alpha,
        beta=config.beta,
        n=n,
        threshold=threshold,
        scorer_id=scorer_id,
        seed=seed,
        dropped_empty_truth=dropped,
    )


def summarize(scores: ScoreVector, artifact: CalibrationArtifact) -> SummarySelection:
    """Apply the calibrated threshold to a new document's scores."""
    return filter_at(scores, artifact.threshold)


def coverage_bounds(alpha: float, n: int) -> Tuple[float, float]:
    """Two-sided bounds on expected coverage after calibrating on n records.

    Returns ``(1 - alpha, 1 - alpha + 1/(n+1))``. The lower bound holds
    for any score distribution; the upper bound additionally assumes the
    calibration scores are distinct. Valid for alpha in [1/(n+1), 1].
    """
    if n < 1:
        raise UsageError(f"n must be >= 1, got {n}")
    if not (Fraction(1, n + 1) <= Fraction(alpha) and alpha <= 1):
        raise UsageError(
            f"alpha={alpha} is outside [1/(n+1), 1] = [{1 / (n + 1):.4g}, 1]"
        )
    return (1.0 - alpha, 1.0 - alpha + 1.0 / (n + 1))
