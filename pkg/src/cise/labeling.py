"""Ground-truth construction from reference summaries.

When a dataset provides an abstractive reference summary instead of
sentence-level labels, important sentences are recovered greedily: rank
sentences by similarity to the reference, then walk the ranking once,
keeping each sentence whose addition improves the combined summary's
similarity by more than ``delta``.

Similarity is pluggable: ROUGE-1/2 F1, ROUGE-L F1, or embedding cosine.
The ROUGE tokenizer is deliberately plain — lowercase, punctuation
stripped, whitespace split, no stemming or stopword removal.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .core import Document, GroundTruth
from .errors import UsageError

__all__ = [
    "SimilaritySpec",
    "tokenize",
    "rouge_n",
    "rouge_l",
    "greedy_label",
    "greedy_label_steps",
    "combination_mode",
    "GreedyStep",
    "SIMILARITY_KINDS",
]

SIMILARITY_KINDS = ("embedding_cosine", "rouge1_f", "rouge2_f", "rougeL_f")

_PUNCT = re.compile(r"[^\w\s]")


@dataclass(frozen=True)
class SimilaritySpec:
    """Which similarity drives greedy labeling, and the improvement bar."""

    kind: str
    delta: float = 0.0

    def __post_init__(self):
        if self.kind not in SIMILARITY_KINDS:
            raise UsageError(
                f"unknown similarity kind {self.kind!r}; expected one of "
                f"{SIMILARITY_KINDS}"
            )
        if math.isnan(self.delta):
            raise UsageError("delta must not be NaN")

    @property
    def label_source(self) -> str:
        return f"greedy:{self.kind}:delta={self.delta:g}"


def tokenize(text: str) -> List[str]:
    """Lowercase, strip punctuation, split on whitespace."""
    return _PUNCT.sub("", text.lower()).split()


class RougeScore(NamedTuple):
    precision: float
    recall: float
    f1: float


_ZERO = RougeScore(0.0, 0.0, 0.0)


def _prf(overlap: int, n_cand: int, n_ref: int) -> RougeScore:
    if overlap == 0 or n_cand == 0 or n_ref == 0:
        return _ZERO
    precision = overlap / n_cand
    recall = overlap / n_ref
    return RougeScore(precision, recall, 2 * precision * recall / (precision + recall))


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: str, reference: str, n: int) -> RougeScore:
    """Clipped n-gram overlap precision/recall/F1 (n = 1 or 2).

    Overlap counts are clipped per n-gram (min of the two multiplicities)
    and denominators count n-grams with multiplicity. Either side having
    no n-grams yields all zeros.
    """
    if n not in (1, 2):
        raise UsageError(f"rouge_n supports n in {{1, 2}}, got {n}")
    cand = _ngrams(tokenize(candidate), n)
    ref = _ngrams(tokenize(reference), n)
    overlap = sum(min(count, ref[gram]) for gram, count in cand.items())
    return _prf(overlap, sum(cand.values()), sum(ref.values()))


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    # Rolling single-row DP over token sequences.
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for tok_a in a:
        cur = [0] * (len(b) + 1)
        for j, tok_b in enumerate(b, start=1):
            if tok_a == tok_b:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> RougeScore:
    """Longest-common-subsequence precision/recall/F1 over tokens."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    return _prf(_lcs_length(cand, ref), len(cand), len(ref))


class GreedyStep(NamedTuple):
    """One visit of the greedy pass, in visiting order."""

    index: int           # sentence index in the document
    single_score: float  # similarity of the sentence alone to the reference
    delta: float         # improvement the sentence would add
    accepted: bool
    running_score: float  # combined similarity after this step


def _normalized_mean(rows: np.ndarray) -> np.ndarray:
    mean = rows.mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm == 0:
        return mean
    return mean / norm


def _cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def combination_mode(embed_fn) -> str:
    """How the combined-summary vector is formed for embedding_cosine."""
    return "concat_embed" if embed_fn is not None else "mean_of_members"


def _make_value_fn(
    doc: Document,
    reference_summary: str,
    sim: SimilaritySpec,
    embeddings: Optional[np.ndarray],
    embed_fn: Optional[Callable[[str], np.ndarray]],
    reference_embedding: Optional[np.ndarray],
) -> Callable[[Tuple[int, ...]], float]:
    """Build V(subset; reference) for the chosen similarity.

    For embedding cosine the combined-summary vector is recomputed by
    embedding the concatenated text when ``embed_fn`` is available;
    otherwise it is approximated by the L2-normalized mean of the member
    sentence vectors, which requires precomputed ``embeddings`` plus a
    ``reference_embedding``. The two modes differ, so callers should
    record which one ran (see :func:`combination_mode`).
    """
    if sim.kind in ("rouge1_f", "rouge2_f", "rougeL_f"):

        def text_value(subset: Tuple[int, ...]) -> float:
            if not subset:
                return 0.0
            candidate = " ".join(doc.sentences[i] for i in sorted(subset))
            if sim.kind == "rouge1_f":
                return rouge_n(candidate, reference_summary, 1).f1
            if sim.kind == "rouge2_f":
                return rouge_n(candidate, reference_summary, 2).f1
            return rouge_l(candidate, reference_summary).f1

        return text_value

    if embeddings is not None:
        matrix = np.asarray(embeddings, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != doc.p:
            raise UsageError(
                f"embedding matrix shape {matrix.shape} does not match "
                f"document {doc.id!r} with {doc.p} sentences"
            )
    elif embed_fn is not None:
        matrix = np.stack(
            [np.asarray(embed_fn(s), dtype=np.float64) for s in doc.sentences]
        )
    else:
        raise UsageError(
            "embedding_cosine labeling needs sentence embeddings or an embedder"
        )

    if reference_embedding is not None:
        reference_vec = np.asarray(reference_embedding, dtype=np.float64)
    elif embed_fn is not None:
        reference_vec = np.asarray(embed_fn(reference_summary), dtype=np.float64)
    else:
        raise UsageError(
            "embedding_cosine labeling needs an embedder or a precomputed "
            "reference-summary embedding"
        )

    if embed_fn is not None:

        def concat_value(subset: Tuple[int, ...]) -> float:
            if not subset:
                return 0.0
            combined = " ".join(doc.sentences[i] for i in sorted(subset))
            return _cosine(np.asarray(embed_fn(combined), dtype=np.float64), reference_vec)

        return concat_value

    def mean_value(subset: Tuple[int, ...]) -> float:
        if not subset:
            return 0.0
        return _cosine(_normalized_mean(matrix[sorted(subset)]), reference_vec)

    return mean_value


def greedy_label_steps(
    doc: Document,
    reference_summary: str,
    sim: SimilaritySpec,
    embeddings: Optional[np.ndarray] = None,
    embed_fn: Optional[Callable[[str], np.ndarray]] = None,
    reference_embedding: Optional[np.ndarray] = None,
) -> Tuple[GroundTruth, List[GreedyStep]]:
    """Greedy labeling with its full step trace.

    Sentences are visited in descending order of standalone similarity
    to the reference (ties broken by original index, so the pass is
    deterministic), and kept iff the combined similarity improves by
    strictly more than ``sim.delta``. The running similarity therefore
    never decreases, and ``delta = +inf`` labels nothing.
    """
    value = _make_value_fn(
        doc, reference_summary, sim, embeddings, embed_fn, reference_embedding
    )
    singles = [value((i,)) for i in range(doc.p)]
    order = sorted(range(doc.p), key=lambda i: (-singles[i], i))

    current: Tuple[int, ...] = ()
    v_current = 0.0
    steps: List[GreedyStep] = []
    for i in order:
        gain = value(current + (i,)) - v_current
        accepted = gain > sim.delta
        if accepted:
            current = current + (i,)
            v_current = v_current + gain
        steps.append(GreedyStep(i, singles[i], gain, accepted, v_current))
    return GroundTruth(doc.id, current), steps


def greedy_label(
    doc: Document,
    reference_summary: str,
    sim: SimilaritySpec,
    embeddings: Optional[np.ndarray] = None,
    embed_fn: Optional[Callable[[str], np.ndarray]] = None,
    reference_embedding: Optional[np.ndarray] = None,
) -> GroundTruth:
    """Label the sentences whose greedy addition improves similarity by > delta."""
    truth, _ = greedy_label_steps(
        doc, reference_summary, sim, embeddings, embed_fn, reference_embedding
    )
    return truth
