"""Seeded synthetic corpora for experiments, demos, and CI.

Two flavors: a scored corpus (labels plus noisy continuous scores,
almost surely tie-free) for exercising the calibration math at scale,
and a text corpus (random-word sentences with a verbatim reference
summary) for driving the full text pipeline offline.
"""

from __future__ import annotations

from typing import List, Tuple

import numpy as np

from .core import GroundTruth, ScoreVector
from .data import DatasetRecord
from .errors import UsageError

__all__ = ["make_scored_corpus", "make_text_corpus"]


def make_scored_corpus(
    n_docs: int = 2000,
    p: int = 40,
    seed: int = 0,
    positive_rate: float = 0.15,
    signal: float = 0.4,
) -> List[Tuple[ScoreVector, GroundTruth]]:
    """Exchangeable documents whose scores carry a label signal plus noise.

    score = signal * label + (1 - signal) * Uniform(0, 1), so scores lie
    in [0, 1], correlate with the labels, and are distinct with
    probability one. Every document gets at least one important
    sentence (a random index is forced when the Bernoulli draw comes up
    empty) so no record is dropped at calibration.
    """
    if not (0 <= signal < 1):
        raise UsageError(f"signal must be in [0, 1), got {signal}")
    if not (0 < positive_rate < 1):
        raise UsageError(f"positive_rate must be in (0, 1), got {positive_rate}")
    rng = np.random.default_rng(seed)
    corpus = []
    for d in range(n_docs):
        labels = rng.random(p) < positive_rate
        if not labels.any():
            labels[rng.integers(p)] = True
        scores = signal * labels + (1.0 - signal) * rng.random(p)
        doc_id = f"syn-{d:05d}"
        corpus.append(
            (
                ScoreVector(doc_id, tuple(scores.tolist())),
                GroundTruth(doc_id, tuple(np.flatnonzero(labels).tolist())),
            )
        )
    return corpus


_SYLLABLES = (
    "ka", "lo", "mi", "ra", "tu", "ve", "zo", "pa", "ni", "su",
    "del", "mar", "tin", "gor", "fen", "bal", "rus", "hem", "dor", "wyn",
)


def _word(rng: np.random.Generator) -> str:
    return "".join(rng.choice(_SYLLABLES) for _ in range(rng.integers(2, 4)))


def make_text_corpus(
    n_docs: int = 400,
    p_range: Tuple[int, int] = (8, 16),
    seed: int = 0,
    vocab_size: int = 300,
    words_per_sentence: Tuple[int, int] = (5, 10),
    important_range: Tuple[int, int] = (2, 4),
) -> List[DatasetRecord]:
    """Random-word documents whose reference summary quotes a few sentences.

    The reference summary is the verbatim concatenation of the chosen
    important sentences, so greedy reference-based labeling has a clean
    target, and the records carry the generating labels too for
    comparison.
    """
    rng = np.random.default_rng(seed)
    vocab = sorted({_word(rng) for _ in range(vocab_size * 2)})[:vocab_size]
    if len(vocab) < 50:
        raise UsageError("vocabulary collapsed; increase vocab_size")
    records = []
    for d in range(n_docs):
        p = int(rng.integers(p_range[0], p_range[1] + 1))
        sentences = []
        for _ in range(p):
            count = int(rng.integers(words_per_sentence[0], words_per_sentence[1] + 1))
            words = rng.choice(vocab, size=count, replace=True)
            sentences.append(" ".join(words.tolist()) + ".")
        n_imp = min(p, int(rng.integers(important_range[0], important_range[1] + 1)))
        important = np.sort(rng.choice(p, size=n_imp, replace=False))
        reference = " ".join(sentences[i] for i in important)
        labels = tuple(1 if i in set(important.tolist()) else 0 for i in range(p))
        records.append(
            DatasetRecord(
                id=f"text-{d:05d}",
                sentences=tuple(sentences),
                labels=labels,
                reference_summary=reference,
                label_source="synthetic",
            )
        )
    return records
