"""Graph-based sentence importance scorers over sentence embeddings.

Each scorer maps a document's sentence embeddings (rows of a 2-D float
array, one per sentence) to a nonnegative score per sentence. Negative
cosine similarities are clamped to zero in every graph construction so
scores stay nonnegative and a zero threshold always means retain-all.

Embeddings are plain 1-D numpy arrays; validation (finite entries,
nonzero norm, consistent dimension) happens at the point of use.
Aggregation over neighbors is the mean, not the sum — with variable
document lengths the two produce different filtrations, so the choice
is recorded in each scorer id.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .core import Document, ScoreVector
from .errors import UsageError

__all__ = [
    "ScorerSpec",
    "cosine_similarity",
    "cosine_centrality_scores",
    "sentence_centrality_scores",
    "gusum_scores",
    "lexrank_scores",
    "hash_embed",
    "EmbeddingScorer",
    "build_scorer",
    "SCORER_KINDS",
]

LEXRANK_NOT_CONVERGED = "lexrank_not_converged"


def _as_unit_rows(embeddings) -> np.ndarray:
    """Stack embeddings into a (p, dim) matrix of unit rows.

    Rejects empty input, ragged dimensions, non-finite entries, and
    zero vectors (cosine is undefined for them).
    """
    try:
        mat = np.asarray(embeddings, dtype=np.float64)
    except ValueError as exc:
        raise UsageError(f"embeddings have inconsistent dimensions: {exc}") from exc
    if mat.ndim == 1:
        mat = mat[None, :]
    if mat.ndim != 2 or mat.shape[0] < 1 or mat.shape[1] < 1:
        raise UsageError(f"expected a (p, dim) embedding matrix, got shape {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise UsageError("embeddings contain non-finite values")
    norms = np.linalg.norm(mat, axis=1)
    if np.any(norms == 0):
        bad = int(np.flatnonzero(norms == 0)[0])
        raise UsageError(f"embedding {bad} is the zero vector")
    return mat / norms[:, None]


def cosine_similarity(u, v) -> float:
    """Cosine of the angle between two embeddings, in [-1, 1]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise UsageError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise UsageError("cosine similarity is undefined for the zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def _clamped_similarity_matrix(unit: np.ndarray) -> np.ndarray:
    sim = np.clip(unit @ unit.T, 0.0, 1.0)
    np.fill_diagonal(sim, 0.0)
    return sim


def cosine_centrality_scores(embeddings, doc_id: str = "") -> ScoreVector:
    """Mean clamped cosine similarity to every other sentence.

    A sentence similar to much of the document scores high. Scores lie
    in [0, 1]; a single-sentence document scores [1.0] by convention
    (it is trivially central).
    """
    unit = _as_unit_rows(embeddings)
    p = unit.shape[0]
    if p == 1:
        return ScoreVector(doc_id, (1.0,))
    sim = _clamped_similarity_matrix(unit)
    scores = sim.sum(axis=1) / (p - 1)
    return ScoreVector(doc_id, tuple(scores.tolist()))


def sentence_centrality_scores(embeddings, doc_id: str = "") -> ScoreVector:
    """Mean clamped cosine similarity to *later* sentences only.

    Directed forward variant: early sentences that the rest of the
    document echoes score high; the last sentence (and a one-sentence
    document) scores 0 since nothing follows it.
    """
    unit = _as_unit_rows(embeddings)
    p = unit.shape[0]
    if p == 1:
        return ScoreVector(doc_id, (0.0,))
    sim = _clamped_similarity_matrix(unit)
    scores = np.zeros(p)
    for i in range(p - 1):
        scores[i] = sim[i, i + 1 :].sum() / (p - 1 - i)
    return ScoreVector(doc_id, tuple(scores.tolist()))


def gusum_scores(
    embeddings,
    sentences: Sequence[str],
    w_pos: float = 0.5,
    w_len: float = 0.5,
    doc_id: str = "",
) -> ScoreVector:
    """Cosine centrality reweighted by position and length features.

    score_i = centrality_i * (1 + w_pos*(1 - i/p) + w_len*(len_i/max_len))
    with token counts as lengths. Zero feature weights recover plain
    cosine centrality exactly. Results are clamped at zero so negative
    feature weights cannot produce negative scores.
    """
    unit = _as_unit_rows(embeddings)
    p = unit.shape[0]
    if len(sentences) != p:
        raise UsageError(f"{p} embeddings but {len(sentences)} sentences")
    centrality = np.asarray(cosine_centrality_scores(embeddings, doc_id).scores)
    tokens = np.array([len(s.split()) for s in sentences], dtype=np.float64)
    max_tokens = tokens.max()
    length_feature = tokens / max_tokens if max_tokens > 0 else np.zeros(p)
    position_feature = 1.0 - np.arange(p) / p
    features = 1.0 + w_pos * position_feature + w_len * length_feature
    scores = np.maximum(centrality * features, 0.0)
    return ScoreVector(doc_id, tuple(scores.tolist()))


def lexrank_scores(
    embeddings,
    similarity_threshold: float = 0.1,
    damping: float = 0.85,
    epsilon: float = 1e-6,
    max_iter: int = 100,
    doc_id: str = "",
) -> ScoreVector:
    """Stationary weight of each sentence in a damped random walk.

    The walk moves over the similarity graph after weak connections
    (clamped cosine below ``similarity_threshold``) are cut; edge weight
    is the surviving similarity. Rows are normalized to a stochastic
    matrix, with isolated sentences jumping uniformly, and the damped
    chain mixes toward a unique stationary vector found by power
    iteration. Scores are the stationary probabilities scaled by p, so
    a featureless (fully disconnected or fully symmetric) document
    scores 1.0 everywhere.

    Hitting ``max_iter`` before the L1 residual drops below ``epsilon``
    is not an error: the best iterate is returned with a
    ``lexrank_not_converged`` flag.
    """
    if not (0 <= damping <= 1):
        raise UsageError(f"damping must be in [0, 1], got {damping}")
    if epsilon <= 0 or max_iter < 1:
        raise UsageError("epsilon must be > 0 and max_iter >= 1")
    unit = _as_unit_rows(embeddings)
    p = unit.shape[0]
    if p == 1:
        return ScoreVector(doc_id, (1.0,))

    sim = _clamped_similarity_matrix(unit)
    adjacency = np.where(sim >= similarity_threshold, sim, 0.0)
    row_sums = adjacency.sum(axis=1)
    transition = np.full((p, p), 1.0 / p)
    connected = row_sums > 0
    transition[connected] = adjacency[connected] / row_sums[connected, None]
    damped = (1.0 - damping) / p + damping * transition

    pi = np.full(p, 1.0 / p)
    converged = False
    for _ in range(max_iter):
        nxt = pi @ damped
        if np.abs(nxt - pi).sum() < epsilon:
            pi = nxt
            converged = True
            break
        pi = nxt

    flags = () if converged else (LEXRANK_NOT_CONVERGED,)
    return ScoreVector(doc_id, tuple((pi * p).tolist()), flags)


def hash_embed(sentence: str, dim: int = 64) -> np.ndarray:
    """Deterministic offline embedding: hashed token counts, L2-normalized.

    Tokens are lowercased whitespace splits, bucketed by CRC32 (stable
    across runs and platforms, unlike the builtin salted hash). An empty
    or whitespace-only sentence maps to the unit vector on bucket 0 — a
    documented degenerate so downstream cosine math never sees a zero
    vector. Intended for tests, demos, and CI; not a semantic model.
    """
    if dim < 8:
        raise UsageError(f"hash embedding dim must be >= 8, got {dim}")
    vec = np.zeros(dim, dtype=np.float64)
    tokens = sentence.lower().split()
    if not tokens:
        vec[0] = 1.0
        return vec
    for tok in tokens:
        vec[zlib.crc32(tok.encode("utf-8")) % dim] += 1.0
    return vec / np.linalg.norm(vec)


def hash_bucket(token: str, dim: int) -> int:
    """Bucket index hash_embed assigns to a token (exposed for tests)."""
    return zlib.crc32(token.encode("utf-8")) % dim


# --- scorer registry -------------------------------------------------------

EMBEDDING_KINDS = ("cosine_centrality", "sentence_centrality", "gusum", "lexrank")
LLM_KINDS = ("llm_float", "llm_binary")
SCORER_KINDS = EMBEDDING_KINDS + LLM_KINDS

_PARAM_NAMES = {
    "cosine_centrality": set(),
    "sentence_centrality": set(),
    "gusum": {"w_pos", "w_len"},
    "lexrank": {"similarity_threshold", "damping", "epsilon", "max_iter"},
    "llm_float": set(),
    "llm_binary": set(),
}


@dataclass(frozen=True)
class ScorerSpec:
    """A scorer kind plus its parameters; round-trips through JSON."""

    kind: str
    params: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SCORER_KINDS:
            raise UsageError(
                f"unknown scorer kind {self.kind!r}; expected one of {SCORER_KINDS}"
            )
        unknown = set(self.params) - _PARAM_NAMES[self.kind]
        if unknown:
            raise UsageError(
                f"scorer {self.kind!r} does not accept parameters {sorted(unknown)}"
            )

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "ScorerSpec":
        return cls(kind=d["kind"], params=dict(d.get("params", {})))


def _scorer_id(spec: ScorerSpec) -> str:
    if spec.kind == "cosine_centrality":
        return "cosine_centrality:mean"
    if spec.kind == "sentence_centrality":
        return "sentence_centrality:mean"
    if spec.kind == "gusum":
        w_pos = spec.params.get("w_pos", 0.5)
        w_len = spec.params.get("w_len", 0.5)
        return f"gusum:mean:wpos={w_pos:g}:wlen={w_len:g}"
    if spec.kind == "lexrank":
        thr = spec.params.get("similarity_threshold", 0.1)
        damping = spec.params.get("damping", 0.85)
        return f"lexrank:thr={thr:g}:damp={damping:g}"
    return spec.kind


class EmbeddingScorer:
    """Scores documents by applying a graph scorer to their embeddings.

    ``embedding_provider`` maps a Document to its (p, dim) embedding
    matrix — typically a store lookup or a per-sentence embedder.
    """

    def __init__(
        self,
        spec: ScorerSpec,
        embedding_provider: Callable[[Document], np.ndarray],
    ):
        if spec.kind not in EMBEDDING_KINDS:
            raise UsageError(f"{spec.kind!r} is not an embedding scorer")
        self.spec = spec
        self.embedding_provider = embedding_provider
        self.scorer_id = _scorer_id(spec)

    def score(self, doc: Document) -> ScoreVector:
        emb = self.embedding_provider(doc)
        kind, params = self.spec.kind, self.spec.params
        if kind == "cosine_centrality":
            return cosine_centrality_scores(emb, doc_id=doc.id)
        if kind == "sentence_centrality":
            return sentence_centrality_scores(emb, doc_id=doc.id)
        if kind == "gusum":
            return gusum_scores(
                emb,
                doc.sentences,
                w_pos=params.get("w_pos", 0.5),
                w_len=params.get("w_len", 0.5),
                doc_id=doc.id,
            )
        return lexrank_scores(
            emb,
            similarity_threshold=params.get("similarity_threshold", 0.1),
            damping=params.get("damping", 0.85),
            epsilon=params.get("epsilon", 1e-6),
            max_iter=int(params.get("max_iter", 100)),
            doc_id=doc.id,
        )


def embed_with(embed_fn: Callable[[str], np.ndarray]):
    """Lift a per-sentence embedder into a document embedding provider."""

    def provider(doc: Document) -> np.ndarray:
        return np.stack([np.asarray(embed_fn(s), dtype=np.float64) for s in doc.sentences])

    return provider


def build_scorer(
    spec: ScorerSpec,
    embedding_provider: Optional[Callable[[Document], np.ndarray]] = None,
    llm_client=None,
):
    """Construct a scorer object with ``.score(doc)`` and ``.scorer_id``."""
    if spec.kind in EMBEDDING_KINDS:
        if embedding_provider is None:
            raise UsageError(f"scorer {spec.kind!r} needs an embedding provider")
        return EmbeddingScorer(spec, embedding_provider)
    if llm_client is None:
        raise UsageError(f"scorer {spec.kind!r} needs a configured LLM client")
    from .llm import LlmScorer

    return LlmScorer(llm_client, binary=spec.kind == "llm_binary")
