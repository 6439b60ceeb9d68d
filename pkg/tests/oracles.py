"""Independent oracles and fixture generators shared across test modules.

Everything here is deliberately plain-Python (sets, loops, dicts) so it
cannot share a bug with the numpy implementations it checks.
"""

import math

import numpy as np


def brute_force_score(scores, important, beta):
    """Max q over the breakpoint set {scores} U {0} with recall(F_q) >= beta."""
    m = len(important)
    imp = set(important)
    best = None
    for q in set(scores) | {0.0}:
        kept = {i for i, s in enumerate(scores) if s >= q}
        if len(kept & imp) / m >= beta:
            if best is None or q > best:
                best = q
    return best


def brute_force_threshold(corpus_scores, alpha, beta):
    """Largest pooled candidate q with enough records meeting recall beta.

    Required count is n - floor(alpha*(n+1)) + 1 out of n records.
    """
    n = len(corpus_scores)
    k = math.floor(alpha * (n + 1))
    need = n - k + 1
    pooled = {0.0}
    for scores, _ in corpus_scores:
        pooled.update(scores)
    best = None
    for q in pooled:
        ok = 0
        for scores, important in corpus_scores:
            kept = {i for i, s in enumerate(scores) if s >= q}
            if len(kept & set(important)) / len(important) >= beta:
                ok += 1
        if ok >= need and (best is None or q > best):
            best = q
    return best


def random_instance(rng, max_p=30, tie_prob=0.35):
    """(scores, important, beta) with deliberate tie and boundary coverage."""
    p = int(rng.integers(1, max_p + 1))
    if rng.random() < tie_prob:
        pool = rng.random(max(1, p // 3 + 1))
        scores = rng.choice(pool, size=p, replace=True)
    else:
        scores = rng.random(p)
    m = int(rng.integers(1, p + 1))
    important = sorted(rng.choice(p, size=m, replace=False).tolist())
    roll = rng.random()
    if roll < 0.25:
        beta = 1.0
    elif roll < 0.55:
        beta = int(rng.integers(1, m + 1)) / m  # exact boundary fractions
    else:
        beta = float(rng.uniform(0.01, 1.0))
    return [float(s) for s in scores], important, beta


# Hand-computed ROUGE fixtures. Each row: (candidate, reference,
# n or "L", (precision, recall, f1)).
ROUGE_FIXTURES = [
    # ROUGE-1
    ("the cat sat", "the cat", 1, (2 / 3, 1.0, 0.8)),
    ("a b c", "a b c", 1, (1.0, 1.0, 1.0)),
    ("a b", "c d", 1, (0.0, 0.0, 0.0)),
    ("a a b", "a b b", 1, (2 / 3, 2 / 3, 2 / 3)),
    ("a a a", "a", 1, (1 / 3, 1.0, 0.5)),
    ("", "a", 1, (0.0, 0.0, 0.0)),
    # ROUGE-2
    ("the cat sat down", "the cat sat", 2, (2 / 3, 1.0, 0.8)),
    ("a b a b", "a b", 2, (1 / 3, 1.0, 0.5)),
    ("a", "a b", 2, (0.0, 0.0, 0.0)),
    ("x y z", "x y z", 2, (1.0, 1.0, 1.0)),
    # ROUGE-L
    ("a b c", "a b c", "L", (1.0, 1.0, 1.0)),
    ("a b c d", "a c d b", "L", (3 / 4, 3 / 4, 3 / 4)),
    ("x a y b z", "a b", "L", (2 / 5, 1.0, 4 / 7)),
    ("The CAT, sat!", "the cat sat", "L", (1.0, 1.0, 1.0)),
    ("", "a b", "L", (0.0, 0.0, 0.0)),
]


def lexrank_damped_matrix(embeddings, threshold=0.1, damping=0.85):
    """The random-walk matrix, rebuilt independently for oracle solves."""
    emb = np.asarray(embeddings, dtype=np.float64)
    unit = emb / np.linalg.norm(emb, axis=1, keepdims=True)
    sim = np.clip(unit @ unit.T, 0.0, 1.0)
    np.fill_diagonal(sim, 0.0)
    adjacency = np.where(sim >= threshold, sim, 0.0)
    p = len(emb)
    transition = np.full((p, p), 1.0 / p)
    rows = adjacency.sum(axis=1)
    for i in range(p):
        if rows[i] > 0:
            transition[i] = adjacency[i] / rows[i]
    return (1.0 - damping) / p + damping * transition


def stationary_by_eigensolve(matrix):
    """Left eigenvector for eigenvalue 1, via a dense eigendecomposition."""
    values, vectors = np.linalg.eig(matrix.T)
    idx = int(np.argmin(np.abs(values - 1.0)))
    pi = np.real(vectors[:, idx])
    return pi / pi.sum()
