#!/usr/bin/env python3
"""Walk through calibrated sentence filtering on a tiny worked example.

We fabricate ten labeled "documents" (score vectors plus the indices of
their important sentences), calibrate a threshold at alpha=0.2 and
beta=0.8, and apply it to a fresh document. Along the way we print the
per-document conformal scores so the order-statistic step is visible.
"""

import numpy as np

from cise import (
    CalibrationConfig,
    GroundTruth,
    ScoreVector,
    calibrate,
    conformal_score,
    coverage_bounds,
    filter_at,
    recall,
    summarize,
)

rng = np.random.default_rng(42)

ALPHA, BETA = 0.2, 0.8

# --- a labeled calibration sample -------------------------------------------
# Each record: per-sentence importance scores and which sentences matter.
corpus = []
for i in range(10):
    p = int(rng.integers(6, 12))
    labels = rng.random(p) < 0.3
    if not labels.any():
        labels[0] = True
    scores = np.round(0.5 * labels + 0.5 * rng.random(p), 3)
    doc_id = f"cal-{i}"
    corpus.append(
        (
            ScoreVector(doc_id, tuple(scores.tolist())),
            GroundTruth(doc_id, tuple(np.flatnonzero(labels).tolist())),
        )
    )

print(f"calibrating at alpha={ALPHA} (error rate), beta={BETA} (target recall)\n")
print("per-document conformal scores (largest threshold that still keeps")
print(f"at least {BETA:.0%} of that document's important sentences):")
for vec, truth in corpus:
    s = conformal_score(vec, truth, BETA)
    print(f"  {vec.doc_id}: S = {s:.3f}   (important: {list(truth.important)})")

artifact = calibrate(corpus, CalibrationConfig(alpha=ALPHA, beta=BETA))
print(f"\ncalibrated threshold q_hat = {artifact.threshold:.3f}")
print("  -> the floor(alpha*(n+1)) = floor(0.2*11) = 2nd smallest score above")

lower, upper = coverage_bounds(ALPHA, artifact.n)
print(f"\nguarantee for exchangeable test documents (n={artifact.n}):")
print(f"  P[recall >= {BETA}] lies in [{lower:.3f}, {upper:.3f})")

# --- apply to a new document --------------------------------------------------
test_scores = ScoreVector(
    "test-doc", (0.91, 0.12, 0.55, 0.78, 0.05, 0.63, 0.34, 0.88)
)
test_truth = GroundTruth("test-doc", (0, 3, 5))

selection = summarize(test_scores, artifact)
print(f"\nnew document scores: {[f'{s:.2f}' for s in test_scores.scores]}")
print(f"kept sentence indices: {list(selection.retained)}")
print(f"achieved recall on this document: {recall(selection, test_truth):.2f}")
print(f"fraction removed: {1 - len(selection.retained) / test_scores.p:.2f}")

# The filtration is nested: a higher threshold only ever removes more.
print("\nnesting sanity check across thresholds:")
for q in (0.0, artifact.threshold, 0.9):
    kept = filter_at(test_scores, q).retained
    print(f"  q={q:.3f} keeps {len(kept)} of {test_scores.p}")
