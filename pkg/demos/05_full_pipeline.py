#!/usr/bin/env python3
"""The whole pipeline in-process: score, label, calibrate, apply, evaluate.

Equivalent CLI run, given a dataset JSONL with reference summaries:

    cise score     --dataset docs.jsonl --scorer cosine_centrality \\
                   --embeddings hash:64 --out scored.jsonl
    cise label     --dataset scored.jsonl --sim rouge1_f --out labeled.jsonl
    cise calibrate --dataset labeled.jsonl --alpha 0.2 --beta 0.8 \\
                   --out artifact.json
    cise summarize --dataset labeled.jsonl --artifact artifact.json \\
                   --out summaries.jsonl
    cise evaluate  --dataset labeled.jsonl --summaries summaries.jsonl \\
                   --beta 0.8 --out report/
"""

from dataclasses import replace

from cise.core import CalibrationConfig, calibrate, coverage_bounds, summarize
from cise.data import (
    attach_labels,
    attach_scores,
    dataset_stats,
    record_document,
    record_scores,
    record_truth,
    records_to_corpus,
    split,
)
from cise.evaluation import evaluate_selections
from cise.labeling import SimilaritySpec, greedy_label
from cise.scoring import ScorerSpec, build_scorer, embed_with, hash_embed
from cise.synthetic import make_text_corpus

ALPHA, BETA = 0.2, 0.8

# Synthetic stand-in for a real dataset: documents plus reference summaries.
records = [replace(r, labels=None, label_source=None)
           for r in make_text_corpus(n_docs=300, seed=5)]
print("dataset:", dataset_stats(records))

# 1. score every sentence
scorer = build_scorer(
    ScorerSpec("cosine_centrality"),
    embedding_provider=embed_with(lambda s: hash_embed(s, 64)),
)
vectors = [scorer.score(record_document(r)) for r in records]
records = attach_scores(records, vectors, scorer_id=scorer.scorer_id)

# 2. derive labels from the reference summaries
sim = SimilaritySpec("rouge1_f", delta=0.0)
truths = [greedy_label(record_document(r), r.reference_summary, sim) for r in records]
records = attach_labels(records, truths, label_source=sim.label_source)

# 3. calibrate on 100 documents, hold the rest out
cal_records, test_records = split(records, cal_size=100, seed=3)
artifact = calibrate(
    records_to_corpus(cal_records),
    CalibrationConfig(alpha=ALPHA, beta=BETA),
    scorer_id=scorer.scorer_id,
)
print(f"\nthreshold q_hat = {artifact.threshold:.4f} from n = {artifact.n} docs")
lower, upper = coverage_bounds(ALPHA, artifact.n)
print(f"expected coverage in [{lower:.3f}, {upper:.3f})")

# 4. summarize the held-out documents
docs = [record_document(r) for r in test_records]
selections = [summarize(record_scores(r), artifact) for r in test_records]

# 5. evaluate
report = evaluate_selections(
    docs,
    selections,
    [record_truth(r) for r in test_records],
    beta=BETA,
    artifact=artifact,
    per_doc_scores=[(r.scores, r.labels) for r in test_records],
)
print(f"\nheld-out documents: {report.n_test}")
print(f"empirical coverage: {report.empirical_coverage:.3f}")
print(f"mean recall:        {report.mean_recall:.3f}")
print(f"conciseness:        {report.conciseness:.3f}")
print(f"scorer AUPRC:       {report.sample_auprc:.3f}")

example = next(r for r in test_records if r.labels and sum(r.labels))
sel = summarize(record_scores(example), artifact)
print(f"\nexample summary for {example.id} "
      f"({len(sel.retained)} of {example.p} sentences kept):")
print(" ", sel.render(record_document(example))[:160], "...")
