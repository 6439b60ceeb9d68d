"""Metrics and the repeated-random-split coverage experiment.

Coverage is the fraction of documents whose summary kept at least a
fraction beta of the important sentences; conciseness is the fraction of
sentences removed; ranking quality of a scorer is measured by average
precision against the binary importance labels.

The experiment runner re-calibrates on a fresh random split many times
and averages, which is how a finite-sample coverage statement is checked
empirically: the single-split coverage is a random variable, and only
its mean is pinned between the theoretical bounds.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    CalibrationArtifact,
    Document,
    GroundTruth,
    ScoreVector,
    SummarySelection,
    conformal_score,
    coverage_bounds,
    recall,
)
from .errors import UsageError

__all__ = [
    "EvalReport",
    "ExperimentGrid",
    "ExperimentCell",
    "ExperimentResult",
    "empirical_coverage",
    "conciseness",
    "auprc",
    "sample_averaged_auprc",
    "run_coverage_experiment",
    "baseline_llm_binary_eval",
    "evaluate_selections",
]


def empirical_coverage(
    selections: Sequence[SummarySelection],
    truths: Sequence[GroundTruth],
    beta: float,
) -> float:
    """Fraction of documents with recall >= beta.

    Documents with empty ground truth count as covered (their recall is
    1 by convention); callers wanting them broken out separately should
    use :func:`evaluate_selections`.
    """
    if len(selections) != len(truths):
        raise UsageError(
            f"{len(selections)} selections but {len(truths)} ground truths"
        )
    if not selections:
        raise UsageError("empirical coverage needs at least one document")
    covered = sum(1 for s, t in zip(selections, truths) if recall(s, t) >= beta)
    return covered / len(selections)


def conciseness(
    selections: Sequence[SummarySelection], docs: Sequence[Document]
) -> float:
    """Mean fraction of sentences removed; 0 means full copies."""
    if len(selections) != len(docs):
        raise UsageError(f"{len(selections)} selections but {len(docs)} documents")
    if not selections:
        raise UsageError("conciseness needs at least one document")
    total = 0.0
    for sel, doc in zip(selections, docs):
        if sel.doc_id != doc.id:
            raise UsageError(f"selection {sel.doc_id!r} does not match {doc.id!r}")
        total += (doc.p - len(sel.retained)) / doc.p
    return total / len(docs)


def auprc(scores: Sequence[float], labels: Sequence[int]) -> Optional[float]:
    """Average precision of the score ranking against binary labels.

    Tied scores are treated as one group (no order is pretended within a
    tie): walking groups in descending score order, each group adds
    precision-so-far times the fraction of all positives it contains.
    All scores tied therefore gives exactly the positive rate. Returns
    None when there are no positive labels (undefined; excluded from
    corpus averages).
    """
    if len(scores) != len(labels):
        raise UsageError(f"{len(scores)} scores but {len(labels)} labels")
    if not scores:
        raise UsageError("auprc needs at least one item")
    y = np.asarray(labels)
    if not np.isin(y, (0, 1)).all():
        raise UsageError("labels must be 0/1")
    total_pos = int(y.sum())
    if total_pos == 0:
        return None
    s = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]

    ap = 0.0
    seen = 0
    hits = 0
    i = 0
    n = len(s)
    while i < n:
        j = i
        while j < n and s[j] == s[i]:
            j += 1
        group_pos = int(y[i:j].sum())
        seen += j - i
        hits += group_pos
        if group_pos:
            ap += (hits / seen) * (group_pos / total_pos)
        i = j
    return ap


def sample_averaged_auprc(
    per_doc: Sequence[Tuple[Sequence[float], Sequence[int]]],
) -> float:
    """Mean of per-document average precision over a corpus.

    Documents with no positive labels are skipped (their AP is
    undefined); if every document is all-negative there is nothing to
    average and that is an error.
    """
    value, _, _ = corpus_auprc(per_doc)
    return value


def corpus_auprc(
    per_doc: Sequence[Tuple[Sequence[float], Sequence[int]]],
) -> Tuple[float, int, int]:
    """(mean AP, documents averaged, all-negative documents skipped)."""
    if not per_doc:
        raise UsageError("corpus AUPRC needs at least one document")
    values = []
    skipped = 0
    for scores, labels in per_doc:
        ap = auprc(scores, labels)
        if ap is None:
            skipped += 1
        else:
            values.append(ap)
    if not values:
        raise UsageError("every document has all-negative labels; AUPRC undefined")
    return float(np.mean(values)), len(values), skipped


@dataclass
class EvalReport:
    """Aggregate metrics for one (dataset, threshold, beta) evaluation."""

    alpha: Optional[float]
    beta: float
    scorer_id: str
    n_cal: Optional[int]
    n_test: int
    empirical_coverage: float
    mean_recall: float
    conciseness: float
    sample_auprc: Optional[float]
    n_empty_truth: int = 0
    n_auprc_skipped: int = 0
    per_doc: List[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "scorer_id": self.scorer_id,
            "n_cal": self.n_cal,
            "n_test": self.n_test,
            "empirical_coverage": self.empirical_coverage,
            "mean_recall": self.mean_recall,
            "conciseness": self.conciseness,
            "sample_auprc": self.sample_auprc,
            "n_empty_truth": self.n_empty_truth,
            "n_auprc_skipped": self.n_auprc_skipped,
        }


def evaluate_selections(
    docs: Sequence[Document],
    selections: Sequence[SummarySelection],
    truths: Sequence[GroundTruth],
    beta: float,
    scorer_id: str = "",
    artifact: Optional[CalibrationArtifact] = None,
    per_doc_scores: Optional[Sequence[Tuple[Sequence[float], Sequence[int]]]] = None,
) -> EvalReport:
    """Full report over aligned documents, selections, and ground truths."""
    if not (len(docs) == len(selections) == len(truths)):
        raise UsageError("docs, selections, and truths must be aligned")
    recalls = [recall(s, t) for s, t in zip(selections, truths)]
    coverage = sum(1 for r in recalls if r >= beta) / len(recalls)
    sample_ap: Optional[float] = None
    n_skipped = 0
    if per_doc_scores:
        try:
            sample_ap, _, n_skipped = corpus_auprc(per_doc_scores)
        except UsageError:
            sample_ap = None
    rows = [
        {
            "id": doc.id,
            "p": doc.p,
            "kept": len(sel.retained),
            "recall": r,
            "covered": r >= beta,
            "empty_truth": not truth.important,
        }
        for doc, sel, truth, r in zip(docs, selections, truths, recalls)
    ]
    return EvalReport(
        alpha=artifact.alpha if artifact else None,
        beta=beta,
        scorer_id=scorer_id or (artifact.scorer_id if artifact else ""),
        n_cal=artifact.n if artifact else None,
        n_test=len(docs),
        empirical_coverage=coverage,
        mean_recall=float(np.mean(recalls)),
        conciseness=conciseness(selections, docs),
        sample_auprc=sample_ap,
        n_empty_truth=sum(1 for t in truths if not t.important),
        n_auprc_skipped=n_skipped,
        per_doc=rows,
    )


@dataclass(frozen=True)
class ExperimentGrid:
    """The sweep: which (alpha, beta) cells, how many splits, split sizes."""

    alphas: Tuple[float, ...]
    betas: Tuple[float, ...]
    n_splits: int = 400
    cal_size: int = 100
    seed: int = 0
    allow_retain_all: bool = False

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if not self.alphas or not self.betas:
            raise UsageError("grid needs at least one alpha and one beta")
        if self.n_splits < 1 or self.cal_size < 1:
            raise UsageError("n_splits and cal_size must be >= 1")
        for b in self.betas:
            if not (0 < b <= 1):
                raise UsageError(f"beta must be in (0, 1], got {b}")
        for a in self.alphas:
            if not (0 < a <= 1):
                raise UsageError(f"alpha must be in (0, 1], got {a}")
            if not self.allow_retain_all and Fraction(a) < Fraction(
                1, self.cal_size + 1
            ):
                raise UsageError(
                    f"alpha={a} is below 1/(cal_size+1); pass allow_retain_all=True "
                    "to accept retain-all cells"
                )


@dataclass
class ExperimentCell:
    """Aggregates for one (alpha, beta) cell across all splits."""

    alpha: float
    beta: float
    mean_coverage: float
    std_coverage: float
    lower_bound: float
    upper_bound: float
    mean_recall: float
    mean_conciseness: float
    tie_fraction: float

    def to_dict(self) -> dict:
        return self.__dict__.copy()


@dataclass
class ExperimentResult:
    grid: ExperimentGrid
    scorer_id: str
    cells: List[ExperimentCell]
    # rows[i] = (alpha, beta, split, coverage, recall, conciseness)
    rows: List[Tuple[float, float, int, float, float, float]]
    n_docs: int
    n_empty_truth: int
    input_sha256: str = ""

    def cell(self, alpha: float, beta: float) -> ExperimentCell:
        for c in self.cells:
            if c.alpha == alpha and c.beta == beta:
                return c
        raise UsageError(f"no cell for alpha={alpha}, beta={beta}")

    def write(self, out_dir) -> None:
        """Emit splits.csv, summary.json, and metadata.json under out_dir."""
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, "splits.csv")
        with open(csv_path + ".tmp", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["alpha", "beta", "split", "coverage", "recall", "conciseness"]
            )
            for row in self.rows:
                writer.writerow(row)
        os.replace(csv_path + ".tmp", csv_path)

        summary_path = os.path.join(out_dir, "summary.json")
        with open(summary_path + ".tmp", "w") as fh:
            json.dump([c.to_dict() for c in self.cells], fh, indent=2)
            fh.write("\n")
        os.replace(summary_path + ".tmp", summary_path)

        meta_path = os.path.join(out_dir, "metadata.json")
        with open(meta_path + ".tmp", "w") as fh:
            json.dump(
                {
                    "seed": self.grid.seed,
                    "scorer_id": self.scorer_id,
                    "n_splits": self.grid.n_splits,
                    "cal_size": self.grid.cal_size,
                    "alphas": list(self.grid.alphas),
                    "betas": list(self.grid.betas),
                    "n_docs": self.n_docs,
                    "n_empty_truth": self.n_empty_truth,
                    "input_sha256": self.input_sha256,
                },
                fh,
                indent=2,
                sort_keys=True,
            )
            fh.write("\n")
        os.replace(meta_path + ".tmp", meta_path)


def _corpus_matrices(corpus: Sequence[Tuple[ScoreVector, GroundTruth]]):
    """Pad per-document sorted score arrays into matrices for bulk counting.

    Padding is -1, strictly below any admissible score or threshold, so
    padded cells never count as retained.
    """
    n = len(corpus)
    ps = np.array([sv.p for sv, _ in corpus], dtype=np.int64)
    ms = np.array([len(gt.important) for _, gt in corpus], dtype=np.int64)
    max_p = int(ps.max())
    max_m = max(1, int(ms.max()))
    all_sorted = np.full((n, max_p), -1.0)
    imp_sorted = np.full((n, max_m), -1.0)
    for i, (sv, gt) in enumerate(corpus):
        if sv.doc_id != gt.doc_id:
            raise UsageError(
                f"corpus record {i}: scores are for {sv.doc_id!r} but truth is "
                f"for {gt.doc_id!r}"
            )
        if gt.important and gt.important[-1] >= sv.p:
            raise UsageError(
                f"corpus record {i}: ground truth indexes sentence "
                f"{gt.important[-1]} but scores cover {sv.p}"
            )
        scores = np.asarray(sv.scores)
        all_sorted[i, : sv.p] = np.sort(scores)[::-1]
        if gt.important:
            imp = np.sort(scores[list(gt.important)])[::-1]
            imp_sorted[i, : len(imp)] = imp
    return ps, ms, all_sorted, imp_sorted


def _quantile_rank(alpha: float, n: int) -> int:
    return math.floor(Fraction(alpha) * (n + 1))


def run_coverage_experiment(
    corpus: Sequence[Tuple[ScoreVector, GroundTruth]],
    grid: ExperimentGrid,
    scorer_id: str = "",
    out_dir=None,
    workers: int = 1,
) -> ExperimentResult:
    """Average coverage/recall/conciseness over repeated random splits.

    Each split k draws its own deterministic permutation from
    ``(grid.seed, k)``, takes the first ``cal_size`` documents for
    calibration and the rest as test, and shares that permutation across
    every (alpha, beta) cell — so monotone trends across cells are not
    blurred by split noise. Documents with empty ground truth never
    enter calibration and count as covered at test time. Results are
    bit-identical for a fixed (seed, grid, corpus, scorer_id),
    regardless of ``workers``.
    """
    n_docs = len(corpus)
    if grid.cal_size >= n_docs:
        raise UsageError(
            f"cal_size={grid.cal_size} must be smaller than the corpus ({n_docs})"
        )
    ps, ms, all_sorted, imp_sorted = _corpus_matrices(corpus)
    n_empty = int((ms == 0).sum())
    labeled = ms > 0

    # One conformal score per (document, beta); the split loop only
    # re-draws which documents calibrate.
    s_by_beta: Dict[float, np.ndarray] = {}
    for beta in grid.betas:
        s = np.full(n_docs, np.nan)
        for i, (sv, gt) in enumerate(corpus):
            if gt.important:
                s[i] = conformal_score(sv, gt, beta)
        s_by_beta[beta] = s

    cell_index = {
        (a, b): ci
        for ci, (a, b) in enumerate(
            (a, b) for a in grid.alphas for b in grid.betas
        )
    }
    n_cells = len(cell_index)
    coverage_rows = np.empty((n_cells, grid.n_splits))
    recall_rows = np.empty((n_cells, grid.n_splits))
    conciseness_rows = np.empty((n_cells, grid.n_splits))
    tie_rows = np.empty((len(grid.betas), grid.n_splits))

    def run_split(k: int) -> None:
        rng = np.random.default_rng([grid.seed, k])
        perm = rng.permutation(n_docs)
        cal_idx = perm[: grid.cal_size]
        test_idx = perm[grid.cal_size :]
        test_imp = imp_sorted[test_idx]
        test_all = all_sorted[test_idx]
        test_m = ms[test_idx]
        test_p = ps[test_idx]
        for bi, beta in enumerate(grid.betas):
            cal_s = s_by_beta[beta][cal_idx]
            cal_s = np.sort(cal_s[labeled[cal_idx]])
            n_eff = len(cal_s)
            tie_rows[bi, k] = (
                0.0 if n_eff == 0 else 1.0 - np.unique(cal_s).size / n_eff
            )
            for alpha in grid.alphas:
                ci = cell_index[(alpha, beta)]
                rank = _quantile_rank(alpha, n_eff) if n_eff else 0
                if rank == 0:
                    coverage_rows[ci, k] = 1.0
                    recall_rows[ci, k] = 1.0
                    conciseness_rows[ci, k] = 0.0
                    continue
                q_hat = cal_s[min(rank, n_eff) - 1]
                kept_imp = (test_imp >= q_hat).sum(axis=1)
                recalls = np.where(test_m > 0, kept_imp / np.maximum(test_m, 1), 1.0)
                coverage_rows[ci, k] = float(np.mean(recalls >= beta))
                recall_rows[ci, k] = float(np.mean(recalls))
                kept_all = (test_all >= q_hat).sum(axis=1)
                conciseness_rows[ci, k] = float(np.mean((test_p - kept_all) / test_p))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_split, range(grid.n_splits)))
    else:
        for k in range(grid.n_splits):
            run_split(k)

    cells: List[ExperimentCell] = []
    rows: List[Tuple[float, float, int, float, float, float]] = []
    for alpha in grid.alphas:
        for beta in grid.betas:
            ci = cell_index[(alpha, beta)]
            bi = grid.betas.index(beta)
            if Fraction(alpha) >= Fraction(1, grid.cal_size + 1):
                lower, upper = coverage_bounds(alpha, grid.cal_size)
            else:
                lower, upper = 1.0 - alpha, 1.0
            cells.append(
                ExperimentCell(
                    alpha=alpha,
                    beta=beta,
                    mean_coverage=float(coverage_rows[ci].mean()),
                    std_coverage=float(coverage_rows[ci].std(ddof=1))
                    if grid.n_splits > 1
                    else 0.0,
                    lower_bound=lower,
                    upper_bound=upper,
                    mean_recall=float(recall_rows[ci].mean()),
                    mean_conciseness=float(conciseness_rows[ci].mean()),
                    tie_fraction=float(tie_rows[bi].mean()),
                )
            )
            for k in range(grid.n_splits):
                rows.append(
                    (
                        alpha,
                        beta,
                        k,
                        float(coverage_rows[ci, k]),
                        float(recall_rows[ci, k]),
                        float(conciseness_rows[ci, k]),
                    )
                )

    digest = hashlib.sha256()
    for sv, gt in corpus:
        digest.update(repr((sv.doc_id, sv.scores, gt.important)).encode())
    result = ExperimentResult(
        grid=grid,
        scorer_id=scorer_id,
        cells=cells,
        rows=rows,
        n_docs=n_docs,
        n_empty_truth=n_empty,
        input_sha256=digest.hexdigest(),
    )
    if out_dir is not None:
        result.write(out_dir)
    return result


def baseline_llm_binary_eval(
    corpus: Sequence[Tuple[ScoreVector, GroundTruth]],
    betas: Sequence[float],
    docs: Optional[Sequence[Document]] = None,
) -> dict:
    """Metrics for the uncalibrated keep-what-the-model-flagged baseline.

    Sentences scored >= 0.5 (binary scorers emit exactly 0 or 1) form
    the summary directly. There is no threshold to tune, so the baseline
    yields a single recall/conciseness point plus its coverage at each
    requested beta.
    """
    if not corpus:
        raise UsageError("baseline evaluation needs at least one document")
    recalls = []
    removed = []
    for sv, gt in corpus:
        retained = tuple(i for i, s in enumerate(sv.scores) if s >= 0.5)
        sel = SummarySelection(sv.doc_id, retained)
        recalls.append(recall(sel, gt))
        removed.append((sv.p - len(retained)) / sv.p)
    recalls_arr = np.asarray(recalls)
    return {
        "mean_recall": float(recalls_arr.mean()),
        "conciseness": float(np.mean(removed)),
        "coverage": {
            repr(float(b)): float(np.mean(recalls_arr >= b)) for b in betas
        },
    }
