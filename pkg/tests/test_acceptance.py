"""Acceptance suite: every release criterion at its stated tolerance.

Each criterion prints one [PASS]/[FAIL] line (run with ``pytest -s`` to
see them live); a FAIL line is followed by the assertion detail.
"""

import json
import math
import pathlib
import subprocess
import sys
import time

import numpy as np
import pytest

from cise.core import (
    CalibrationConfig,
    Document,
    GroundTruth,
    ScoreVector,
    calibrate,
    conformal_score,
    coverage_bounds,
    filter_at,
    recall,
)
from cise.evaluation import (
    ExperimentGrid,
    auprc,
    conciseness,
    empirical_coverage,
    run_coverage_experiment,
)
from cise.core import SummarySelection
from cise.labeling import SimilaritySpec, greedy_label_steps, rouge_l, rouge_n
from cise.scoring import hash_embed, lexrank_scores
from cise.synthetic import make_scored_corpus
from oracles import (
    ROUGE_FIXTURES,
    brute_force_score,
    lexrank_damped_matrix,
    random_instance,
    stationary_by_eigensolve,
)

FIXTURE = str(pathlib.Path(__file__).parent / "fixtures" / "pipeline_fixture.jsonl")

ALPHAS = (0.05, 0.1, 0.2, 0.3, 0.4)
BETAS = (0.7, 0.8, 0.9, 1.0)
N_SPLITS = 400
CAL_SIZE = 100


def report(num, desc, failures, detail=""):
    status = "FAIL" if failures else "PASS"
    suffix = f"  [{detail}]" if detail else ""
    print(f"[{status}] criterion {num:>2}: {desc}{suffix}")
    assert not failures, f"criterion {num}: {failures}"


@pytest.fixture(scope="module")
def synthetic_experiment():
    """The shared desk-scale corpus and full-grid experiment (criteria 1, 8)."""
    t0 = time.monotonic()
    corpus = make_scored_corpus(n_docs=2000, p=40, seed=77)
    grid = ExperimentGrid(
        alphas=ALPHAS, betas=BETAS, n_splits=N_SPLITS, cal_size=CAL_SIZE, seed=99
    )
    result = run_coverage_experiment(corpus, grid)
    elapsed = time.monotonic() - t0
    return corpus, result, elapsed


def cell_series(result, metric):
    """Per-cell mean and standard error for a metric, from the split rows."""
    table = {}
    rows = np.array(
        [(r[0], r[1], r[3], r[4], r[5]) for r in result.rows], dtype=np.float64
    )
    col = {"coverage": 2, "recall": 3, "conciseness": 4}[metric]
    for alpha in ALPHAS:
        for beta in BETAS:
            mask = (rows[:, 0] == alpha) & (rows[:, 1] == beta)
            values = rows[mask, col]
            table[(alpha, beta)] = (
                float(values.mean()),
                float(values.std(ddof=1) / math.sqrt(len(values))),
            )
    return table


def test_criterion_01_theorem_coverage_band(synthetic_experiment):
    _, result, elapsed = synthetic_experiment
    failures = []
    for cell in result.cells:
        se = cell.std_coverage / math.sqrt(N_SPLITS)
        lower, upper = coverage_bounds(cell.alpha, CAL_SIZE)
        if not (lower - 3 * se <= cell.mean_coverage <= upper + 3 * se):
            failures.append(
                (cell.alpha, cell.beta, cell.mean_coverage, lower, upper, se)
            )
    if elapsed >= 60:
        failures.append(f"runtime {elapsed:.1f}s >= 60s")
    report(
        1,
        "mean coverage within the two-sided band on all 20 grid cells",
        failures,
        f"{len(result.cells)} cells, 400 splits, {elapsed:.1f}s",
    )


def test_criterion_02_score_threshold_equivalence():
    t0 = time.monotonic()
    rng = np.random.default_rng(202)
    violations = 0
    for _ in range(1000):
        scores, important, beta = random_instance(rng)
        vec = ScoreVector("d", tuple(scores))
        truth = GroundTruth("d", tuple(important))
        s_beta = conformal_score(vec, truth, beta)
        q_grid = np.concatenate(
            [
                rng.uniform(0, 1.1, size=100 - min(6, len(scores)) - 2),
                np.array(scores[: min(6, len(scores))]),
                np.array([0.0, s_beta]),
            ]
        )
        for q in q_grid:
            lhs = s_beta >= q
            rhs = recall(filter_at(vec, float(q)), truth) >= beta
            if lhs != rhs:
                violations += 1
    elapsed = time.monotonic() - t0
    failures = violations or (elapsed >= 5 and f"runtime {elapsed:.1f}s >= 5s")
    report(
        2,
        "S >= q iff filtered recall >= beta on 1000 x 100 instances",
        failures,
        f"0 violations required, {elapsed:.1f}s",
    )


def test_criterion_03_closed_form_equals_brute_force():
    t0 = time.monotonic()
    rng = np.random.default_rng(303)
    mismatches = 0
    for _ in range(1000):
        scores, important, beta = random_instance(rng)
        got = conformal_score(
            ScoreVector("d", tuple(scores)), GroundTruth("d", tuple(important)), beta
        )
        if got != brute_force_score(scores, important, beta):
            mismatches += 1
    elapsed = time.monotonic() - t0
    failures = mismatches or (elapsed >= 5 and f"runtime {elapsed:.1f}s >= 5s")
    report(
        3,
        "closed-form conformal score equals breakpoint brute force, exactly",
        failures,
        f"1000 instances incl. ties, {elapsed:.1f}s",
    )


def test_criterion_04_nesting_and_recall_monotonicity():
    rng = np.random.default_rng(404)
    violations = 0
    for _ in range(1000):
        scores, important, _ = random_instance(rng)
        vec = ScoreVector("d", tuple(scores))
        truth = GroundTruth("d", tuple(important))
        grid = np.sort(rng.uniform(0, 1.1, size=12))
        selections = [set(filter_at(vec, float(q)).retained) for q in grid]
        recalls = [
            recall(SummarySelection("d", tuple(sorted(s))), truth)
            for s in selections
        ]
        for tighter, looser in zip(selections[1:], selections):
            if not tighter <= looser:
                violations += 1
        for later, earlier in zip(recalls[1:], recalls):
            if later > earlier:
                violations += 1
    report(
        4,
        "filtrations nest and recall is non-increasing in the threshold",
        violations,
        "1000 instances x 12-point grids",
    )


def test_criterion_05_metric_oracles():
    failures = []
    # Average precision against hand computations.
    got = auprc([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0])
    if abs(got - 5 / 6) > 1e-12:
        failures.append(f"auprc fixture: {got} != 5/6")
    got = auprc([0.4] * 8, [1, 0, 0, 1, 0, 0, 0, 0])
    if abs(got - 0.25) > 1e-12:
        failures.append(f"all-tied auprc: {got} != positive rate 0.25")
    if auprc([0.9, 0.2], [1, 0]) != 1.0:
        failures.append("perfect ranking != 1.0")
    # ROUGE against hand-counted/DP oracles, exact.
    for cand, ref, kind, expected in ROUGE_FIXTURES:
        got = rouge_l(cand, ref) if kind == "L" else rouge_n(cand, ref, kind)
        if not all(
            math.isclose(g, e, abs_tol=1e-15) for g, e in zip(got, expected)
        ):
            failures.append(f"rouge-{kind} {cand!r} vs {ref!r}: {got} != {expected}")
    # Coverage and conciseness against per-document brute force.
    rng = np.random.default_rng(505)
    for _ in range(200):
        n = int(rng.integers(1, 10))
        docs, sels, truths = [], [], []
        cov_expected, conc_expected = 0.0, 0.0
        beta = float(rng.uniform(0.3, 1.0))
        for i in range(n):
            p = int(rng.integers(1, 9))
            kept = sorted(
                rng.choice(p, size=int(rng.integers(0, p + 1)), replace=False).tolist()
            )
            m = int(rng.integers(0, p + 1))
            important = sorted(rng.choice(p, size=m, replace=False).tolist())
            docs.append(Document(f"d{i}", tuple(f"s{j}." for j in range(p))))
            sels.append(SummarySelection(f"d{i}", tuple(kept)))
            truths.append(GroundTruth(f"d{i}", tuple(important)))
            r = 1.0 if not important else len(set(kept) & set(important)) / m
            cov_expected += 1.0 if r >= beta else 0.0
            conc_expected += (p - len(kept)) / p
        if abs(empirical_coverage(sels, truths, beta) - cov_expected / n) > 1e-12:
            failures.append("coverage mismatch vs brute force")
            break
        if abs(conciseness(sels, docs) - conc_expected / n) > 1e-12:
            failures.append("conciseness mismatch vs brute force")
            break
    report(
        5,
        "auprc/ROUGE/coverage/conciseness match hand and brute-force oracles",
        failures,
        f"{len(ROUGE_FIXTURES)} rouge fixtures",
    )


def test_criterion_06_lexrank_oracles():
    failures = []
    # Symmetric pair: exactly uniform.
    scores = np.asarray(lexrank_scores([[1.0, 0.2], [1.0, 0.2]]).scores)
    if np.abs(scores - 1.0).max() >= 1e-9:
        failures.append(f"2-node symmetric case off uniform: {scores}")
    # 3-node chain vs dense solve.
    angles = np.deg2rad([0.0, 60.0, 120.0])
    emb = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    got = np.asarray(lexrank_scores(emb).scores)
    expected = stationary_by_eigensolve(lexrank_damped_matrix(emb)) * 3
    if np.abs(got - expected).max() >= 1e-6:
        failures.append(f"chain vs eigensolve: {got} != {expected}")
    # Residual bound at convergence.
    rng = np.random.default_rng(606)
    for _ in range(20):
        p = int(rng.integers(2, 12))
        emb = rng.normal(size=(p, 4))
        epsilon = 1e-8
        result = lexrank_scores(emb, epsilon=epsilon, max_iter=5000)
        if result.flags:
            failures.append("unexpected non-convergence")
            continue
        pi = np.asarray(result.scores) / p
        residual = np.abs(pi @ lexrank_damped_matrix(emb) - pi).sum()
        if residual >= epsilon:
            failures.append(f"residual {residual} >= epsilon")
    report(6, "power iteration matches dense stationary solves", failures)


def test_criterion_07_greedy_labeling_invariants():
    rng = np.random.default_rng(707)
    vocab = [f"tok{i}" for i in range(40)]
    kinds = ("rouge1_f", "rouge2_f", "rougeL_f", "embedding_cosine")
    failures = 0
    for trial in range(500):
        p = int(rng.integers(1, 9))
        sentences = tuple(
            " ".join(rng.choice(vocab, size=int(rng.integers(2, 7))))
            for _ in range(p)
        )
        doc = Document(f"d{trial}", sentences)
        ref_idx = rng.choice(p, size=min(p, 2), replace=False)
        reference = " ".join(sentences[i] for i in sorted(ref_idx))
        delta = float(rng.choice([0.0, 0.02, 0.1]))
        spec = SimilaritySpec(kinds[trial % 4], delta=delta)
        embed = (lambda s: hash_embed(s, 32)) if spec.kind == "embedding_cosine" else None
        truth1, steps = greedy_label_steps(doc, reference, spec, embed_fn=embed)
        truth2, _ = greedy_label_steps(doc, reference, spec, embed_fn=embed)
        if truth1 != truth2:
            failures += 1
        running = 0.0
        for step in steps:
            if step.running_score < running - 1e-12:
                failures += 1
            running = step.running_score
            if step.accepted and not (step.delta > delta):
                failures += 1
        # Unbounded improvement bar labels nothing.
        inf_spec = SimilaritySpec(spec.kind, delta=math.inf)
        empty, _ = greedy_label_steps(doc, reference, inf_spec, embed_fn=embed)
        if empty.important != ():
            failures += 1
    report(
        7,
        "greedy labeling: gain ledger sound, deterministic, inf-delta empty",
        failures,
        "500 fixtures x 4 similarity kinds",
    )


def test_criterion_08_trend_reproduction(synthetic_experiment):
    _, result, _ = synthetic_experiment
    failures = []
    recall_table = cell_series(result, "recall")
    conc_table = cell_series(result, "conciseness")
    for beta in BETAS:
        series = [recall_table[(a, beta)] for a in ALPHAS]
        for (m1, se1), (m2, se2) in zip(series, series[1:]):
            if m2 > m1 + 3 * math.hypot(se1, se2):
                failures.append(f"recall rose alpha-wise at beta={beta}")
    for alpha in ALPHAS:
        series = [conc_table[(alpha, b)] for b in BETAS]
        for (m1, se1), (m2, se2) in zip(series, series[1:]):
            if m2 > m1 + 3 * math.hypot(se1, se2):
                failures.append(f"conciseness rose beta-wise at alpha={alpha}")
    report(
        8,
        "recall falls with alpha; conciseness falls with beta (3SE slack)",
        failures,
    )


def test_criterion_09_calibration_size_ablation(synthetic_experiment):
    corpus, _, _ = synthetic_experiment
    failures = []
    for n_cal in (25, 50, 100):
        grid = ExperimentGrid(
            alphas=(0.2, 0.4), betas=(0.8,), n_splits=N_SPLITS,
            cal_size=n_cal, seed=909,
        )
        result = run_coverage_experiment(corpus, grid)
        for alpha in (0.2, 0.4):
            cell = result.cell(alpha, 0.8)
            se = cell.std_coverage / math.sqrt(N_SPLITS)
            lower, upper = coverage_bounds(alpha, n_cal)
            if not (lower - 3 * se <= cell.mean_coverage <= upper + 3 * se):
                failures.append(
                    f"n={n_cal} alpha={alpha}: {cell.mean_coverage:.4f} outside "
                    f"[{lower:.4f}, {upper:.4f}] +- 3*{se:.4f}"
                )
    report(
        9,
        "coverage stays in the (wider) band down to 25 calibration docs",
        failures,
        "n in {25, 50, 100}",
    )


def test_criterion_10_offline_end_to_end(tmp_path):
    env_updates = {
        "CISE_LLM_URL": "", "CISE_LLM_MODEL": "", "CISE_EMBED_API_KEY": "",
        "no_proxy": "*",
    }
    import os

    env = {**os.environ, **env_updates}
    scored = tmp_path / "scored.jsonl"
    labeled = tmp_path / "labeled.jsonl"
    artifact = tmp_path / "artifact.json"
    summaries = tmp_path / "summaries.jsonl"
    report_dir = tmp_path / "report"
    alpha, beta = 0.2, 0.8

    steps = [
        ["score", "--dataset", FIXTURE, "--scorer", "cosine_centrality",
         "--embeddings", "hash:64", "--out", str(scored)],
        ["label", "--dataset", str(scored), "--sim", "rouge1_f", "--delta", "0",
         "--out", str(labeled)],
        ["calibrate", "--dataset", str(labeled), "--alpha", str(alpha),
         "--beta", str(beta), "--out", str(artifact)],
        ["summarize", "--dataset", str(labeled), "--artifact", str(artifact),
         "--out", str(summaries)],
        ["evaluate", "--dataset", str(labeled), "--summaries", str(summaries),
         "--beta", str(beta), "--out", str(report_dir)],
    ]
    failures = []
    for step in steps:
        proc = subprocess.run(
            [sys.executable, "-m", "cise.cli", *step],
            capture_output=True, text=True, env=env,
        )
        if proc.returncode != 0:
            failures.append(f"{step[0]} exited {proc.returncode}: {proc.stderr[:300]}")
            break

    coverage = None
    if not failures:
        payload = json.loads((report_dir / "report.json").read_text())
        coverage = payload["empirical_coverage"]
        # Single-run tolerance: calibration draw variance plus test-side
        # binomial noise, three sigmas.
        n_cal = json.loads(artifact.read_text())["n"]
        n_test = payload["n_test"]
        se = math.sqrt(
            alpha * (1 - alpha) / n_cal + alpha * (1 - alpha) / n_test
        )
        lower, upper = coverage_bounds(alpha, n_cal)
        if not (lower - 3 * se <= coverage <= upper + 3 * se):
            failures.append(
                f"coverage {coverage:.4f} outside [{lower:.4f}, {upper:.4f}] "
                f"+- 3*{se:.4f}"
            )
    report(
        10,
        "offline CLI pipeline completes with coverage in band",
        failures,
        f"coverage={coverage}",
    )
