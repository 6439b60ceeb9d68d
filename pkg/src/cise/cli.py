"""Command-line pipeline: score, label, calibrate, summarize, evaluate.

Every subcommand validates inputs up front, writes outputs atomically
(temp file + rename), and exits 0 on success, 2 on usage errors, 3 on
data-format errors, 4 on external-service failures, and 5 on anything
else, printing a machine-readable JSON error record to stderr. Reruns
with identical inputs produce byte-identical outputs: no timestamps are
embedded anywhere.

Offline-first: only LLM scorers/labelers and the HTTP embedding fetch
touch the network; everything else runs from local files plus the
deterministic ``hash:<dim>`` embedder.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import warnings
from typing import List, Optional

from . import data as data_mod
from .core import (
    CalibrationArtifact,
    CalibrationConfig,
    SummarySelection,
    calibrate,
    summarize,
)
from .errors import DataFormatError, ExternalServiceError, UsageError
from .evaluation import ExperimentGrid, evaluate_selections, run_coverage_experiment
from .labeling import SIMILARITY_KINDS, SimilaritySpec, combination_mode, greedy_label
from .scoring import ScorerSpec, build_scorer, embed_with, hash_embed
from .embeddings import load_store

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_EXTERNAL = 4
EXIT_INTERNAL = 5


def _sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _check_out(path: str, overwrite: bool) -> None:
    if os.path.exists(path) and not overwrite:
        raise UsageError(f"output {path!r} exists; pass --overwrite to replace it")


def _write_metadata(out_path: str, command: str, config: dict, inputs: List[str],
                    extra: Optional[dict] = None) -> None:
    meta = {
        "command": command,
        "config": config,
        "input_sha256": {p: _sha256_file(p) for p in inputs},
    }
    if extra:
        meta.update(extra)
    data_mod.write_atomic(
        out_path + ".meta.json", json.dumps(meta, indent=2, sort_keys=True) + "\n"
    )


def _embedding_provider(spec: str):
    """--embeddings accepts a store path or hash:<dim> for the offline embedder."""
    if spec.startswith("hash:"):
        try:
            dim = int(spec.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"bad embedder spec {spec!r}; expected hash:<dim>")
        return embed_with(lambda s: hash_embed(s, dim)), None
    store = load_store(spec)
    return store.vectors_for, store


def _llm_client(args):
    from .llm import LlmClient, LlmConfig

    config = LlmConfig.from_env(url=args.llm_url, model=args.llm_model,
                                seed=getattr(args, "seed", None))
    return LlmClient(config)


def _flag_config(args, names) -> dict:
    return {name: getattr(args, name) for name in names}


def cmd_score(args) -> int:
    _check_out(args.out, args.overwrite)
    records = data_mod.load_jsonl(args.dataset)
    try:
        params = json.loads(args.scorer_params) if args.scorer_params else {}
    except json.JSONDecodeError as exc:
        raise UsageError(f"--scorer-params is not valid JSON: {exc}")
    spec = ScorerSpec(args.scorer, params)

    if spec.kind in ("llm_float", "llm_binary"):
        scorer = build_scorer(spec, llm_client=_llm_client(args))
    else:
        if not args.embeddings:
            raise UsageError(
                f"scorer {spec.kind!r} needs --embeddings (store path or hash:<dim>)"
            )
        provider, _ = _embedding_provider(args.embeddings)
        scorer = build_scorer(spec, embedding_provider=provider)

    vectors = []
    skipped = []
    for record in records:
        doc = data_mod.record_document(record)
        try:
            vectors.append(scorer.score(doc))
        except ExternalServiceError as exc:
            # Never zero-fill: the record stays unscored and the skip is
            # recorded for the run metadata.
            skipped.append({"id": record.id, "error": str(exc)})
            warnings.warn(f"scoring skipped {record.id!r}: {exc}", stacklevel=2)
    if not vectors:
        raise ExternalServiceError("scoring failed for every document")
    scored = data_mod.attach_scores(
        records, vectors, scorer_id=scorer.scorer_id, overwrite=args.overwrite
    )
    data_mod.save_jsonl(scored, args.out)
    _write_metadata(
        args.out,
        "score",
        _flag_config(args, ["dataset", "scorer", "scorer_params", "embeddings", "seed"]),
        [args.dataset],
        {"scorer_id": scorer.scorer_id, "skipped": skipped},
    )
    return EXIT_OK


def cmd_label(args) -> int:
    _check_out(args.out, args.overwrite)
    records = data_mod.load_jsonl(args.dataset)
    missing = [r.id for r in records if r.reference_summary is None]
    if missing:
        raise DataFormatError(
            f"labeling needs reference summaries; missing on {len(missing)} "
            f"record(s), e.g. {missing[:3]}"
        )

    truths = []
    if args.sim == "llm":
        from .llm import llm_ground_truth_labels

        client = _llm_client(args)
        for record in records:
            doc = data_mod.record_document(record)
            truths.append(llm_ground_truth_labels(client, doc, record.reference_summary))
        label_source = f"llm:{client.config.model}"
        mode = None
    else:
        sim = SimilaritySpec(args.sim, delta=args.delta)
        embed_fn = None
        if sim.kind == "embedding_cosine":
            if not args.embeddings or not args.embeddings.startswith("hash:"):
                raise UsageError(
                    "embedding_cosine labeling needs --embeddings hash:<dim> "
                    "(a store alone cannot embed the reference summary)"
                )
            dim = int(args.embeddings.split(":", 1)[1])
            embed_fn = lambda s: hash_embed(s, dim)
        for record in records:
            doc = data_mod.record_document(record)
            truths.append(
                greedy_label(doc, record.reference_summary, sim, embed_fn=embed_fn)
            )
        label_source = sim.label_source
        mode = combination_mode(embed_fn) if sim.kind == "embedding_cosine" else None

    labeled = data_mod.attach_labels(
        records, truths, label_source=label_source, overwrite=args.overwrite
    )
    data_mod.save_jsonl(labeled, args.out)
    extra = {"label_source": label_source}
    if mode:
        extra["embedding_combination"] = mode
    _write_metadata(
        args.out,
        "label",
        _flag_config(args, ["dataset", "sim", "delta", "embeddings"]),
        [args.dataset],
        extra,
    )
    return EXIT_OK


def cmd_calibrate(args) -> int:
    _check_out(args.out, args.overwrite)
    records = data_mod.load_jsonl(args.dataset)
    incomplete = [r.id for r in records if r.scores is None or r.labels is None]
    if incomplete:
        raise DataFormatError(
            f"calibration needs scores and labels on every record; missing on "
            f"{len(incomplete)} record(s), e.g. {incomplete[:3]}"
        )
    scorer_ids = {r.scorer_id for r in records if r.scorer_id}
    if len(scorer_ids) > 1:
        raise UsageError(f"dataset mixes scorer ids: {sorted(scorer_ids)}")
    corpus = data_mod.records_to_corpus(records)
    config = CalibrationConfig(alpha=args.alpha, beta=args.beta)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        artifact = calibrate(
            corpus, config,
            scorer_id=next(iter(scorer_ids), ""),
            seed=args.seed,
        )
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    data_mod.write_atomic(args.out, artifact.to_json())
    _write_metadata(
        args.out,
        "calibrate",
        _flag_config(args, ["dataset", "alpha", "beta", "seed"]),
        [args.dataset],
        {"retain_all": artifact.retains_all,
         "dropped_empty_truth": artifact.dropped_empty_truth},
    )
    return EXIT_OK


def _load_artifact(path) -> CalibrationArtifact:
    with open(path, "r", encoding="utf-8") as fh:
        return CalibrationArtifact.from_json(fh.read())


def cmd_summarize(args) -> int:
    _check_out(args.out, args.overwrite)
    records = data_mod.load_jsonl(args.dataset)
    artifact = _load_artifact(args.artifact)
    unscored = [r.id for r in records if r.scores is None]
    if unscored:
        raise DataFormatError(
            f"summarize needs scores on every record; missing on "
            f"{len(unscored)} record(s), e.g. {unscored[:3]}"
        )
    client = _llm_client(args) if args.hybrid else None

    lines = []
    for record in records:
        doc = data_mod.record_document(record)
        selection = summarize(data_mod.record_scores(record), artifact)
        text = selection.render(doc)
        row = {"id": record.id, "retained": list(selection.retained), "text": text}
        if client is not None:
            from .llm import hybrid_rewrite

            row["hybrid_text"] = hybrid_rewrite(client, text) if text else ""
        lines.append(json.dumps(row, ensure_ascii=False))
    data_mod.write_atomic(args.out, "\n".join(lines) + "\n")
    _write_metadata(
        args.out,
        "summarize",
        _flag_config(args, ["dataset", "artifact", "hybrid"]),
        [args.dataset, args.artifact],
    )
    return EXIT_OK


def cmd_evaluate(args) -> int:
    if args.summaries is None and args.artifact is None:
        raise UsageError("evaluate needs --summaries or --artifact")
    records = data_mod.load_jsonl(args.dataset)
    unlabeled = [r.id for r in records if r.labels is None]
    if unlabeled:
        raise DataFormatError(
            f"evaluation needs labels on every record; missing on "
            f"{len(unlabeled)} record(s), e.g. {unlabeled[:3]}"
        )
    docs = [data_mod.record_document(r) for r in records]
    truths = [data_mod.record_truth(r) for r in records]

    artifact = _load_artifact(args.artifact) if args.artifact else None
    if args.summaries:
        by_id = {}
        with open(args.summaries, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                    by_id[row["id"]] = row["retained"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise DataFormatError(
                        f"{args.summaries}:{lineno}: bad summary row: {exc}"
                    )
        missing = [r.id for r in records if r.id not in by_id]
        if missing:
            raise DataFormatError(
                f"summaries missing for {len(missing)} record(s), e.g. {missing[:3]}"
            )
        selections = [SummarySelection(r.id, tuple(by_id[r.id])) for r in records]
    else:
        unscored = [r.id for r in records if r.scores is None]
        if unscored:
            raise DataFormatError(
                f"evaluating from an artifact needs scores; missing on "
                f"{len(unscored)} record(s), e.g. {unscored[:3]}"
            )
        selections = [
            summarize(data_mod.record_scores(r), artifact) for r in records
        ]

    beta = args.beta if args.beta is not None else (artifact.beta if artifact else None)
    if beta is None:
        raise UsageError("evaluate needs --beta (or an --artifact carrying one)")

    per_doc_scores = None
    if all(r.scores is not None for r in records):
        per_doc_scores = [(r.scores, r.labels) for r in records]
    report = evaluate_selections(
        docs, selections, truths, beta,
        artifact=artifact, per_doc_scores=per_doc_scores,
    )

    os.makedirs(args.out, exist_ok=True)
    report_path = os.path.join(args.out, "report.json")
    data_mod.write_atomic(
        report_path, json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    per_doc_path = os.path.join(args.out, "per_doc.csv")
    buf = io.StringIO()
    writer = csv.DictWriter(
        buf, fieldnames=["id", "p", "kept", "recall", "covered", "empty_truth"]
    )
    writer.writeheader()
    for row in report.per_doc:
        writer.writerow(row)
    data_mod.write_atomic(per_doc_path, buf.getvalue())
    inputs = [args.dataset] + [p for p in (args.summaries, args.artifact) if p]
    _write_metadata(
        os.path.join(args.out, "run"),
        "evaluate",
        _flag_config(args, ["dataset", "summaries", "artifact", "beta"]),
        inputs,
    )
    return EXIT_OK


def _parse_float_list(text: str, what: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad {what} list {text!r}: {exc}")


def cmd_experiment(args) -> int:
    records = data_mod.load_jsonl(args.dataset)
    incomplete = [r.id for r in records if r.scores is None or r.labels is None]
    if incomplete:
        raise DataFormatError(
            f"the experiment needs scores and labels on every record; missing "
            f"on {len(incomplete)} record(s), e.g. {incomplete[:3]}"
        )
    corpus = data_mod.records_to_corpus(records)
    grid = ExperimentGrid(
        alphas=tuple(_parse_float_list(args.alpha, "alpha")),
        betas=tuple(_parse_float_list(args.beta, "beta")),
        n_splits=args.splits,
        cal_size=args.cal_size,
        seed=args.seed,
        allow_retain_all=args.allow_retain_all,
    )
    scorer_ids = {r.scorer_id for r in records if r.scorer_id}
    result = run_coverage_experiment(
        corpus, grid,
        scorer_id=next(iter(scorer_ids), ""),
        out_dir=args.out,
        workers=args.workers,
    )
    # Fold the CLI-level reproduction info into the runner's metadata.
    meta_path = os.path.join(args.out, "metadata.json")
    with open(meta_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    meta["dataset"] = args.dataset
    meta["dataset_sha256"] = _sha256_file(args.dataset)
    data_mod.write_atomic(meta_path, json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(
        f"experiment: {len(result.cells)} cells x {grid.n_splits} splits "
        f"on {result.n_docs} docs -> {args.out}"
    )
    return EXIT_OK


def cmd_convert(args) -> int:
    _check_out(args.out, args.overwrite)
    if args.converter != "mts":
        raise UsageError(f"unknown converter {args.converter!r}; available: mts")
    rows = []
    with open(args.dataset, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataFormatError(
                    f"{args.dataset}:{lineno}: invalid JSON: {exc}"
                )
    converted = data_mod.convert_mts(rows)
    if not converted:
        raise DataFormatError("conversion produced no records (all dropped?)")
    data_mod.save_jsonl(converted, args.out)
    _write_metadata(
        args.out, "convert",
        _flag_config(args, ["dataset", "converter"]),
        [args.dataset],
        {"n_in": len(rows), "n_out": len(converted)},
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cise",
        description="Calibrated extractive summarization with retention guarantees.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p, llm=False):
        p.add_argument("--dataset", required=True, help="input dataset JSONL")
        p.add_argument("--out", required=True, help="output path")
        p.add_argument("--overwrite", action="store_true",
                       help="replace existing outputs/fields")
        if llm:
            p.add_argument("--llm-url", default=None, help="chat-completions URL")
            p.add_argument("--llm-model", default=None, help="model name")

    p = sub.add_parser("score", help="attach importance scores to a dataset")
    add_common(p, llm=True)
    p.add_argument("--scorer", required=True,
                   help="cosine_centrality | sentence_centrality | gusum | "
                        "lexrank | llm_float | llm_binary")
    p.add_argument("--scorer-params", default=None, help='JSON, e.g. {"damping":0.9}')
    p.add_argument("--embeddings", default=None,
                   help="embedding store path or hash:<dim>")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(handler=cmd_score)

    p = sub.add_parser("label", help="derive sentence labels from reference summaries")
    add_common(p, llm=True)
    p.add_argument("--sim", required=True,
                   help=" | ".join(SIMILARITY_KINDS) + " | llm")
    p.add_argument("--delta", type=float, default=0.0,
                   help="minimum similarity improvement to keep a sentence")
    p.add_argument("--embeddings", default=None, help="hash:<dim> for embedding_cosine")
    p.set_defaults(handler=cmd_label)

    p = sub.add_parser("calibrate", help="fit the retention threshold")
    add_common(p)
    p.add_argument("--alpha", type=float, required=True, help="target error rate")
    p.add_argument("--beta", type=float, required=True, help="target recall fraction")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(handler=cmd_calibrate)

    p = sub.add_parser("summarize", help="apply a calibration artifact to scores")
    add_common(p, llm=True)
    p.add_argument("--artifact", required=True, help="calibration artifact JSON")
    p.add_argument("--hybrid", action="store_true",
                   help="also rewrite each extractive summary with the LLM")
    p.set_defaults(handler=cmd_summarize)

    p = sub.add_parser("evaluate", help="score summaries against labels")
    add_common(p)
    p.add_argument("--summaries", default=None, help="summaries JSONL from summarize")
    p.add_argument("--artifact", default=None, help="calibration artifact JSON")
    p.add_argument("--beta", type=float, default=None)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("experiment", help="repeated-split coverage experiment")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--alpha", required=True, help="comma-separated error rates")
    p.add_argument("--beta", required=True, help="comma-separated recall targets")
    p.add_argument("--splits", type=int, default=400)
    p.add_argument("--cal-size", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--allow-retain-all", action="store_true",
                   help="permit alpha below 1/(cal_size+1)")
    p.set_defaults(handler=cmd_experiment)

    p = sub.add_parser("convert", help="dataset-specific preprocessing")
    p.add_argument("converter", help="converter name (mts)")
    add_common(p)
    p.set_defaults(handler=cmd_convert)

    return parser


_ERROR_KINDS = (
    (UsageError, "usage", EXIT_USAGE),
    (DataFormatError, "data_format", EXIT_DATA),
    (ExternalServiceError, "external_service", EXIT_EXTERNAL),
)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except Exception as exc:  # noqa: BLE001 - single surface for exit codes
        for exc_type, kind, code in _ERROR_KINDS:
            if isinstance(exc, exc_type):
                break
        else:
            kind, code = "internal", EXIT_INTERNAL
        print(json.dumps({"error": kind, "message": str(exc)}), file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
