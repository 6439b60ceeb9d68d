"""CLI pipeline wiring, exit codes, idempotence, and metadata."""

import json
import pathlib

import pytest

from cise.cli import main
from cise.core import CalibrationArtifact, coverage_bounds

FIXTURE = str(pathlib.Path(__file__).parent / "fixtures" / "pipeline_fixture.jsonl")


def run(argv):
    return main(argv)


@pytest.fixture
def offline_env(monkeypatch):
    # The offline subcommand paths must not even look at these.
    monkeypatch.delenv("CISE_LLM_URL", raising=False)
    monkeypatch.delenv("CISE_LLM_MODEL", raising=False)
    monkeypatch.delenv("CISE_EMBED_API_KEY", raising=False)


class TestOfflinePipeline:
    def test_score_label_calibrate_summarize_evaluate(self, tmp_path, offline_env):
        scored = tmp_path / "scored.jsonl"
        labeled = tmp_path / "labeled.jsonl"
        artifact_path = tmp_path / "artifact.json"
        summaries = tmp_path / "summaries.jsonl"
        report_dir = tmp_path / "report"

        assert run([
            "score", "--dataset", FIXTURE, "--scorer", "cosine_centrality",
            "--embeddings", "hash:64", "--out", str(scored),
        ]) == 0
        assert run([
            "label", "--dataset", str(scored), "--sim", "rouge1_f",
            "--delta", "0", "--out", str(labeled),
        ]) == 0
        assert run([
            "calibrate", "--dataset", str(labeled), "--alpha", "0.2",
            "--beta", "0.8", "--out", str(artifact_path),
        ]) == 0
        assert run([
            "summarize", "--dataset", str(labeled), "--artifact",
            str(artifact_path), "--out", str(summaries),
        ]) == 0
        assert run([
            "evaluate", "--dataset", str(labeled), "--summaries", str(summaries),
            "--beta", "0.8", "--out", str(report_dir),
        ]) == 0

        artifact = CalibrationArtifact.from_json(artifact_path.read_text())
        assert artifact.n == 100 or artifact.n <= 400
        assert artifact.scorer_id == "cosine_centrality:mean"

        report = json.loads((report_dir / "report.json").read_text())
        assert report["n_test"] == 400
        assert 0.0 <= report["empirical_coverage"] <= 1.0
        assert (report_dir / "per_doc.csv").exists()

    def test_calibrate_below_quantile_floor_warns_retain_all(
        self, tmp_path, offline_env, capsys
    ):
        scored = tmp_path / "scored.jsonl"
        labeled = tmp_path / "labeled.jsonl"
        artifact_path = tmp_path / "artifact.json"
        run([
            "score", "--dataset", FIXTURE, "--scorer", "cosine_centrality",
            "--embeddings", "hash:32", "--out", str(scored),
        ])
        run([
            "label", "--dataset", str(scored), "--sim", "rouge1_f",
            "--out", str(labeled),
        ])
        assert run([
            "calibrate", "--dataset", str(labeled), "--alpha", "0.001",
            "--beta", "0.9", "--out", str(artifact_path),
        ]) == 0
        artifact = CalibrationArtifact.from_json(artifact_path.read_text())
        assert artifact.retains_all
        assert "retain-all" in capsys.readouterr().err

    def test_summarize_idempotent_byte_identical(self, tmp_path, offline_env):
        scored = tmp_path / "scored.jsonl"
        labeled = tmp_path / "labeled.jsonl"
        artifact_path = tmp_path / "artifact.json"
        run([
            "score", "--dataset", FIXTURE, "--scorer", "gusum",
            "--embeddings", "hash:32", "--out", str(scored),
        ])
        run([
            "label", "--dataset", str(scored), "--sim", "rougeL_f",
            "--out", str(labeled),
        ])
        run([
            "calibrate", "--dataset", str(labeled), "--alpha", "0.3",
            "--beta", "0.8", "--out", str(artifact_path),
        ])
        out1, out2 = tmp_path / "s1.jsonl", tmp_path / "s2.jsonl"
        for out in (out1, out2):
            assert run([
                "summarize", "--dataset", str(labeled), "--artifact",
                str(artifact_path), "--out", str(out),
            ]) == 0
        assert out1.read_bytes() == out2.read_bytes()
        assert (
            pathlib.Path(str(out1) + ".meta.json").read_bytes()
            == pathlib.Path(str(out2) + ".meta.json").read_bytes()
        )

    def test_evaluate_from_artifact(self, tmp_path, offline_env):
        scored = tmp_path / "scored.jsonl"
        labeled = tmp_path / "labeled.jsonl"
        artifact_path = tmp_path / "artifact.json"
        report_dir = tmp_path / "rep"
        run([
            "score", "--dataset", FIXTURE, "--scorer", "cosine_centrality",
            "--embeddings", "hash:32", "--out", str(scored),
        ])
        run([
            "label", "--dataset", str(scored), "--sim", "rouge1_f",
            "--out", str(labeled),
        ])
        run([
            "calibrate", "--dataset", str(labeled), "--alpha", "0.25",
            "--beta", "0.75", "--out", str(artifact_path),
        ])
        # --beta omitted: taken from the artifact.
        assert run([
            "evaluate", "--dataset", str(labeled), "--artifact",
            str(artifact_path), "--out", str(report_dir),
        ]) == 0
        report = json.loads((report_dir / "report.json").read_text())
        assert report["beta"] == 0.75
        assert report["alpha"] == 0.25
        assert report["sample_auprc"] is not None


class TestExperimentCommand:
    def test_small_grid(self, tmp_path, offline_env):
        scored = tmp_path / "scored.jsonl"
        labeled = tmp_path / "labeled.jsonl"
        out_dir = tmp_path / "exp"
        run([
            "score", "--dataset", FIXTURE, "--scorer", "cosine_centrality",
            "--embeddings", "hash:32", "--out", str(scored),
        ])
        run([
            "label", "--dataset", str(scored), "--sim", "rouge1_f",
            "--out", str(labeled),
        ])
        assert run([
            "experiment", "--dataset", str(labeled), "--alpha", "0.2,0.4",
            "--beta", "0.8", "--splits", "10", "--cal-size", "50",
            "--seed", "3", "--out", str(out_dir),
        ]) == 0
        meta = json.loads((out_dir / "metadata.json").read_text())
        assert meta["dataset"] == str(labeled)
        assert meta["dataset_sha256"]
        assert meta["seed"] == 3
        summary = json.loads((out_dir / "summary.json").read_text())
        assert {c["alpha"] for c in summary} == {0.2, 0.4}
        assert (out_dir / "splits.csv").exists()


class TestConvert:
    def test_mts_conversion(self, tmp_path):
        raw = tmp_path / "raw.jsonl"
        rows = [
            {
                "id": "m1",
                "turns": [
                    {"speaker": "Doctor", "text": "Q1?"},
                    {"speaker": "Patient", "text": "A1."},
                    {"speaker": "Doctor", "text": "Q2?"},
                    {"speaker": "Patient", "text": "A2."},
                    {"speaker": "Doctor", "text": "Q3?"},
                    {"speaker": "Patient", "text": "A3."},
                ],
                "reference_summary": "summary",
            },
            {
                "id": "dropped",
                "turns": [
                    {"speaker": "Doctor", "text": "Q?"},
                    {"speaker": "Patient", "text": "A."},
                ],
            },
        ]
        raw.write_text("\n".join(json.dumps(r) for r in rows), encoding="utf-8")
        out = tmp_path / "mts.jsonl"
        assert run(["convert", "mts", "--dataset", str(raw), "--out", str(out)]) == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 1
        record = json.loads(lines[0])
        assert record["id"] == "m1"
        assert record["sentences"][0] == "Doctor: Q1? Patient: A1."

    def test_unknown_converter(self, tmp_path, capsys):
        raw = tmp_path / "raw.jsonl"
        raw.write_text("{}", encoding="utf-8")
        code = run(["convert", "nope", "--dataset", str(raw), "--out",
                    str(tmp_path / "o.jsonl")])
        assert code == 2


class TestErrorSurface:
    def test_missing_dataset_is_internal_file_error(self, tmp_path, capsys):
        code = run([
            "score", "--dataset", str(tmp_path / "absent.jsonl"),
            "--scorer", "cosine_centrality", "--embeddings", "hash:32",
            "--out", str(tmp_path / "o.jsonl"),
        ])
        assert code == 5
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert err["error"] == "internal"

    def test_bad_scorer_is_usage(self, tmp_path, capsys):
        code = run([
            "score", "--dataset", FIXTURE, "--scorer", "textrank",
            "--embeddings", "hash:32", "--out", str(tmp_path / "o.jsonl"),
        ])
        assert code == 2
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert err["error"] == "usage"

    def test_malformed_dataset_is_data_format(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{not json\n", encoding="utf-8")
        code = run([
            "score", "--dataset", str(bad), "--scorer", "cosine_centrality",
            "--embeddings", "hash:32", "--out", str(tmp_path / "o.jsonl"),
        ])
        assert code == 3
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert err["error"] == "data_format"

    def test_argparse_usage_exit(self):
        with pytest.raises(SystemExit) as excinfo:
            run(["score"])  # missing required flags
        assert excinfo.value.code == 2

    def test_existing_output_needs_overwrite(self, tmp_path, capsys):
        out = tmp_path / "o.jsonl"
        out.write_text("occupied", encoding="utf-8")
        code = run([
            "score", "--dataset", FIXTURE, "--scorer", "cosine_centrality",
            "--embeddings", "hash:32", "--out", str(out),
        ])
        assert code == 2
        assert out.read_text() == "occupied"

    def test_calibrate_requires_scores_and_labels(self, tmp_path, capsys):
        code = run([
            "calibrate", "--dataset", FIXTURE, "--alpha", "0.2",
            "--beta", "0.8", "--out", str(tmp_path / "a.json"),
        ])
        assert code == 3

    def test_llm_scorer_without_endpoint_is_usage(self, tmp_path, offline_env, capsys):
        code = run([
            "score", "--dataset", FIXTURE, "--scorer", "llm_float",
            "--out", str(tmp_path / "o.jsonl"),
        ])
        assert code == 2


class TestMetadata:
    def test_metadata_reproducible_no_timestamps(self, tmp_path, offline_env):
        scored = tmp_path / "scored.jsonl"
        run([
            "score", "--dataset", FIXTURE, "--scorer", "cosine_centrality",
            "--embeddings", "hash:32", "--out", str(scored),
        ])
        meta = json.loads(pathlib.Path(str(scored) + ".meta.json").read_text())
        assert meta["command"] == "score"
        assert meta["config"]["scorer"] == "cosine_centrality"
        assert FIXTURE in meta["input_sha256"]
        assert len(meta["input_sha256"][FIXTURE]) == 64
        assert meta["scorer_id"] == "cosine_centrality:mean"
        assert meta["skipped"] == []
