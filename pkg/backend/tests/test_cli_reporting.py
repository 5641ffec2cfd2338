"""
Tests for report aggregation, the self-check and the command line
"""

import json
from pathlib import Path

import pandas as pd
import pytest
import yaml
from conftest import TINY_ATTENTION, TINY_BACKBONE

import src.utils.config_manager as config_module
from src.cli.main import main
from src.ingest.labels import TaskId
from src.reporting.report import MISSING, RunEntry, RunReport, find_evaluations, report
from src.reporting.selfcheck import selfcheck
from src.utils.errors import DataIOError, SelfCheckFailure


def write_evaluation(run_dir: Path, system: str, task: TaskId, se, sp, seed=0) -> Path:
    if se is None or sp is None:
        metrics = {"SE": se, "SP": sp, "AS": None, "HS": None, "Score": None}
        undefined = ["SE" if se is None else "SP", "AS", "HS", "Score"]
    else:
        hs = 2 * se * sp / (se + sp) if se + sp else 0.0
        metrics = {"SE": se, "SP": sp, "AS": (se + sp) / 2, "HS": hs, "Score": ((se + sp) / 2 + hs) / 2}
        undefined = []
    run_dir.mkdir(parents=True, exist_ok=True)
    path = run_dir / "evaluation.json"
    doc = {
        "task": task.value,
        "n_items": 10,
        "metrics": {"raw": metrics, "undefined": undefined},
        "system": system,
        "seed": seed,
        "config_digest": "abc123def456",
    }
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def _rows(markdown: str):
    results = markdown.split("## Runs")[0]
    return [line for line in results.splitlines() if line.startswith("| ") and "---" not in line]


class TestReport:
    def test_single_run(self, tmp_path):
        write_evaluation(tmp_path / "run", "System III", TaskId.T2_1, 80.0, 60.0)
        run = report([tmp_path / "run"], tmp_path / "out")
        markdown = (tmp_path / "out" / "report.md").read_text()
        assert "| System | Task 2-1 SE/SP | Task 2-1 AS/HS | Task 2-1 Score |" in markdown
        assert "| System III | 80.0/60.0 | 70.0/68.6 | 69.3 |" in markdown
        assert run.systems == ["System III"]
        doc = json.loads((tmp_path / "out" / "report.json").read_text())
        assert doc["tasks"] == ["T2_1"]
        assert doc["rows"][0]["rounded"]["Score"] == 69.3

    def test_rows_follow_the_system_order(self, tmp_path):
        for i, system in enumerate(["System III", "WA-branch", "System I", "System II"]):
            write_evaluation(tmp_path / f"run{i}", system, TaskId.T1_1, 50.0 + i, 70.0)
        run = report([tmp_path])
        assert run.systems == ["WA-branch", "System I", "System II", "System III"]
        rows = _rows(run.to_markdown())
        assert [r.split("|")[1].strip() for r in rows[1:5]] == run.systems

    def test_markdown_agrees_with_json(self, tmp_path):
        write_evaluation(tmp_path / "a", "System II", TaskId.T1_1, 41.25, 88.35)
        write_evaluation(tmp_path / "b", "System II", TaskId.T2_2, 30.0, 95.0)
        run = report([tmp_path])
        markdown = run.to_markdown()
        for row in run.to_dict()["rows"]:
            r = row["rounded"]
            assert f"{r['SE']:.1f}/{r['SP']:.1f}" in markdown
            assert f"{r['Score']:.1f}" in markdown

    def test_missing_cells_and_undefined_metrics(self, tmp_path):
        write_evaluation(tmp_path / "a", "System I", TaskId.T1_1, 60.0, 70.0)
        write_evaluation(tmp_path / "b", "System II", TaskId.T1_2, None, 70.0)
        markdown = report([tmp_path]).to_markdown()
        rows = {r.split("|")[1].strip(): r for r in _rows(markdown)}
        assert f"| {MISSING} | {MISSING} | {MISSING} |" in rows["System I"]
        assert f"{MISSING}/70.0" in rows["System II"]

    def test_seeds_get_their_own_rows(self, tmp_path):
        write_evaluation(tmp_path / "s0", "System III", TaskId.T1_1, 60.0, 70.0, seed=0)
        write_evaluation(tmp_path / "s1", "System III", TaskId.T1_1, 62.0, 71.0, seed=1)
        run = report([tmp_path])
        assert run.systems == ["System III (seed 0)", "System III (seed 1)"]

    def test_output_is_reproducible(self, tmp_path):
        write_evaluation(tmp_path / "run", "System III", TaskId.T2_1, 80.0, 60.0)
        first = report([tmp_path / "run"]).to_json()
        assert report([tmp_path / "run"]).to_json() == first

    def test_bad_inputs(self, tmp_path):
        with pytest.raises(DataIOError, match="does not exist"):
            find_evaluations([tmp_path / "nowhere"])
        (tmp_path / "empty").mkdir()
        with pytest.raises(DataIOError, match="evaluation.json"):
            find_evaluations([tmp_path / "empty"])
        broken = tmp_path / "broken" / "evaluation.json"
        broken.parent.mkdir()
        broken.write_text(json.dumps({"task": "T1_1"}))
        with pytest.raises(DataIOError):
            RunEntry.from_file(broken)

    def test_versions_are_listed(self):
        run = RunReport([])
        assert "numpy" in run.versions and "python" in run.versions


class TestSelfCheck:
    def test_core_checks_pass(self):
        summary = selfcheck(include_pipeline=False)
        assert summary.passed
        assert [r.name for r in summary.results][:2] == ["metric oracle", "score oracle"]
        summary.raise_for_failures()

    def test_failures_raise(self):
        def arithmetic_only(se, sp):
            as_ = (se + sp) / 2
            return as_, as_, as_

        summary = selfcheck(scores_fn=arithmetic_only, include_pipeline=False)
        assert not summary.passed
        with pytest.raises(SelfCheckFailure):
            summary.raise_for_failures()


class TestExitCodes:
    def test_missing_feature_cache_is_an_io_error(self, tmp_path):
        assert main(["train", "--features", str(tmp_path / "none"), "--out", str(tmp_path / "run"), "--quiet"]) == 2

    def test_missing_checkpoint_is_an_io_error(self, tmp_path):
        assert main(["eval", "--checkpoint", str(tmp_path / "best.rspk")]) == 2

    def test_task_level_mismatch_is_a_validation_failure(self, tmp_path, dataset_dir):
        argv = ["extract", "--root", str(dataset_dir), "--level", "recording", "--task", "T1_1", "--out", str(tmp_path)]
        assert main(argv) == 1

    def test_report_command(self, tmp_path):
        write_evaluation(tmp_path / "run", "System III", TaskId.T2_1, 80.0, 60.0)
        assert main(["report", str(tmp_path / "run"), "--out", str(tmp_path / "out")]) == 0
        assert (tmp_path / "out" / "report.md").is_file()
        assert main(["report", str(tmp_path / "missing"), "--out", str(tmp_path / "out")]) == 2


@pytest.fixture
def small_config_dir(tmp_path, monkeypatch):
    """Config directory with a small front end, one training step and a fresh ConfigManager"""
    config_dir = tmp_path / "config"
    config_dir.mkdir()
    pipeline = {
        "frontend": {
            "event_duration_s": 1.0,
            "recording_duration_s": 1.5,
            "n_bins": 16,
            "event_frames": 16,
            "recording_frames": 24,
        },
        "augmentation": {"batch_size": 2, "crop_bins": 2, "seed": 0},
        "training": {"epochs": 1, "steps_per_epoch": 2, "lr": 1e-3},
    }
    variants = {
        "variants": {"system_iii": {"combiner": "linear", "attention": True, "alpha": 1 / 3, "beta": 1.0, "gamma": 1.0}}
    }
    (config_dir / "pipeline_config.yaml").write_text(yaml.safe_dump(pipeline))
    (config_dir / "system_variants.yaml").write_text(yaml.safe_dump(variants))
    monkeypatch.setenv("RESPSCOPE_CONFIG_DIR", str(config_dir))
    monkeypatch.setattr(config_module, "_config_manager", None)
    return config_dir


@pytest.mark.slow
def test_extract_train_eval_report(tmp_path, dataset_dir, small_config_dir):
    features, run_dir = tmp_path / "features", tmp_path / "run"
    assert main(["extract", "--root", str(dataset_dir), "--level", "event", "--out", str(features)]) == 0
    assert (features / "manifest.json").is_file()

    run_config = tmp_path / "run.json"
    run_config.write_text(
        json.dumps(
            {
                "system": {
                    "variant": "system_iii",
                    "task": "T1_1",
                    "input_shape": [16, 16],
                    "backbone": TINY_BACKBONE.model_dump(mode="json"),
                    "attention_spec": TINY_ATTENTION.model_dump(mode="json"),
                }
            }
        )
    )
    argv = ["train", "--config", str(run_config), "--features", str(features), "--out", str(run_dir), "--quiet"]
    assert main(argv) == 0
    history = pd.read_csv(run_dir / "history.csv")
    assert len(history) == 1

    assert main(["eval", "--checkpoint", str(run_dir / "best.rspk")]) == 0
    doc = json.loads((run_dir / "eval_T1_1_test" / "evaluation.json").read_text())
    assert doc["split"] == "test" and doc["n_items"] == 1
    assert "SP" in doc["metrics"]["undefined"]

    assert main(["embed", "--checkpoint", str(run_dir / "best.rspk")]) == 0
    assert len(pd.read_csv(run_dir / "embeddings.csv")) == 5

    assert main(["report", str(run_dir), "--out", str(tmp_path / "report")]) == 0
    markdown = (tmp_path / "report" / "report.md").read_text()
    assert "| System III |" in markdown and MISSING in markdown
