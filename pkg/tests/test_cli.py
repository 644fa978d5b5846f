"""Command-line interface: subcommands, formats, exit codes."""

import json

import pytest
from click.testing import CliRunner

from absteer.cli import main


@pytest.fixture
def runner():
    return CliRunner()


class TestBootstrapCommand:
    def test_writes_logs_and_summary(self, runner, tmp_path):
        out = tmp_path / "run"
        result = runner.invoke(
            main,
            ["bootstrap", "--sessions", "2", "--seed", "3", "--max-adjustments", "3",
             "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        assert (out / "run_summary.json").exists()
        assert (out / "weights.csv").exists()
        assert (out / "index.jsonl").exists()
        files = list((out / "sessions").glob("*.jsonl"))
        assert len(files) == 2
        summary = json.loads((out / "run_summary.json").read_text())
        assert summary["n_sessions"] == 2

    def test_config_error_exit_code(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["bootstrap", "--sessions", "0", "--out", str(tmp_path / "x")],
        )
        assert result.exit_code == 2

    def test_env_config_file(self, runner, tmp_path):
        cfg = tmp_path / "env.json"
        cfg.write_text(json.dumps({"input_dims": 3, "question_dims": 2, "master_seed": 1}))
        out = tmp_path / "run"
        result = runner.invoke(
            main,
            ["bootstrap", "--sessions", "1", "--max-adjustments", "2",
             "--out", str(out), "--env-config", str(cfg)],
        )
        assert result.exit_code == 0, result.output

    def test_bad_env_config_exit_2(self, runner, tmp_path):
        cfg = tmp_path / "env.json"
        cfg.write_text(json.dumps({"input_dims": 1, "question_dims": 2}))
        result = runner.invoke(
            main,
            ["bootstrap", "--sessions", "1", "--out", str(tmp_path / "x"),
             "--env-config", str(cfg)],
        )
        assert result.exit_code == 2


class TestReplayCommand:
    def test_replay_digest_matches_run(self, runner, tmp_path):
        out = tmp_path / "run"
        runner.invoke(
            main,
            ["bootstrap", "--sessions", "2", "--seed", "9", "--max-adjustments", "3",
             "--out", str(out)],
        )
        result = runner.invoke(main, ["replay", "--log", str(out), "--seed", "9"])
        assert result.exit_code == 0, result.output
        digest = json.loads(result.output)
        summary = json.loads((out / "run_summary.json").read_text())
        assert digest["records"] == summary["total_records"]
        assert digest["adjudicated"] == summary["adjudicated"]
        assert digest["global_success_rate"] == pytest.approx(
            summary["global_success_rate"]
        )

    def test_single_file_replay(self, runner, tmp_path):
        out = tmp_path / "run"
        runner.invoke(
            main,
            ["bootstrap", "--sessions", "1", "--seed", "9", "--max-adjustments", "2",
             "--out", str(out)],
        )
        f = next((out / "sessions").glob("*.jsonl"))
        result = runner.invoke(main, ["replay", "--log", str(f), "--seed", "9"])
        assert result.exit_code == 0


class TestReportCommand:
    def test_csv_report_with_figures(self, runner, tmp_path):
        out = tmp_path / "run"
        runner.invoke(
            main,
            ["bootstrap", "--sessions", "2", "--seed", "4", "--max-adjustments", "4",
             "--out", str(out)],
        )
        result = runner.invoke(main, ["report", "--log", str(out)])
        assert result.exit_code == 0, result.output
        report_dir = out / "report"
        assert (report_dir / "success_curve.csv").exists()
        assert (report_dir / "success_curve.png").exists()
        assert (report_dir / "report.html").exists()

    def test_json_format_no_figures(self, runner, tmp_path):
        out = tmp_path / "run"
        runner.invoke(
            main,
            ["bootstrap", "--sessions", "1", "--seed", "4", "--max-adjustments", "3",
             "--out", str(out)],
        )
        result = runner.invoke(
            main, ["report", "--log", str(out), "--format", "json", "--no-figures"]
        )
        assert result.exit_code == 0, result.output
        assert (out / "report" / "entropy.json").exists()
        assert not (out / "report" / "entropy.png").exists()


class TestCatalogCommand:
    def test_catalog_dump(self, runner, tmp_path):
        result = runner.invoke(main, ["catalog"])
        assert result.exit_code == 0
        doc = json.loads(result.output)
        assert len(doc["operators"]) == 23
        assert doc["selector_census"] == 845

    def test_catalog_to_file(self, runner, tmp_path):
        path = tmp_path / "catalog.json"
        result = runner.invoke(main, ["catalog", "--out", str(path)])
        assert result.exit_code == 0
        assert json.loads(path.read_text())["selectable_count"] == 22
