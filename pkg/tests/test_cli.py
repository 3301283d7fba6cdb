"""
File: tests/test_cli.py
Description: Tests for the command-line surface: experiment commands, result files,
             the report command and exit statuses.
"""

import csv
import json
from dataclasses import replace

import pytest

from dgkd import create_cli, run_cli
from dgkd.commands import common
from dgkd.controllers.config_controller import ConfigController
from dgkd.controllers.training_controller import StageCache


@pytest.fixture
def smoke_path(write_config, smoke_config):
    return write_config(smoke_config)


def invoke(runner, cli, *args):
    return runner.invoke(cli, [str(arg) for arg in args])


def read_rows(path):
    with path.open(encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def test_run_writes_every_result_file(runner, cli, smoke_path, tmp_path):
    out = tmp_path / "out"
    result = invoke(runner, cli, "run", "--config", smoke_path, "--out", out)
    assert result.exit_code == 0, result.output
    for name in ("stages.csv", "summary.csv", "reports.json", "config.resolved.json", "manifest.json"):
        assert (out / name).is_file()
    assert (out / "seed-0" / "smoke" / "plan_report.json").is_file()
    assert (out / "seed-0" / "smoke" / "checkpoints" / "stage-2-S2.dgkd").is_file()
    assert "smoke" in result.stdout
    assert "T4→A3→S2" in result.stdout


def test_run_tables_have_expected_rows(runner, cli, smoke_path, tmp_path):
    out = tmp_path / "out"
    invoke(runner, cli, "run", "--config", smoke_path, "--out", out)
    stages = read_rows(out / "stages.csv")
    assert [row["label"] for row in stages] == ["T4", "A3", "S2"]
    summary = read_rows(out / "summary.csv")
    assert [row["kind"] for row in summary] == ["seed", "mean"]
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["seeds"] == [0]
    assert {entry["path"] for entry in manifest["files"]} == {
        "stages.csv", "summary.csv", "reports.json", "config.resolved.json"
    }


def test_repeated_runs_give_identical_tables(runner, cli, smoke_path, tmp_path):
    invoke(runner, cli, "run", "--config", smoke_path, "--out", tmp_path / "a")
    invoke(runner, cli, "run", "--config", smoke_path, "--out", tmp_path / "b")
    for name in ("stages.csv", "summary.csv", "reports.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_override_adds_mean_rows(runner, cli, smoke_path, tmp_path):
    out = tmp_path / "out"
    result = invoke(runner, cli, "run", "--config", smoke_path, "--out", out, "--seeds", "0,1")
    assert result.exit_code == 0, result.output
    assert (out / "seed-1" / "smoke" / "plan_report.json").is_file()
    summary = read_rows(out / "summary.csv")
    assert [(row["kind"], row["seed"]) for row in summary] == [("seed", "0"), ("seed", "1"), ("mean", "")]
    assert summary[2]["runs"] == "2"
    assert "mean" in result.stdout


def test_bad_seed_list_is_a_config_error(runner, cli, smoke_path, tmp_path):
    result = invoke(runner, cli, "run", "--config", smoke_path, "--out", tmp_path, "--seeds", "zero")
    assert result.exit_code == 3
    assert "--seeds" in result.stderr


def test_invalid_config_exits_with_config_status(runner, cli, write_config, smoke_config, tmp_path):
    smoke_config["plans"][0]["distill"] = {"temprature": 2.0}
    result = invoke(runner, cli, "run", "--config", write_config(smoke_config), "--out", tmp_path)
    assert result.exit_code == 3
    assert "config error: plans.0.distill.temprature" in result.stderr


def test_missing_config_exits_with_config_status(runner, cli, tmp_path):
    result = invoke(runner, cli, "run", "--config", tmp_path / "absent.json")
    assert result.exit_code == 3


def test_missing_required_option_is_a_usage_error(runner, cli):
    assert invoke(runner, cli, "run").exit_code == 2


def test_unknown_command_is_a_usage_error(runner, cli):
    assert invoke(runner, cli, "distill-everything").exit_code == 2


# ---------------------------------------------------------------------------
# variants
# ---------------------------------------------------------------------------

def test_compare_modes_runs_each_configured_mode(runner, cli, write_config, smoke_config, tmp_path):
    smoke_config["compare"] = {"modes": ["chain", "dense"]}
    out = tmp_path / "out"
    result = invoke(runner, cli, "compare-modes", "--config", write_config(smoke_config), "--out", out)
    assert result.exit_code == 0, result.output
    plans = {row["plan"] for row in read_rows(out / "summary.csv")}
    assert plans == {"smoke-chain", "smoke-dense"}
    assert (out / "seed-0" / "smoke-chain" / "plan_report.json").is_file()


def test_sweep_t_runs_every_admissible_drop_count(runner, cli, smoke_path, tmp_path):
    out = tmp_path / "out"
    result = invoke(runner, cli, "sweep-t", "--config", smoke_path, "--out", out)
    assert result.exit_code == 0, result.output
    rows = read_rows(out / "summary.csv")
    assert sorted({row["plan"] for row in rows}) == ["smoke-t0", "smoke-t1"]
    assert {row["mode"] for row in rows} == {"dense_stochastic"}


def test_paths_runs_every_sub_ladder(runner, cli, smoke_path, tmp_path):
    out = tmp_path / "out"
    result = invoke(runner, cli, "paths", "--config", smoke_path, "--out", out)
    assert result.exit_code == 0, result.output
    paths = {row["plan"]: row["path"] for row in read_rows(out / "summary.csv") if row["kind"] == "seed"}
    assert paths == {"smoke-path0": "T4→A3→S2", "smoke-path1": "T4→S2"}


def test_unknown_plan_name(runner, cli, smoke_path, tmp_path):
    result = invoke(runner, cli, "paths", "--config", smoke_path, "--out", tmp_path, "--plan", "other")
    assert result.exit_code == 3
    assert "--plan" in result.stderr


# ---------------------------------------------------------------------------
# report / ladder
# ---------------------------------------------------------------------------

def test_report_recomputes_tables(runner, cli, smoke_path, tmp_path):
    out = tmp_path / "out"
    invoke(runner, cli, "run", "--config", smoke_path, "--out", out)
    result = invoke(runner, cli, "report", "--out", out)
    assert result.exit_code == 0, result.output
    assert (out / "report" / "summary.csv").read_bytes() == (out / "summary.csv").read_bytes()
    assert (out / "report" / "stages.csv").read_bytes() == (out / "stages.csv").read_bytes()
    assert "tables written to" in result.stdout


def test_report_without_reports(runner, cli, tmp_path):
    result = invoke(runner, cli, "report", "--out", tmp_path)
    assert result.exit_code == 6
    assert "no reports" in result.stderr


def test_report_defaults_to_environment_output_dir(runner, tmp_path, monkeypatch):
    monkeypatch.setenv("DGKD_OUTPUT_DIR", str(tmp_path / "env-out"))
    result = runner.invoke(create_cli(), ["report"])
    assert result.exit_code == 6
    assert "env-out" in result.stderr


def test_ladder_lists_members(runner, cli, smoke_path):
    result = invoke(runner, cli, "ladder", "--config", smoke_path)
    assert result.exit_code == 0, result.output
    lines = result.stdout.splitlines()
    assert lines[0] == "smoke (dense)"
    assert [line.split()[0] for line in lines[1:]] == ["T4", "A3", "S2"]


# ---------------------------------------------------------------------------
# run_cli
# ---------------------------------------------------------------------------

def test_run_cli_returns_statuses(smoke_path, tmp_path):
    assert run_cli(["ladder", "--config", str(smoke_path)]) == 0
    assert run_cli(["report", "--out", str(tmp_path / "empty")]) == 6
    assert run_cli(["not-a-command"]) == 2


# ---------------------------------------------------------------------------
# execute_plans
# ---------------------------------------------------------------------------

def test_each_seed_gets_its_own_stage_cache(smoke_config, tmp_path, monkeypatch):
    caches = []

    class RecordingCache(StageCache):
        def __init__(self):
            super().__init__()
            caches.append(self)

    monkeypatch.setattr(common, "StageCache", RecordingCache)
    config = replace(ConfigController.parse_config_dict(smoke_config), seeds=(0, 1))
    plans = ConfigController.mode_variants(config.plan("smoke"), ["direct_kd", "dense"])
    reports, _ = common.execute_plans(config, plans, tmp_path / "out")
    assert len(reports) == 4
    assert [cache.hits for cache in caches] == [2, 2]
    assert [len(cache) for cache in caches] == [4, 4]
