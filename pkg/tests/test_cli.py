import json

import pytest

from eimkit.cli import main


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    assert main(["generate", "--default", "--n", "3000", "--seed", "2", "--output", str(d)]) == 0
    return d


def test_generate_writes_records_truth_and_spec(run_dir):
    assert (run_dir / "records.jsonl").read_text().count("\n") == 3000
    truth = json.loads((run_dir / "truth.json").read_text())
    assert truth["direction"] == "Inclusive->Effective"
    assert json.loads((run_dir / "generator_spec.json").read_text())["seed"] == 2


def test_fit_graph_and_report(run_dir, tmp_path, capsys):
    assert main(["fit-graph", "--input", str(run_dir / "records.jsonl"), "--output", str(tmp_path)]) == 0
    table = capsys.readouterr().out
    assert "Participation" in table and "OR (p)" in table
    graph = json.loads((tmp_path / "graph.json").read_text())
    assert graph["alpha"] == 0.05 and graph["edges"]
    assert main(["report", "--input", str(tmp_path)]) == 0
    assert (tmp_path / "graph_odds_ratios.png").read_bytes()[:4] == b"\x89PNG"
    assert (tmp_path / "graph_edges.csv").read_text().startswith("source,target,odds_ratio")


def test_config_supplies_defaults_and_flags_override(run_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 5, "fit-glm": {"model": "participation_video"}}))
    out = tmp_path / "out"
    assert main(["fit-glm", "--config", str(cfg), "--input", str(run_dir / "records.jsonl"), "--output", str(out)]) == 0
    assert json.loads((out / "glm.json").read_text())["spec"]["outcome"] == "Participation"
    assert main(["fit-glm", "--config", str(cfg), "--model", "effective_size_recurring",
                 "--input", str(run_dir / "records.jsonl"), "--output", str(out)]) == 0
    assert json.loads((out / "glm.json").read_text())["spec"]["outcome"] == "Effective"
    assert (out / "glm_sweep.csv").exists()


def test_simulate_and_analyze(tmp_path, capsys):
    assert main(["simulate-survey", "--meetings", "800", "--seed", "1", "--output", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "simulation_summary.json").read_text())
    assert summary["cooldown_violations"] == 0
    out = tmp_path / "skew"
    assert main(["analyze-skew", "--input", str(tmp_path / "events.jsonl"), "--group", "cohort", "--seed", "1",
                 "--mc-iterations", "500", "--output", str(out)]) == 0
    rep = json.loads((out / "skew_report.json").read_text())
    assert set(rep["histograms"]) == {"effective", "inclusive"}
    assert (out / "grouped_cohort.csv").exists()


def test_evaluate_small(run_dir, tmp_path):
    assert main(["evaluate", "--input", str(run_dir / "records.jsonl"), "--target", "effective", "--splits", "2",
                 "--trees", "10", "--seed", "3", "--output", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "eval_effective.json").read_text())
    assert len(rep["aucs"]) == 2 and rep["params"]["tree_count"] == 10


def test_compare_graphs_requires_pairs(run_dir, tmp_path):
    assert main(["compare-graphs", "just-a-path", "--output", str(tmp_path)]) == 1


@pytest.mark.parametrize("argv, code", [
    ([], 1),
    (["generate", "--default", "--output", "x"], 1),  # no seed
    (["generate", "--default", "--n", "0", "--seed", "1", "--output", "x"], 1),
    (["simulate-survey", "--trigger-rate", "2", "--seed", "1", "--output", "x"], 1),
    (["fit-graph", "--input", "/nonexistent/records.jsonl", "--output", "x"], 2),
    (["bogus"], 1),
])
def test_exit_codes(argv, code, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == code


def test_malformed_records_are_data_errors(tmp_path, capsys):
    bad = tmp_path / "records.jsonl"
    bad.write_text('{"meeting_id": "m"}\n')
    assert main(["fit-graph", "--input", str(bad), "--output", str(tmp_path / "o")]) == 4
    assert "line 1" in capsys.readouterr().err


def test_report_on_empty_directory(tmp_path):
    assert main(["report", "--input", str(tmp_path)]) == 4
