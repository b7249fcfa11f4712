import json

import pytest

from causalprompt.cli.Cli import EXIT_DATA, EXIT_OK, EXIT_STAGE, EXIT_USAGE, main
from causalprompt.cli.Pipeline import MANIFEST, run_pipeline
from causalprompt.data.Dataset import load_dataset, save_dataset
from causalprompt.utils.Config import load_config

ARTIFACTS = ["dataset.jsonl", "rephrased.jsonl", "generated.jsonl", "features.csv", "metrics.csv", "matrix.csv",
             "graph.json", "graph.png", "analysis.json", "analysis.md", "optimizer.json", "trace.csv",
             "comparison_template.md", "verification.csv", MANIFEST]


def test_usage_errors():
    assert main([]) == EXIT_USAGE
    assert main(["transmogrify"]) == EXIT_USAGE
    assert main(["ate", "--outcome", "pass_rate"]) == EXIT_USAGE
    assert main(["ingest", "--set", "no-equals-sign"]) == EXIT_USAGE


def test_features_list(capsys):
    assert main(["features", "--list"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) >= 40
    assert any(line.startswith("simp_ttr\t") for line in lines)


def test_stage_without_inputs(tmp_path):
    assert main(["discover", "--output-dir", str(tmp_path)]) == EXIT_STAGE
    assert main(["ate", "--treatment", "short", "--outcome", "pass_rate", "--output-dir", str(tmp_path)]) == EXIT_STAGE


def test_data_errors(tmp_path):
    assert main(["ingest", "--output-dir", str(tmp_path), "--dataset", str(tmp_path / "missing.jsonl")]) == EXIT_STAGE
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "q1"}\n', encoding="utf-8")
    assert main(["ingest", "--output-dir", str(tmp_path), "--dataset", str(bad)]) == EXIT_DATA
    assert main(["pipeline", "--stages", "ingest,polish", "--output-dir", str(tmp_path)]) == EXIT_DATA
    assert main(["ingest", "--output-dir", str(tmp_path), "--set", "ga.survivors=zero"]) == EXIT_DATA


def test_ingest_bundled_dataset_and_skip_on_rerun(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["ingest", "--output-dir", str(out)]) == EXIT_OK
    assert "wrote" in capsys.readouterr().out
    assert len(load_dataset(out / "dataset.jsonl")) == 20
    manifest = json.loads((out / MANIFEST).read_text())
    assert set(manifest["stages"]) == {"ingest"}

    assert main(["ingest", "--output-dir", str(out)]) == EXIT_OK
    assert json.loads((out / MANIFEST).read_text()) == manifest


def test_flags_override_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("seed=3\ndiscovery.lambda_l1=0.2\n", encoding="utf-8")
    config = load_config(path, {"discovery.lambda_l1": "0.05", "llm.mock": "true"})
    assert config.seed == 3
    assert config.discovery.lambda_l1 == 0.05
    assert config.llm.mock


def test_rephrase_stage_reruns_when_its_config_changes(mock_config, toy_records):
    source = save_dataset(toy_records[:2], mock_config.output_dir + "-input.jsonl")
    config = mock_config.model_copy(update={"dataset": str(source), "combos_per_question": 1})
    first = run_pipeline(config, ["ingest", "rephrase"])
    assert len(load_dataset(config.output_dir + "/rephrased.jsonl")) == 2 + 2 * 14

    again = run_pipeline(config, ["ingest", "rephrase"])
    assert again == first
    changed = run_pipeline(config.model_copy(update={"combos_per_question": 0}), ["ingest", "rephrase"])
    assert changed["stages"]["ingest"] == first["stages"]["ingest"]
    assert changed["stages"]["rephrase"] != first["stages"]["rephrase"]


def _small_dataset(tmp_path, toy_records):
    return save_dataset(toy_records[:8], tmp_path / "small.jsonl")


def _pipeline_args(dataset, out):
    return ["pipeline", "--mock-llm", "--dataset", str(dataset), "--output-dir", str(out), "--seed", "7",
            "--set", "combos_per_question=0", "--set", "ga.population=12", "--set", "ga.generations=10",
            "--set", "ga.survivors=4"]


@pytest.mark.slow
def test_mock_pipeline_end_to_end(tmp_path, toy_records, capsys):
    dataset = _small_dataset(tmp_path, toy_records)
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(_pipeline_args(dataset, first)) == EXIT_OK
    printed = capsys.readouterr().out
    assert "nodes\t" in printed
    for name in ARTIFACTS:
        assert (first / name).exists(), name

    optimizer = json.loads((first / "optimizer.json").read_text())
    assert len(optimizer["ours"]["vector"]) == 12
    assert sum(map(int, optimizer["single"]["vector"])) == 1
    assert optimizer["original"]["vector"] == "0" * 12

    manifest = (first / MANIFEST).read_text()
    assert main(_pipeline_args(dataset, first)) == EXIT_OK
    assert (first / MANIFEST).read_text() == manifest

    assert main(_pipeline_args(dataset, second)) == EXIT_OK
    assert (second / "graph.json").read_text() == (first / "graph.json").read_text()
    assert (second / MANIFEST).read_text() == manifest
