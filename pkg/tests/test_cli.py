import json

import pytest
from click.testing import CliRunner

from pmp_reasoner.cli.main import cli
from pmp_reasoner.infrastructure.dataset_store import read_dataset
from pmp_reasoner.infrastructure.report_store import read_metrics, read_reports

TINY_CONFIG = """\
seed: 0
k: 3
updates: 2
queries: 2
train_rollouts: 4
eval_rollouts: 2
model: pmp
iterations: 2
batch_size: 2
hidden_dim: 4
processor_steps: 1
seeds: [0]
log_every: 1
eval_every: 1
checkpoint_every: 0
"""


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "tiny.yml"
    path.write_text(TINY_CONFIG)
    return path


def gen(runner, out, *extra):
    args = ["gen", "--seed", "5", "--k", "3", "--updates", "2", "--queries", "2", "--count", "3", "--out", str(out)]
    return runner.invoke(cli, args + list(extra))


def test_help(runner):
    result = runner.invoke(cli, [])
    assert result.exit_code == 0
    assert "oracle-test" in result.output


def test_gen_is_deterministic(runner, tmp_path):
    first = gen(runner, tmp_path / "a.jsonl")
    second = gen(runner, tmp_path / "b.jsonl")
    assert first.exit_code == 0, first.output
    assert second.exit_code == 0, second.output
    assert "effective config (gen)" in first.output
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    rollouts = read_dataset(tmp_path / "a.jsonl")
    assert len(rollouts) == 3
    assert all(r.size == 3 and len(r.ops) == 4 for r in rollouts)


def test_oracle_test(runner):
    result = runner.invoke(cli, ["oracle-test", "--k-max", "4", "--trials", "5", "--updates", "3"])
    assert result.exit_code == 0, result.output
    assert "all snapshot queries match brute force" in result.output


def test_train_eval_compare(runner, tmp_path, config_file):
    data = tmp_path / "eval.jsonl"
    run_dir = tmp_path / "run"
    assert gen(runner, data).exit_code == 0

    trained = runner.invoke(cli, ["train", "--config", str(config_file), "--out", str(run_dir)])
    assert trained.exit_code == 0, trained.output
    assert "effective config (train)" in trained.output
    assert (run_dir / "seed_0.npz").exists()
    assert "Training summary" in trained.output
    last = read_metrics(run_dir / "metrics.csv")[-1]
    assert last["iteration"] == "2"
    assert 0.0 <= float(last["eval_ood_query_accuracy"]) <= 1.0
    assert "hidden_dim: 4" in (run_dir / "config.yml").read_text()

    report_path = tmp_path / "pmp.jsonl"
    evaluated = runner.invoke(
        cli,
        ["eval", "--checkpoint", str(run_dir / "seed_0.npz"), "--data", str(data),
         "--name", "ood", "--out", str(report_path), "--trace", str(tmp_path / "trace.jsonl")],
    )
    assert evaluated.exit_code == 0, evaluated.output
    (report,) = read_reports(report_path)
    assert report.dataset == "ood"
    assert len(report.seeds) == 1
    assert len((tmp_path / "trace.jsonl").read_text().splitlines()) == 3 * 4

    table_path = tmp_path / "table.json"
    compared = runner.invoke(cli, ["compare", "--reports", str(report_path), "--out", str(table_path)])
    assert compared.exit_code == 0, compared.output
    table = json.loads(table_path.read_text())
    assert [row["model"] for row in table["rows"]] == ["pmp"]


def test_train_with_data_and_overrides(runner, tmp_path, config_file):
    data = tmp_path / "train.jsonl"
    assert gen(runner, data).exit_code == 0
    result = runner.invoke(
        cli,
        ["-c", str(config_file), "train", "--data", str(data), "--out", str(tmp_path / "run"),
         "--model", "overwrite", "--seed", "3", "--iterations", "1"],
    )
    assert result.exit_code == 0, result.output
    assert (tmp_path / "run" / "seed_3.npz").exists()


def test_compare_refuses_different_datasets(runner, tmp_path, config_file):
    run_dir = tmp_path / "run"
    assert runner.invoke(cli, ["train", "--config", str(config_file), "--out", str(run_dir)]).exit_code == 0

    reports = []
    for seed in ("1", "2"):
        data = tmp_path / f"data_{seed}.jsonl"
        runner.invoke(cli, ["gen", "--seed", seed, "--k", "3", "--count", "2", "--out", str(data)])
        out = tmp_path / f"report_{seed}.jsonl"
        result = runner.invoke(
            cli,
            ["eval", "--checkpoint", str(run_dir / "seed_0.npz"), "--data", str(data),
             "--model", "pmp", "--name", "same", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        reports += ["--reports", str(out)]

    result = runner.invoke(cli, ["compare"] + reports)
    assert result.exit_code == 1
    assert "different files" in result.output


def test_invalid_config(runner, tmp_path):
    bad = tmp_path / "bad.yml"
    bad.write_text("hidden_size: 4\n")
    result = runner.invoke(cli, ["train", "--config", str(bad), "--out", str(tmp_path / "run")])
    assert result.exit_code == 1
    assert "hidden_size" in result.output


def test_missing_checkpoint(runner, tmp_path):
    data = tmp_path / "d.jsonl"
    assert gen(runner, data).exit_code == 0
    result = runner.invoke(
        cli,
        ["eval", "--checkpoint", str(tmp_path / "nope.npz"), "--data", str(data), "--out", str(tmp_path / "r.jsonl")],
    )
    assert result.exit_code != 0


def test_eval_reports_impossible_records(runner, tmp_path):
    data = tmp_path / "d.jsonl"
    assert gen(runner, data).exit_code == 0
    first, second = data.read_text().splitlines()[:2]
    raw = json.loads(second)
    raw["ops"][-1]["s"] = 7
    data.write_text(first + "\n" + json.dumps(raw) + "\n")
    checkpoint = tmp_path / "seed_0.npz"
    checkpoint.write_bytes(b"unused")

    result = runner.invoke(
        cli, ["eval", "--checkpoint", str(checkpoint), "--data", str(data), "--out", str(tmp_path / "r.jsonl")]
    )
    assert result.exit_code == 1
    assert "line 2" in result.output
