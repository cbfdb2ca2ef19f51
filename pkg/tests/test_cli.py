import io
import json
import os

import pandas as pd
import pytest

from main import main

TINY = ["--set", "model.embed=4", "--set", "model.hidden=5", "--set", "selector.filters=3",
        "--set", "vocab.placeholders=4", "--set", "log.level=WARNING"]


@pytest.fixture(autouse=True)
def isolated(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    for name in list(os.environ):
        if name.startswith("C2F_"):
            monkeypatch.delenv(name)


def gen_data(out_dir, seed=2, n=30):
    return main(["gen-data", "--n", str(n), "--seed", str(seed), "--out-dir", str(out_dir),
                 "--min-sentences", "2", "--max-sentences", "5"])


@pytest.fixture
def data_dir(tmp_path):
    assert gen_data(tmp_path / "data") == 0
    return tmp_path / "data"


@pytest.fixture
def run_dir(tmp_path, data_dir):
    out = tmp_path / "run"
    code = main(["train", "--data-dir", str(data_dir), "--out-dir", str(out), "--epochs", "1", "--batch-size", "4",
                 *TINY])
    assert code == 0
    return out


def test_gen_data_is_reproducible(tmp_path):
    assert gen_data(tmp_path / "a") == 0
    assert gen_data(tmp_path / "b") == 0
    for name in ("train.jsonl", "dev.jsonl", "test.jsonl", "generator.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert len((tmp_path / "a" / "train.jsonl").read_text().splitlines()) == 21


def test_unknown_flag_is_a_usage_error(capsys):
    assert main(["train", "--bogus"]) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_config_key_is_a_usage_error(capsys):
    assert main(["stats", "--data", "x.jsonl", "--set", "bad.key=1"]) == 2
    err = capsys.readouterr().err
    assert "error: ConfigError" in err
    assert "bad.key" in err


def test_train_needs_data(capsys):
    assert main(["train", *TINY]) == 2
    assert "error: UsageError" in capsys.readouterr().err


def test_missing_input_file(capsys):
    assert main(["stats", "--data", "missing.jsonl"]) == 1
    assert capsys.readouterr().err.startswith("error:")


def test_train_writes_a_run(run_dir):
    for name in ("best.npz", "metrics.csv", "vocab.json", "config.json"):
        assert (run_dir / name).exists()
    metrics = pd.read_csv(run_dir / "metrics.csv")
    assert sorted(set(metrics["epoch"])) == [0, 1]


def test_answer_from_flags(run_dir, capsys):
    code = main(["answer", "--run-dir", str(run_dir), "--query", "color of kaiborou",
                 "--document", "Kaiborou has color red. Kaiborou was founded in 1450."])
    assert code == 0
    result = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert set(result) == {"sentence_index", "probability", "answer", "log_prob"}
    assert result["sentence_index"] in (0, 1)
    assert 0.0 <= result["probability"] <= 1.0
    assert isinstance(result["answer"], str)


def test_answer_from_stdin(run_dir, data_dir, capsys, monkeypatch):
    line = (data_dir / "dev.jsonl").read_text().splitlines()[0]
    monkeypatch.setattr("sys.stdin", io.StringIO(line + "\n"))
    assert main(["answer", "--run-dir", str(run_dir)]) == 0
    assert "answer" in json.loads(capsys.readouterr().out.strip().splitlines()[-1])


def test_evaluate_writes_a_report(run_dir, data_dir, tmp_path):
    out = tmp_path / "report.json"
    assert main(["evaluate", "--run-dir", str(run_dir), "--data", str(data_dir / "test.jsonl"),
                 "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["num_examples"] == 6
    assert 0.0 <= report["answer_acc"] <= 1.0


def test_evaluate_oracle_baseline(run_dir, data_dir, tmp_path):
    out = tmp_path / "oracle.json"
    assert main(["evaluate", "--run-dir", str(run_dir), "--data", str(data_dir / "test.jsonl"),
                 "--baseline", "oracle", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["oracle"] is True
    assert report["sent_acc"] == 1.0


def test_base_baseline_needs_a_base_run(run_dir, data_dir):
    assert main(["evaluate", "--run-dir", str(run_dir), "--data", str(data_dir / "test.jsonl"),
                 "--baseline", "base"]) == 2


def test_benchmark(run_dir, data_dir, tmp_path):
    out = tmp_path / "bench.csv"
    assert main(["benchmark", "--run-dir", str(run_dir), "--data", str(data_dir / "dev.jsonl"),
                 "--batch-sizes", "1,2", "--k", "1", "--limit", "3", "--out", str(out)]) == 0
    table = pd.read_csv(out)
    assert list(table["config"]) == ["base", "hierarchical-k1"] * 2


def test_stats(data_dir, tmp_path, capsys):
    out = tmp_path / "stats.csv"
    assert main(["stats", "--data", str(data_dir / "train.jsonl"), str(data_dir / "dev.jsonl"),
                 "--out", str(out)]) == 0
    assert "answer_present_pct" in capsys.readouterr().out
    table = pd.read_csv(out)
    assert list(table["dataset"]) == ["train", "dev"]
    assert (table["answer_present_pct"] == 100.0).all()


@pytest.mark.parametrize("flags", [
    ["--decay", "0.1"],
    ["--k", "0"],
    ["--set", "limits.sentences=40"],
    ["--set", "train.lr=0"],
])
def test_out_of_range_config_is_a_usage_error(flags, capsys):
    assert main(["train", "--data-dir", "nowhere", *flags, *TINY]) == 2
    err = capsys.readouterr().err
    assert "usage" in err
    assert "error: ConfigError" in err


def test_evaluate_split_by_name(run_dir, data_dir, tmp_path):
    out = tmp_path / "report.json"
    assert main(["evaluate", "--run-dir", str(run_dir), "--split", "test", "--data-dir", str(data_dir),
                 "--out", str(out)]) == 0
    assert json.loads(out.read_text())["num_examples"] == 6


def test_evaluate_applies_config_overrides(run_dir, data_dir, tmp_path):
    saved_hash = json.loads((run_dir / "config.json").read_text())["config_hash"]
    plain, overridden = tmp_path / "plain.json", tmp_path / "overridden.json"
    args = ["evaluate", "--run-dir", str(run_dir), "--split", "dev", "--data-dir", str(data_dir)]
    assert main([*args, "--out", str(plain)]) == 0
    assert main([*args, "--out", str(overridden), "--set", "base.tokens=10"]) == 0
    assert json.loads(plain.read_text())["config_hash"] == saved_hash
    assert json.loads(overridden.read_text())["config_hash"] != saved_hash


def test_evaluate_rejects_bad_overrides(run_dir, data_dir):
    assert main(["evaluate", "--run-dir", str(run_dir), "--split", "dev", "--data-dir", str(data_dir),
                 "--set", "train.decay=0.1"]) == 2
