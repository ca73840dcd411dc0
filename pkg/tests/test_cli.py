import json

import numpy as np
import pytest

from core.config import settings
from ingestion.pipeline import load_dataset, write_dataset
from main import build_parser, run_command
from models.data import Dataset


@pytest.fixture(autouse=True)
def small_grid(monkeypatch):
    monkeypatch.setattr(settings, "grid_size", 6)


@pytest.fixture
def simulated_file(tmp_path):
    path = tmp_path / "sim.csv"
    code = run_command(["simulate", "--p", "8", "--n", "1000", "--cr", "0.2", "--seed", "1", "--output", str(path)])
    assert code == 0
    return path


def test_bad_flags_exit_with_usage_error(capsys):
    assert run_command(["fit", "--penalty", "lasso", "--input", "x.csv"]) == 2
    assert run_command(["unknown"]) == 2
    assert "usage" in capsys.readouterr().err


def test_missing_required_options():
    assert run_command(["simulate", "--output", "x.csv"]) == 2
    assert run_command(["fit"]) == 2
    assert run_command(["fit", "--input", "x.csv", "--known-propensity", "0.5,1.5"]) == 2


def test_data_errors_exit_one(tmp_path, capsys):
    assert run_command(["fit", "--input", str(tmp_path / "missing.csv")]) == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("time,status,treat,source,x1\n1.0,1,1,1,0.1\n2.0,1,0,1,0.2\n0,1,1,0,0.3\n", encoding="utf-8")
    assert run_command(["fit", "--input", str(bad)]) == 1
    assert "fila 3" in capsys.readouterr().err


def test_simulate_writes_dataset_and_truth(simulated_file):
    d = load_dataset(simulated_file)
    assert (d.n, d.p) == (1000, 8)
    truth = json.loads((simulated_file.parent / "sim.csv.truth.json").read_text(encoding="utf-8"))
    assert truth["confounded"] is True
    assert len(truth["alpha"]) == 9
    assert truth["config"]["target_cr"] == 0.2


def test_fit_verdict_matches_simulated_truth(simulated_file, tmp_path):
    out = tmp_path / "fit.json"
    assert run_command(["fit", "--input", str(simulated_file), "--tuning", "bic", "--seed", "3", "--output", str(out)]) == 0
    payload = json.loads(out.read_text(encoding="utf-8"))
    assert payload["estimator"] == "RL.bic"
    assert payload["confounding"]["confounded"] is True
    assert set(payload["alpha"]) == {"(intercept)"} | {f"x{j}" for j in range(1, 9)}


def test_fit_output_is_reproducible(simulated_file, tmp_path):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    args = ["fit", "--input", str(simulated_file), "--tuning", "bic", "--seed", "5", "--threads", "2"]
    assert run_command(args + ["--output", str(first)]) == 0
    assert run_command(args + ["--output", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_rct_only_fit_has_no_beta(simulated_file, tmp_path):
    d = load_dataset(simulated_file)
    rct = write_dataset(
        Dataset(time=d.time, status=d.status, treatment=d.treatment, source=np.ones(d.n, dtype=int), covariates=d.covariates),
        tmp_path / "rct.csv",
    )
    out = tmp_path / "rct.json"
    assert run_command(["fit", "--input", str(rct), "--rct-only", "--tuning", "bic", "--output", str(out)]) == 0
    payload = json.loads(out.read_text(encoding="utf-8"))
    assert "beta" not in payload
    assert "confounding" not in payload
    assert payload["estimator"] == "RL.RCT"


def test_table_format(simulated_file, tmp_path):
    out = tmp_path / "fit.txt"
    assert run_command(["fit", "--input", str(simulated_file), "--tuning", "bic", "--format", "table", "--output", str(out)]) == 0
    text = out.read_text(encoding="utf-8")
    assert "RL.bic" in text and "(intercept)" in text


def test_bootstrap_command(simulated_file, tmp_path):
    out = tmp_path / "boot.json"
    args = ["bootstrap", "--input", str(simulated_file), "--tuning", "bic", "--bootstrap", "2", "--seed", "2", "--output", str(out)]
    assert run_command(args) == 0
    payload = json.loads(out.read_text(encoding="utf-8"))
    assert payload["bootstrap"]["B"] == 2
    assert "alpha.x1" in payload["bootstrap"]["se"]
    assert "beta.x1" in payload["bootstrap"]["se"]


def test_benchmark_command(tmp_path):
    out = tmp_path / "report.json"
    args = ["benchmark", "--preset", "table1", "--p", "8", "--n", "300", "--reps", "1", "--estimators", "RL.bic,RL.NAI", "--seed", "7", "--output", str(out)]
    assert run_command(args) == 0
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["preset"] == "table1"
    assert [m["estimator"] for m in report["metrics"]] == ["RL.bic", "RL.NAI"]
    assert (tmp_path / "report.json.replicates.jsonl").exists()


def test_parser_subcommands():
    parser = build_parser()
    args = parser.parse_args(["benchmark", "--preset", "table3", "--fast", "--no-confounded", "--seed", "1"])
    assert args.fast and args.confounded is False
    assert parser.parse_args(["fit", "--input", "d.csv", "--known-propensity", "0.5,0.4"]).known_propensity == [0.5, 0.4]
