"""Tests for the command-line surface.

These tests verify:
1. Each subcommand writes a report with the documented fields
2. Exit codes: 0 success, 1 domain error, 2 usage error
3. Reports are byte-identical across reruns with timestamps off
"""

import json

import numpy as np
import pytest

from src.cli import cli_dispatch
from src.config import get_settings
from src.dataset_io import read_embeddings, write_embeddings
from src.embeddings import EmbeddingSet
from tests.conftest import make_longtail

CIFAR10_LT = [5000, 2997, 1796, 1077, 645, 387, 232, 139, 83, 50]


@pytest.fixture(autouse=True)
def _fresh_settings(monkeypatch):
    monkeypatch.delenv("FDG_TIMESTAMPS", raising=False)
    monkeypatch.setenv("FDG_THREADS", "1")
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def train_file(tmp_path):
    path = tmp_path / "train.bin"
    write_embeddings(make_longtail({0: 200, 1: 15, 2: 5}), path)
    return path


def run(argv, tmp_path):
    out = tmp_path / "report.json"
    code = cli_dispatch([*argv, "--out", str(out), "--no-timestamp"])
    report = json.loads(out.read_text(encoding="utf-8")) if out.exists() else None
    return code, report


# ============================================================
# Simple measurements
# ============================================================

def test_fdg_command_reports_volumes(tmp_path):
    """Should report both volumes and the FDG for two CSV files."""
    base, aug = tmp_path / "b.csv", tmp_path / "a.csv"
    write_embeddings(EmbeddingSet([[1.0, 0.0], [-1.0, 0.0]], [0, 0]), base)
    write_embeddings(EmbeddingSet([[0.0, 3.0]], [0]), aug)
    code, report = run(["fdg", "--base", str(base), "--aug", str(aug)], tmp_path)
    assert code == 0
    results = report["results"]
    assert {"v_base", "v_joint", "fdg", "lower_bound"} <= set(results)
    assert results["fdg"] == pytest.approx(1.321928, abs=1e-6)
    assert report["command"] == "fdg"
    assert "timestamp" not in report
    assert set(report) == {"command", "config", "results", "versions", "seed"}


def test_volume_command(tmp_path):
    """Should report the volume of a single set."""
    path = tmp_path / "one.csv"
    write_embeddings(EmbeddingSet([[2.0, 0.0]], [0]), path)
    code, report = run(["volume", "--input", str(path), "--no-center"], tmp_path)
    assert code == 0
    assert report["results"]["volume"] == pytest.approx(1.160964, abs=1e-6)


def test_partition_command(tmp_path):
    """Should split a counts file into head and tail."""
    counts = tmp_path / "counts.json"
    counts.write_text(json.dumps(CIFAR10_LT), encoding="utf-8")
    code, report = run(["partition", "--counts", str(counts), "--threshold", "0.9"], tmp_path)
    assert code == 0
    assert report["results"]["h"] == 5
    assert report["results"]["imbalance_factor"] == 100.0


def test_partition_without_tail_exits_1(tmp_path, capsys):
    """Should exit 1 when every class falls in the head."""
    counts = tmp_path / "counts.json"
    counts.write_text(json.dumps({"0": 90, "1": 10}), encoding="utf-8")
    code, report = run(["partition", "--counts", str(counts)], tmp_path)
    assert code == 1
    assert report is None
    assert any(line.startswith("error: ") for line in capsys.readouterr().err.splitlines())


def test_profile_command(tmp_path, train_file):
    """Should rank classes by semantic scale."""
    code, report = run(["profile", "--input", str(train_file)], tmp_path)
    assert code == 0
    assert report["results"]["imbalance_factor"] == 40.0
    assert len(report["results"]["scale_ranking"]) == 3


# ============================================================
# Pipeline commands
# ============================================================

def test_augment_command_writes_balanced_set(tmp_path, train_file):
    """Should write the augmented set and report the tail mean FDG."""
    out_data = tmp_path / "aug.csv"
    code, report = run(["augment", "--input", str(train_file), "--kind", "variance_transfer",
                        "--out-data", str(out_data), "--include-base", "--seed", "3"], tmp_path)
    assert code == 0
    assert report["seed"] == 3
    assert report["config"]["augmenter"]["kind"] == "variance_transfer"
    balanced = read_embeddings(out_data)
    assert balanced.counts() == {0: 200, 1: 200, 2: 200}


def test_select_command(tmp_path, train_file):
    """Should report a selection plan for each tail class."""
    code, report = run(["select", "--input", str(train_file), "--k", "10",
                        "--pool-multiplier", "1.5", "--direction", "minimize"], tmp_path)
    assert code == 0
    plans = report["results"]["plans"]
    assert {int(c) for c in plans} == {1, 2}
    assert all(p["direction"] == "minimize" for p in plans.values())


def test_sweep_command_writes_sets_and_index(tmp_path, train_file):
    """Should write kept sets ordered by FDG with an index."""
    out_dir = tmp_path / "sets"
    code, report = run(["sweep", "--input", str(train_file), "--mode", "stochastic",
                        "--m-generate", "10", "--m-keep", "4", "--out-dir", str(out_dir)], tmp_path)
    assert code == 0
    index = json.loads((out_dir / "index.json").read_text(encoding="utf-8"))
    assert len(index) == 4
    fdgs = [row["fdg_tail"] for row in index]
    assert fdgs == sorted(fdgs)
    assert sorted(p.name for p in out_dir.glob("set_*.bin")) == [f"set_{i:03d}.bin" for i in range(4)]
    assert report["results"]["kept"] == 4


def test_sweep_out_dir_on_a_file_exits_1(tmp_path, train_file, capsys):
    """Should exit 1 with an error line when --out-dir names an existing file."""
    blocker = tmp_path / "blocker"
    blocker.write_text("x", encoding="utf-8")
    code = cli_dispatch(["sweep", "--input", str(train_file), "--m-generate", "4", "--m-keep", "2",
                         "--out-dir", str(blocker), "--no-timestamp", "--out", str(tmp_path / "r.json")])
    assert code == 1
    assert any(line.startswith("error: ") for line in capsys.readouterr().err.splitlines())
    assert not (tmp_path / "r.json").exists()


def test_reports_are_reproducible(tmp_path, train_file):
    """Reruns with timestamps off produce identical bytes."""
    argv = ["sweep", "--input", str(train_file), "--m-generate", "6", "--m-keep", "3", "--seed", "2"]
    first, second = tmp_path / "r1.json", tmp_path / "r2.json"
    assert cli_dispatch([*argv, "--out", str(first), "--no-timestamp"]) == 0
    assert cli_dispatch([*argv, "--out", str(second), "--no-timestamp"]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_config_file_and_flag_override(tmp_path, train_file):
    """Flags should override values from the config file."""
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"m_generate": 5, "m_keep": 2, "seed": 9}), encoding="utf-8")
    code, report = run(["sweep", "--input", str(train_file), "--config", str(config), "--m-keep", "3"], tmp_path)
    assert code == 0
    assert report["config"]["m_generate"] == 5
    assert report["config"]["m_keep"] == 3
    assert report["seed"] == 9


def test_unknown_config_key_exits_1(tmp_path, train_file):
    """Should exit 1 for a config file with an unknown key."""
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"m_generat": 5}), encoding="utf-8")
    code, _ = run(["sweep", "--input", str(train_file), "--config", str(config)], tmp_path)
    assert code == 1


# ============================================================
# Synthetic data
# ============================================================

def test_gen_command(tmp_path):
    """Should write train and test sets with the requested counts."""
    train, test = tmp_path / "train.csv", tmp_path / "test.csv"
    code, report = run(["gen", "--out-train", str(train), "--out-test", str(test), "--classes", "2",
                        "--imbalance-factor", "100", "--n-max", "1000"], tmp_path)
    assert code == 0
    assert read_embeddings(train).counts() == {0: 1000, 1: 10}
    assert report["results"]["tail_classes"] == [1]


def test_experiment_command_writes_csv(tmp_path):
    """Should write one CSV row per seed and regime."""
    config = tmp_path / "exp.json"
    config.write_text(json.dumps({"seeds": 2, "synth": {"num_classes": 3, "imbalance_factor": 100.0,
                                                        "observed_fraction": 0.25, "n_test_per_class": 100}}),
                      encoding="utf-8")
    csv_path = tmp_path / "rows.csv"
    code, report = run(["experiment", "--config", str(config), "--csv", str(csv_path)], tmp_path)
    assert code == 0
    lines = csv_path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "regime,seed,fdg_tail,balanced_accuracy"
    assert len(lines) == 7
    assert len(report["results"]["rows"]) == 6


# ============================================================
# Usage errors
# ============================================================

def test_missing_subcommand_is_usage_error():
    """No subcommand - exit 2."""
    assert cli_dispatch([]) == 2


def test_unknown_flag_is_usage_error(capsys):
    """Should exit 2 and print usage for an unknown flag."""
    assert cli_dispatch(["volume", "--bogus"]) == 2
    assert "usage:" in capsys.readouterr().err


def test_missing_file_exits_1(tmp_path):
    """Should exit 1 when the input file does not exist."""
    code, _ = run(["volume", "--input", str(tmp_path / "nope.bin")], tmp_path)
    assert code == 1


def test_report_to_stdout(tmp_path, capsys):
    """Should print the report to stdout when --out is omitted."""
    counts = tmp_path / "counts.json"
    counts.write_text(json.dumps({"0": 95, "1": 5}), encoding="utf-8")
    assert cli_dispatch(["partition", "--counts", str(counts), "--no-timestamp"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["results"]["tail"] == [1]
    assert np.isclose(report["results"]["h_r"], 0.95)
