"""Tests for the report envelope and row dumps."""

import json

import numpy as np

from src.partitioning import partition_head_tail
from src.reports import build_report, dumps, write_json, write_rows_csv


def test_envelope_fields():
    """Should hold the report envelope fields."""
    report = build_report("partition", {"threshold": 0.9}, {"h": 1}, 7, timestamp=False)
    assert set(report) == {"command", "config", "results", "versions", "seed"}
    assert report["versions"]["fdg-toolkit"] == "0.1.0"
    assert "timestamp" in build_report("partition", {}, {}, None)


def test_dumps_handles_numpy_and_models():
    """Should serialize numpy values and pydantic models with sorted keys."""
    partition = partition_head_tail({0: 95, 1: 5})
    text = dumps({"b": np.float64(0.5), "a": np.arange(3), "p": partition, "flag": np.bool_(True)})
    payload = json.loads(text)
    assert list(payload) == ["a", "b", "flag", "p"]
    assert payload["a"] == [0, 1, 2]
    assert payload["p"]["tail"] == [1]


def test_write_json_and_rows(tmp_path):
    """Should write JSON and CSV rows to disk."""
    write_json({"x": 1}, tmp_path / "r.json")
    assert json.loads((tmp_path / "r.json").read_text(encoding="utf-8")) == {"x": 1}

    write_rows_csv(tmp_path / "rows.csv", ["regime", "value"], [("mid", 0.1), ("low", 2)])
    lines = (tmp_path / "rows.csv").read_text(encoding="utf-8").splitlines()
    assert lines == ["regime,value", "mid,0.10000000000000001", "low,2"]
