import json

import numpy as np
import pytest

from artifact import storage


def test_dumps_is_canonical():
    a = {"b": np.float64(1.5), "a": [np.int64(2), np.array([1.0, np.nan])], "c": float("inf")}
    s = storage.dumps(a)
    assert s == storage.dumps(dict(reversed(list(a.items()))))
    back = json.loads(s)
    assert list(back) == ["a", "b", "c"]
    assert back["a"][1][1] == "nan" and back["c"] == "inf"


def test_report_is_versioned_and_byte_stable(tmp_path):
    body = {"x": np.arange(3.0), "ok": np.bool_(True)}
    p1 = storage.write_report(tmp_path / "a.json", "demo", body, "d" * 64)
    p2 = storage.write_report(tmp_path / "b.json", "demo", body, "d" * 64)
    assert p1.read_bytes() == p2.read_bytes()
    rep = storage.read_json(p1)
    assert rep["schema"] == storage.REPORT_SCHEMA and rep["kind"] == "demo"


def test_field_roundtrip(tmp_path, rng):
    data = rng.normal(size=(5, 7))
    storage.write_field(tmp_path / "g.bin", data, {"x": np.linspace(0, 1, 5), "orbit": np.arange(7)}, {"u": 0.02})
    back, meta = storage.read_field(tmp_path / "g.bin")
    assert np.array_equal(back, data)
    assert meta["shape"] == [5, 7] and meta["meta"]["u"] == 0.02
    assert (tmp_path / "g.bin").stat().st_size == data.size * 8


def test_field_rejects_mismatched_axes(tmp_path):
    with pytest.raises(ValueError):
        storage.write_field(tmp_path / "g.bin", np.zeros((3, 2)), {"x": [0, 1], "orbit": [0, 1]}, {})


def test_csv_roundtrip_keeps_full_precision(tmp_path):
    v = 0.1 + 0.2
    storage.write_csv(tmp_path / "t.csv", ["sample", "lhs"], [(0, v), (1, np.float64(2.5))])
    header, rows = storage.read_csv(tmp_path / "t.csv")
    assert header == ["sample", "lhs"]
    assert float(rows[0][1]) == v
