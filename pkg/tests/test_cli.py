import csv
import json
import subprocess
import sys

import pytest

from artifact.cli import main
from artifact.storage import read_field, read_json

SMALL = ["--set", "vel.n=8", "--set", "space.n=60"]


def run(tmp_path, *args):
    return main(["--out", str(tmp_path), *SMALL, *args])


@pytest.mark.parametrize("bad", [["--set", "vel.n=9"], ["--set", "weight.theta=0.3"], ["--set", "bogus.key=1"]])
def test_invalid_config_exits_with_code_2(tmp_path, bad, capsys):
    assert main(["--out", str(tmp_path), *bad, "assemble"]) == 2
    assert "config error" in capsys.readouterr().err


def test_missing_config_file_exits_with_code_2(tmp_path):
    assert main(["--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path), "assemble"]) == 2


@pytest.mark.parametrize("lemma", ["chi", "velocity"])
def test_verify_writes_csv_table(tmp_path, lemma):
    assert run(tmp_path, "verify", "--lemma", lemma, "--samples", "2000") == 0
    name = f"verify_{lemma}"
    with open(tmp_path / f"{name}.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["sample", "lhs", "rhs", "margin"]
    assert len(rows) == 2001
    assert min(float(r[3]) for r in rows[1:]) >= -1e-12
    rep = read_json(tmp_path / f"{name}.json")
    assert rep["body"]["pass"] and rep["kind"] == f"verify-{lemma}"


def test_assemble_report_is_versioned_and_byte_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, "assemble") == 0
    assert run(b, "assemble") == 0
    ra, rb = (a / "assemble.json").read_bytes(), (b / "assemble.json").read_bytes()
    assert ra == rb
    rep = json.loads(ra)
    assert rep["schema"] and rep["kind"] == "assemble" and len(rep["config_digest"]) == 64


def test_seed_flag_changes_digest(tmp_path):
    run(tmp_path / "a", "assemble")
    main(["--out", str(tmp_path / "b"), "--seed", "7", *SMALL, "assemble"])
    da = read_json(tmp_path / "a" / "assemble.json")["config_digest"]
    db = read_json(tmp_path / "b" / "assemble.json")["config_digest"]
    assert da != db


def test_eigen_writes_one_record_per_u(tmp_path, capsys):
    assert run(tmp_path, "eigen", "--u", "0.01", "--u", "0.02") == 0
    lines = (tmp_path / "eigen.jsonl").read_text().splitlines()
    assert len(lines) == 2
    recs = [json.loads(ln) for ln in lines]
    assert [r["u"] for r in recs] == [0.01, 0.02]
    assert all(r["tau"] * r["u"] < 0 for r in recs)
    assert capsys.readouterr().out.count("\n") == 2


def test_solve_writes_fields_and_summary(tmp_path):
    assert run(tmp_path, "--threads", "2", "solve") == 0
    f, side = read_field(tmp_path / "f.bin")
    axes = side["axes"]
    assert [a["name"] for a in axes] == ["x", "orbit"]
    assert f.shape == tuple(len(a["values"]) for a in axes)
    assert side["meta"]["u"] == 0.02
    rep = read_json(tmp_path / "solve.json")["body"]
    assert rep["converged"]
    assert abs(rep["penalty_moments"]["max"]) < 1e-10
    for name in ("g.bin", "h.csv", "moments.csv", "convergence.csv"):
        assert (tmp_path / name).exists()


def test_console_entry_point_help():
    out = subprocess.run([sys.executable, "-m", "artifact.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("assemble", "eigen", "solve-linear", "solve", "verify", "norms", "report"):
        assert cmd in out.stdout
