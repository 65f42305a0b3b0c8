"""On-disk formats: raw float64 fields with JSON axis sidecars, CSV tables,
versioned byte-deterministic JSON reports, and the operator cache directory.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

REPORT_SCHEMA = "artifact.report/1"


def _plain(obj: Any) -> Any:
    """JSON-ready copy: numpy scalars/arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return float(repr(v))
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2, ensure_ascii=True) + "\n"


def write_json(path: str | Path, obj: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def write_report(path: str | Path, kind: str, body: dict, config_digest: str) -> Path:
    """Versioned report: identical inputs give byte-identical files."""
    return write_json(path, {"schema": REPORT_SCHEMA, "kind": kind, "config_digest": config_digest, "body": body})


def read_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text())


def write_field(path: str | Path, data: np.ndarray, axes: dict[str, Sequence[float] | np.ndarray],
                meta: dict | None = None) -> Path:
    """Row-major float64 ``.bin`` plus ``.json`` sidecar naming the axes in order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.ascontiguousarray(data, dtype="<f8")
    if len(axes) != arr.ndim:
        raise ValueError(f"{len(axes)} axes for a {arr.ndim}-d array")
    for (name, vals), n in zip(axes.items(), arr.shape):
        if np.asarray(vals).shape[0] != n:
            raise ValueError(f"axis {name!r} has {np.asarray(vals).shape[0]} entries, data has {n}")
    arr.tofile(path)
    side = {"dtype": "float64", "byte_order": "little", "order": "C", "shape": list(arr.shape),
            "axes": [{"name": k, "values": np.asarray(v).tolist()} for k, v in axes.items()], "meta": meta or {}}
    write_json(path.with_suffix(".json"), side)
    return path


def read_field(path: str | Path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    side = read_json(path.with_suffix(".json"))
    data = np.fromfile(path, dtype="<f8").reshape(side["shape"])
    return data, side


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def _cell(v: Any) -> Any:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
