"""File formats: sample CSVs, JSON documents, flat config files, atomic writes."""
from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import CalibrationError


def read_samples(path: str | os.PathLike) -> np.ndarray:
    """Two-column CSV with an optional header row; errors name the offending line."""
    pts = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise CalibrationError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                pts.append((float(row[0]), float(row[1])))
            except ValueError:
                if lineno == 1 and not pts:
                    continue   # header
                raise CalibrationError(f"{path}:{lineno}: non-numeric value in {row!r}") from None
    if not pts:
        raise CalibrationError(f"{path}: no samples")
    arr = np.array(pts, float)
    bad = np.nonzero(~np.all(np.isfinite(arr), axis=1))[0]
    if bad.size:
        raise CalibrationError(f"{path}: non-finite value in sample {int(bad[0]) + 1}")
    return arr


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_samples(path, points: np.ndarray) -> None:
    lines = ["x,y"] + [f"{x!r},{y!r}" for x, y in np.asarray(points, float).tolist()]
    atomic_write_text(path, "\n".join(lines) + "\n")


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> None:
    atomic_write_text(path, dump_json(obj))


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def read_config(path) -> dict:
    """``key = value`` lines (``#`` comments); a file starting with ``{`` is read as JSON."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        return {k.replace("-", "_"): v for k, v in json.loads(text).items()}
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = val
    return out
