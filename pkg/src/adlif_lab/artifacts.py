"""Artifact I/O: CSV tables, JSON manifests and flat binary arrays.

Array bundles are a directory holding ``manifest.json`` plus one raw
little-endian file per array. The manifest records each array's file,
dtype string and shape, so the format is readable without numpy.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from . import __version__

ALLOWED_DTYPES = {"<f4", "<f8", "|u1", "<i4"}


def fmt_value(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return str(x)


def write_csv(path, rows: list[dict], columns: list[str] | None = None) -> Path:
    """Write dict rows with a header; floats use 17 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt_value(row[c]) for c in columns])
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        obj = float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def run_manifest(command: str, config: dict, seed, outputs: list[str] | None = None) -> dict:
    return {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "code_hash": code_hash(),
        "outputs": outputs or [],
    }


def code_hash() -> str:
    """Digest of the package sources; identifies the code that produced an artifact."""
    h = hashlib.sha256()
    root = Path(__file__).parent
    for p in sorted(root.rglob("*.py")):
        h.update(p.relative_to(root).as_posix().encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


def save_arrays(directory, arrays: dict[str, np.ndarray], meta: dict | None = None) -> Path:
    """Store arrays as raw little-endian files described by ``manifest.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = {}
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder not in ("|",) else arr.dtype
        if dt.str not in ALLOWED_DTYPES:
            raise ValueError(f"unsupported dtype {arr.dtype} for {name}")
        fname = f"{name}.bin"
        np.ascontiguousarray(arr, dtype=dt).tofile(d / fname)
        entries[name] = {"file": fname, "dtype": dt.str, "shape": list(arr.shape)}
    write_json(d / "manifest.json", {"arrays": entries, "meta": meta or {}})
    return d


def load_arrays(directory) -> tuple[dict[str, np.ndarray], dict]:
    d = Path(directory)
    man = read_json(d / "manifest.json")
    out = {}
    for name, e in man["arrays"].items():
        if e["dtype"] not in ALLOWED_DTYPES:
            raise ValueError(f"unsupported dtype {e['dtype']}")
        out[name] = np.fromfile(d / e["file"], dtype=np.dtype(e["dtype"])).reshape(e["shape"])
    return out, man.get("meta", {})

