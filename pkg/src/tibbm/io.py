"""Result persistence: JSON summaries, CSV tables and whitespace plot files.

Every file starts with a header naming the config hash and master seed.  JSON
has no comment syntax, so there the header is the first key, ``"#"``.
Nothing time- or host-dependent is written, so identical configs give
byte-identical files.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
ENV_OUTPUT = "TIBBM_OUTPUT_DIR"
DEFAULT_OUTPUT = "tibbm_out"


class OutputError(OSError):
    pass


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def header(config: dict, seed) -> str:
    return f"tibbm schema={SCHEMA_VERSION} config_hash={config_hash(config)} seed={seed}"


def output_dir(path: str | None) -> Path:
    d = Path(path or os.environ.get(ENV_OUTPUT) or DEFAULT_OUTPUT)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {d}: {exc}") from exc
    if not os.access(d, os.W_OK):
        raise OutputError(f"output directory {d} is not writable")
    return d


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _open(path: Path):
    try:
        return open(path, "w", newline="")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def write_json(path: Path, payload: dict, config: dict, seed) -> Path:
    doc = {"#": header(config, seed), "schema_version": SCHEMA_VERSION, "config": config}
    doc.update(_clean(payload))
    with _open(path) as fh:
        json.dump(_clean(doc), fh, indent=2, sort_keys=False)
        fh.write("\n")
    return path


def write_csv(path: Path, columns: list[str], rows, config: dict, seed, notes: str | None = None) -> Path:
    with _open(path) as fh:
        fh.write(f"# {header(config, seed)}\n")
        fh.write(f"# columns: {', '.join(columns)}\n")
        if notes:
            fh.write(f"# {notes}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_plotfile(path: Path, columns: list[str], data, config: dict, seed) -> Path:
    arr = np.column_stack([np.asarray(c, dtype=float) for c in data])
    with _open(path) as fh:
        fh.write(f"# {header(config, seed)}\n")
        fh.write("# " + " ".join(columns) + "\n")
        for row in arr:
            fh.write(" ".join(_fmt(v) for v in row) + "\n")
    return path


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def read_comment_header(path: Path) -> str:
    with open(path) as fh:
        first = fh.readline().strip()
    if first.startswith("#"):
        return first.lstrip("# ")
    return json.loads(Path(path).read_text())["#"]
