"""Deterministic text serialization shared by all modules.

Floats are written with ``repr`` (shortest round-trip decimal), files use
LF line endings and JSON keys are sorted, so equal inputs give equal bytes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InputError


def fmt(x) -> str:
    if isinstance(x, (bool, int)) and not isinstance(x, float):
        return str(int(x))
    x = float(x)
    if x == 0.0:
        return "0.0"  # drop the sign of -0.0
    return repr(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n", encoding="utf-8") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(fmt(v) for v in row) + "\n")
    return path


def read_csv(path, required: Sequence[str] | None = None) -> tuple[list[str], list[list[float]]]:
    """Read a numeric CSV file. Malformed rows raise ``InputError`` naming the line."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        return [], []
    if required is not None:
        missing = [c for c in required if c not in header]
        if missing:
            raise InputError(f"{path}: missing columns {missing}")
    rows = []
    for lineno, raw in enumerate(reader, start=2):
        if not raw or all(not c.strip() for c in raw):
            continue
        if len(raw) != len(header):
            raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(raw)}")
        try:
            vals = [float(c) for c in raw]
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from exc
        if not all(math.isfinite(v) for v in vals):
            raise InputError(f"{path}:{lineno}: non-finite value")
        rows.append(vals)
    return header, rows


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n", encoding="utf-8") as f:
        f.write(dumps_json(obj))
    return path


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc


def check_schema(doc: dict, schema: str, where="document"):
    if not isinstance(doc, dict) or doc.get("schema") != schema:
        got = doc.get("schema") if isinstance(doc, dict) else type(doc).__name__
        raise InputError(f"{where}: expected schema {schema!r}, got {got!r}")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
