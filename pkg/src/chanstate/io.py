"""Deterministic CSV and manifest output with atomic writes."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

__all__ = ["atomic_write", "config_hash", "emit_csv", "format_value", "read_csv"]


def format_value(value: Any, kind: type) -> str:
    if kind is float:
        return f"{float(value):.6f}"
    if kind is bool:
        return "true" if value else "false"
    if kind is int:
        return str(int(value))
    return str(value)


def atomic_write(path: str | Path, text: str) -> None:
    """Write via a temp file in the same directory and rename over ``path``."""
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


def emit_csv(rows: Iterable[Mapping[str, Any]], schema: Sequence[tuple[str, type]], path: str | Path) -> None:
    """Write rows in the given order; floats get 6 decimals, lines end in LF."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([name for name, _ in schema])
    for i, row in enumerate(rows):
        missing = [name for name, _ in schema if name not in row]
        if missing:
            raise ValueError(f"row {i} is missing columns {missing}")
        writer.writerow([format_value(row[name], kind) for name, kind in schema])
    try:
        atomic_write(path, buf.getvalue())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def config_hash(config: Mapping[str, Any]) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()
