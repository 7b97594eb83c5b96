"""Result tables and their byte-stable CSV serialisation."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["Table", "write_csv", "read_csv", "write_meta", "meta_path", "format_value"]


@dataclass
class Table:
    columns: list[str]
    rows: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows])

    def __len__(self) -> int:
        return len(self.rows)


def format_value(value) -> str:
    """Floats with 17 significant digits (exact round trip); sequences joined by ``;``."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, (list, tuple, np.ndarray)):
        return ";".join(format_value(v) for v in np.ravel(np.asarray(value, dtype=object)))
    return str(value)


def write_csv(table: Table, path) -> None:
    """Header row then one line per record; identical tables give identical bytes."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(table.columns)
            for row in table.rows:
                writer.writerow([format_value(row.get(c)) for c in table.columns])
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc


def read_csv(path) -> Table:
    """Parse a CSV written by ``write_csv``; numeric cells come back as float."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        columns = next(reader)
        rows = [{c: _parse(v) for c, v in zip(columns, line)} for line in reader]
    return Table(columns, rows)


def _parse(cell: str):
    if cell == "":
        return None
    try:
        return float(cell)
    except ValueError:
        return cell


def meta_path(path) -> Path:
    return Path(str(path) + ".meta.json")


def write_meta(table: Table, path) -> Path:
    """Sidecar JSON next to the CSV holding run metadata (benchmarks, settings)."""
    target = meta_path(path)
    target.write_text(json.dumps(_jsonable(table.meta), indent=2, sort_keys=True) + "\n")
    return target


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    return value
