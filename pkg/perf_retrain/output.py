"""CSV and JSON artifacts.

Every artifact carries the package version and the resolved configuration.
Floats are written with ``repr`` (shortest round-trip form), independent of
the locale.
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._version import __version__


def plain(value):
    """JSON-compatible copy of ``value``; NaN becomes ``null`` and infinities ``"inf"``/``"-inf"``."""
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [plain(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def json_text(payload: dict, config: dict) -> str:
    document = {"version": __version__, "config": plain(config), **plain(payload)}
    return json.dumps(document, indent=2, allow_nan=False) + "\n"


def csv_text(rows: Iterable[dict], columns: Sequence[str], config: dict) -> str:
    """Rows under ``# perf_retrain <version>`` and ``# config <json>`` comment lines."""
    buffer = io.StringIO()
    buffer.write(f"# perf_retrain {__version__}\n")
    buffer.write(f"# config {json.dumps(plain(config), separators=(',', ':'), allow_nan=False)}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(column)) for column in columns])
    return buffer.getvalue()


def columns_of(rows: Sequence[dict]) -> list[str]:
    """Union of row keys in first-seen order."""
    columns: list[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    return columns


def emit(text: str, path: str | Path | None = None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    with open(Path(path), "w", encoding="utf-8", newline="\n") as handle:
        handle.write(text)
