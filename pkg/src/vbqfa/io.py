"""CSV panels and JSON run reports."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InputError
from .panel import Panel

NUMBER_FORMAT = "%.12g"
EXACT_FORMAT = "%.17g"  # enough digits to round-trip any double


def read_panel_csv(path) -> Panel:
    """Read a panel whose first row is ``time_label,series_1,...,series_n``.

    Cells are parsed with ``float`` (locale independent). Empty cells, ``NA``
    style markers and non-finite numbers are rejected with their row and
    column; nothing is imputed.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"input file {path} does not exist")
    try:
        with path.open(newline="", encoding="utf-8-sig") as fh:
            rows = list(csv.reader(fh))
    except UnicodeDecodeError as exc:
        raise InputError(f"{path} is not UTF-8 text: {exc}") from exc
    rows = [row for row in rows if any(cell.strip() for cell in row)]
    if not rows:
        raise InputError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2:
        raise InputError(f"{path}: header needs a time column and at least one series")
    series = header[1:]
    if len(set(series)) != len(series):
        raise InputError(f"{path}: duplicate series labels in header")
    width = len(header)
    times, values = [], []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise InputError(f"{path}: row {line} has {len(row)} cells, expected {width}")
        times.append(row[0].strip())
        parsed = []
        for col, cell in enumerate(row[1:], start=2):
            text = cell.strip()
            try:
                v = float(text)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                what = "missing value" if text.upper() in {"", "NA", "NAN", "N/A", "NULL"} else (
                    f"malformed number {text!r}"
                )
                raise InputError(
                    f"{path}: {what} at row {line}, column {col} ({header[col - 1]})"
                )
            parsed.append(v)
        values.append(parsed)
    if not values:
        raise InputError(f"{path} has a header but no data rows")
    return Panel(np.array(values), tuple(times), tuple(series), header[0] or "time")


def _format(v: float, fmt: str) -> str:
    return fmt % v


def write_table_csv(
    path,
    values,
    row_labels: Sequence[str],
    col_labels: Sequence[str],
    index_name: str = "time",
    fmt: str = NUMBER_FORMAT,
) -> Path:
    """Write a labelled matrix as UTF-8 CSV with ``fmt`` number formatting."""
    values = np.asarray(values, dtype=float)
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([index_name, *col_labels])
        for label, row in zip(row_labels, values):
            writer.writerow([label, *(_format(v, fmt) for v in row)])
    return path


def write_panel_csv(path, panel: Panel, exact: bool = False) -> Path:
    """Write a panel; ``exact`` uses 17 significant digits so it reads back bit for bit."""
    return write_table_csv(
        path,
        panel.values,
        panel.time_labels,
        panel.series_labels,
        panel.time_name,
        EXACT_FORMAT if exact else NUMBER_FORMAT,
    )


def write_json(path, payload) -> Path:
    path = Path(path)
    text = json.dumps(payload, indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def schema_path() -> Path:
    return Path(__file__).with_name("report.schema.json")


def load_schema() -> dict:
    return json.loads(schema_path().read_text(encoding="utf-8"))
