"""Plain CSV tables: header row, LF endings, floats with 17 significant digits."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np


def fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def write_table(path, header, rows) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_columns(path, columns: dict) -> None:
    """Write equal-length columns given as ``{name: sequence}``."""
    names = list(columns)
    cols = [list(columns[n]) for n in names]
    write_table(path, names, zip(*cols))


def read_table(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def read_columns(path) -> dict:
    """Columns keyed by header name; numeric columns come back as float arrays."""
    header, rows = read_table(path)
    out = {}
    for k, name in enumerate(header):
        col = [r[k] for r in rows]
        try:
            out[name] = np.array([float(v) for v in col])
        except ValueError:
            out[name] = col
    return out
