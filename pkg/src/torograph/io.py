"""CSV ingestion, plot-data export and atomic file output."""

import csv
import json
import logging
import math
import os
import tempfile

import numpy as np

from .core import AngleMatrix
from .errors import InvalidArgumentError, ParseError

logger = logging.getLogger(__name__)


def ingest_csv(path, unit: str = "radians") -> AngleMatrix:
    """Read a header-plus-numbers CSV of angles and wrap into (-pi, pi].

    Rows are numbered from 1 after the header in error messages.
    """
    if unit not in ("radians", "degrees"):
        raise InvalidArgumentError(f"unknown angle unit {unit!r}")
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise ParseError(f"input file {path} does not exist") from None
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise ParseError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if len(rows) < 2:
        raise ParseError(f"{path} has a header but no data rows")
    if len(set(header)) != len(header) or any(not h for h in header):
        raise ParseError(f"{path}: column names must be non-empty and distinct", row=0)
    p = len(header)
    values = np.empty((len(rows) - 1, p))
    for r, row in enumerate(rows[1:], start=1):
        if len(row) != p:
            raise ParseError(f"row {r} has {len(row)} cells, expected {p}", row=r)
        for c, cell in enumerate(row):
            cell = cell.strip()
            if not cell:
                raise ParseError(f"missing value at row {r}, column {header[c]}", row=r, column=header[c])
            try:
                x = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric value {cell!r} at row {r}, column {header[c]}",
                                 row=r, column=header[c]) from None
            if not math.isfinite(x):
                raise ParseError(f"non-finite value at row {r}, column {header[c]}", row=r, column=header[c])
            values[r - 1, c] = x
    if unit == "degrees":
        values = np.deg2rad(values)
    data = AngleMatrix(values, tuple(header))
    logger.info("read %s: n=%d, p=%d", path, data.n, data.p)
    return data


def format_float(x) -> str:
    return format(float(x), ".17g")


def matrix_csv(header, values) -> str:
    lines = [",".join(header)]
    lines += [",".join(format_float(v) for v in row) for row in np.atleast_2d(values)]
    return "\n".join(lines) + "\n"


def atomic_write(path, text: str):
    """Write ``text`` to ``path`` through a temporary file and rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(doc) -> str:
    """Deterministic JSON: sorted keys, non-finite floats as null."""
    return json.dumps(_clean(doc), sort_keys=True, indent=2) + "\n"


def export_ramachandran(data: AngleMatrix, pairs, path):
    """Write (phi, psi)-style column pairs in degrees for external plotting.

    Each pair contributes two columns, in order.  Returns the path, or
    ``None`` (with a warning) when ``pairs`` is empty.
    """
    pairs = list(pairs)
    if not pairs:
        logger.warning("no column pairs requested; Ramachandran export skipped")
        return None
    header, cols = [], []
    for a, b in pairs:
        for name in (a, b):
            header.append(name)
            cols.append(np.rad2deg(data.values[:, data.column_index(name)]))
    atomic_write(path, matrix_csv(header, np.column_stack(cols)))
    return path
