"""Flat-file interchange: returns panels, matrices, JSON summaries and
``key=value`` configuration files.

Every writer goes through a temporary file in the destination directory and
an atomic rename, so a failed command never leaves a partial output behind.
Floats are written with 17 significant digits, which round-trips exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataFormatError
from .factor_model import ReturnsPanel

__all__ = [
    "read_returns_csv",
    "write_returns_csv",
    "read_matrix_csv",
    "write_matrix_csv",
    "write_vector_csv",
    "write_table_csv",
    "write_json",
    "read_config",
    "parse_config_text",
    "atomic_write",
    "fmt_float",
]


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


@contextmanager
def atomic_write(path, mode: str = "w"):
    """Write to a sibling temp file, then rename over ``path`` on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, newline="" if "b" not in mode else None) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def read_returns_csv(path) -> ReturnsPanel:
    """Read a ``date, asset1, asset2, ...`` file (one row per period) into a
    panel of shape assets x periods.
    """
    path = Path(path)
    if not path.is_file():
        raise DataFormatError(f"missing file: {path}", kind="missing_file")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(f"{path}: empty file", kind="bad_header")
    header = [h.strip() for h in rows[0]]
    if not header or header[0].lower() != "date":
        raise DataFormatError(f"{path}: first column must be named 'date'", kind="bad_header", line=1)
    assets = header[1:]
    if len(set(assets)) != len(assets):
        raise DataFormatError(f"{path}: duplicate asset names in header", kind="bad_header", line=1)
    dates, data, seen = [], [], {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataFormatError(
                f"{path}: ragged row at line {lineno}: expected {len(header)} fields, got {len(row)}",
                kind="ragged_row",
                line=lineno,
            )
        date = row[0].strip()
        if date in seen:
            raise DataFormatError(
                f"{path}: duplicate date {date!r} at line {lineno} (first seen at line {seen[date]})",
                kind="duplicate_date",
                line=lineno,
            )
        seen[date] = lineno
        vals = []
        for j, cell in enumerate(row[1:], start=1):
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                raise DataFormatError(
                    f"{path}: non-numeric value {cell!r} at line {lineno}, column {header[j]!r}",
                    kind="non_numeric",
                    line=lineno,
                    column=header[j],
                )
            vals.append(v)
        dates.append(date)
        data.append(vals)
    if len(assets) < 2 or len(data) < 2:
        raise DataFormatError(
            f"{path}: need at least 2 assets and 2 periods, got {len(assets)} assets and {len(data)} periods",
            kind="too_small",
        )
    return ReturnsPanel(np.array(data).T, tuple(dates), tuple(assets))


def write_returns_csv(path, panel: ReturnsPanel) -> None:
    with atomic_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *panel.asset_labels])
        for t, label in enumerate(panel.period_labels):
            w.writerow([label, *(fmt_float(x) for x in panel.values[:, t])])


def write_matrix_csv(path, M: np.ndarray, labels=None) -> None:
    """Square matrix with row and column labels."""
    M = np.asarray(M, dtype=float)
    labels = list(labels) if labels is not None else [str(i) for i in range(M.shape[1])]
    with atomic_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["", *labels])
        for i in range(M.shape[0]):
            w.writerow([labels[i] if M.shape[0] == len(labels) else i, *(fmt_float(x) for x in M[i])])


def read_matrix_csv(path) -> tuple[np.ndarray, list]:
    df = pd.read_csv(path, index_col=0, dtype=str)
    return df.to_numpy(dtype=float), list(df.columns)


def write_vector_csv(path, names, values, header=("asset", "weight")) -> None:
    with atomic_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for n, v in zip(names, values):
            w.writerow([n, fmt_float(v)])


def write_table_csv(path, df: pd.DataFrame) -> None:
    buf = io.StringIO()
    df.to_csv(buf, index=False, float_format="%.17g", lineterminator="\n")
    with atomic_write(path) as fh:
        fh.write(buf.getvalue())


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def write_json(path, obj) -> None:
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False)
    with atomic_write(path) as fh:
        fh.write(text + "\n")


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """``key = value`` lines; ``#`` starts a comment.  Values stay strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ValueError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ValueError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_config(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ValueError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), str(path))
