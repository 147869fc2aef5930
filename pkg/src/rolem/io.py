"""Long-format CSV reading and writing.

Header: ``subject_id,time_index,y_1..y_r,x_1..x_p``; one row per subject and
time point. Rows are grouped by subject (in order of first appearance) and
sorted by ``time_index`` within a subject, so unbalanced ``J_i`` is fine.
"""
from __future__ import annotations

import csv
import json
import re
import warnings
from pathlib import Path

import numpy as np

from .errors import DataError
from .model import LongitudinalDataset

__all__ = ["read_dataset", "write_dataset", "fmt", "write_table", "read_table", "write_json", "standardize"]

_COL = re.compile(r"^(y|x)_(\d+)$")


def fmt(v) -> str:
    """17 significant digits: float64 values survive a text round trip exactly."""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


def _parse_header(header, path):
    if len(header) < 4 or header[0] != "subject_id" or header[1] != "time_index":
        raise DataError(f"{path}: header must start with subject_id,time_index")
    ys, xs = [], []
    for col in header[2:]:
        m = _COL.match(col)
        if not m:
            raise DataError(f"{path}: unexpected column {col!r}")
        (ys if m.group(1) == "y" else xs).append(int(m.group(2)))
    if xs and ys and header.index(f"x_{xs[0]}") < header.index(f"y_{ys[-1]}"):
        raise DataError(f"{path}: y columns must precede x columns")
    if ys != list(range(1, len(ys) + 1)) or xs != list(range(1, len(xs) + 1)):
        raise DataError(f"{path}: columns must be y_1..y_r then x_1..x_p")
    if not ys or not xs:
        raise DataError(f"{path}: need at least one y and one x column")
    return len(ys), len(xs)


def read_dataset(path, strict: bool = False) -> LongitudinalDataset:
    """Parse a long-format CSV.

    Rows with an empty cell are dropped with a warning; with ``strict`` the
    whole subject is dropped instead. Non-numeric cells, duplicated
    ``(subject, time)`` pairs and ragged rows raise :class:`DataError` naming
    the line.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        r, p = _parse_header(header, path)
        width = 2 + r + p
        rows = {}
        seen = set()
        incomplete = set()
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise DataError(f"{path}:{line_no}: expected {width} fields, found {len(row)}")
            sid = row[0].strip()
            try:
                t = float(row[1])
            except ValueError:
                raise DataError(f"{path}:{line_no}: non-numeric time_index {row[1]!r}") from None
            if (sid, t) in seen:
                raise DataError(f"{path}:{line_no}: duplicated (subject, time) pair ({sid}, {row[1].strip()})")
            seen.add((sid, t))
            cells = [c.strip() for c in row[2:]]
            if any(c == "" or c.lower() == "na" for c in cells):
                warnings.warn(f"{path}:{line_no}: row with missing values dropped", stacklevel=2)
                incomplete.add(sid)
                rows.setdefault(sid, [])
                continue
            try:
                vals = [float(c) for c in cells]
            except ValueError:
                bad = next(c for c in cells if not _is_float(c))
                raise DataError(f"{path}:{line_no}: non-numeric value {bad!r}") from None
            if not np.all(np.isfinite(vals)):
                raise DataError(f"{path}:{line_no}: non-finite value")
            rows.setdefault(sid, []).append((t, vals))
    ys, xs, ids = [], [], []
    for sid, obs in rows.items():
        if strict and sid in incomplete:
            warnings.warn(f"{path}: subject {sid} dropped (incomplete observations)", stacklevel=2)
            continue
        if not obs:
            continue
        obs.sort(key=lambda o: o[0])
        m = np.array([o[1] for o in obs], dtype=float)
        ys.append(m[:, :r].T.copy())
        xs.append(m[:, r:].T.copy())
        ids.append(sid)
    if not ys:
        raise DataError(f"{path}: no complete subjects")
    return LongitudinalDataset(ys, xs, ids)


def _is_float(c):
    try:
        float(c)
        return True
    except ValueError:
        return False


def write_dataset(dataset: LongitudinalDataset, path, time_indices=None) -> None:
    path = Path(path)
    r, p = dataset.r, dataset.p
    header = ["subject_id", "time_index"] + [f"y_{i + 1}" for i in range(r)] + [f"x_{i + 1}" for i in range(p)]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k, (sid, y, x) in enumerate(zip(dataset.subject_ids, dataset.ys, dataset.xs)):
            times = range(1, y.shape[1] + 1) if time_indices is None else time_indices[k]
            for j, t in enumerate(times):
                w.writerow([str(sid), fmt(t)] + [fmt(v) for v in y[:, j]] + [fmt(v) for v in x[:, j]])


def write_table(path, header, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_table(path):
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def standardize(dataset: LongitudinalDataset):
    """Zero-mean, unit-variance columns of Y and X over all observations.

    Returns ``(scaled_dataset, scaling)`` with ``scaling`` holding the means
    and standard deviations needed to map ``beta`` back:
    ``beta_raw = diag(sd_y) beta_std diag(1 / sd_x)``.
    """
    yy, xx = dataset.stacked()
    my, sy = yy.mean(axis=0), yy.std(axis=0, ddof=1)
    mx, sx = xx.mean(axis=0), xx.std(axis=0, ddof=1)
    if np.any(sy == 0) or np.any(sx == 0):
        raise DataError("cannot standardize a constant column")
    ys = [(y - my[:, None]) / sy[:, None] for y in dataset.ys]
    xs = [(x - mx[:, None]) / sx[:, None] for x in dataset.xs]
    scaling = {"y_mean": my.tolist(), "y_sd": sy.tolist(), "x_mean": mx.tolist(), "x_sd": sx.tolist()}
    return LongitudinalDataset(ys, xs, list(dataset.subject_ids)), scaling
