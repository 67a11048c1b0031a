"""CSV readers for samples, census cells, census margins and reference samples.

Formats (UTF-8, comma separated, header row):

* sample: one column per covariate, optional target column
* cells: one column per covariate plus an integer ``count`` column
* margins: ``variable,level,total``
* reference: one column per covariate plus ``inclusion_prob``
"""

from __future__ import annotations

import csv
import hashlib
from pathlib import Path
from typing import Optional

import numpy as np

from .data import CovariateSchema, Dataset, PopulationCells, PopulationMargins, ReferenceSample, build_cell_index
from .errors import InvalidSchemaError, ParseError


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _read(path):
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            rows = [(reader.line_num, r) for r in reader]
    except FileNotFoundError:
        raise ParseError(path, 0, "file not found") from None
    except UnicodeDecodeError as exc:
        raise ParseError(path, 0, f"not valid UTF-8: {exc}") from None
    rows = [(ln, r) for ln, r in rows if any(c.strip() for c in r)]
    if not rows:
        raise ParseError(path, 1, "empty file")
    (_, header), body = rows[0], rows[1:]
    header = [h.strip() for h in header]
    if len(set(header)) != len(header):
        raise ParseError(path, 1, f"duplicate column names in header {header}")
    for ln, r in body:
        if len(r) != len(header):
            raise ParseError(path, ln, f"expected {len(header)} fields, found {len(r)}")
        for h, c in zip(header, r):
            if not c.strip():
                raise ParseError(path, ln, f"missing value in column {h!r}")
    return header, [(ln, [c.strip() for c in r]) for ln, r in body]


def _first_seen(values):
    return list(dict.fromkeys(values))


def _number(path, ln, col, text, kind=float):
    try:
        v = kind(text)
    except ValueError:
        raise ParseError(path, ln, f"column {col!r}: {text!r} is not a number") from None
    if isinstance(v, float) and not np.isfinite(v):
        raise ParseError(path, ln, f"column {col!r}: non-finite value {text!r}")
    return v


def read_cells(path) -> PopulationCells:
    header, body = _read(path)
    if "count" not in header:
        raise ParseError(path, 1, "cells file needs a 'count' column")
    covs = [h for h in header if h != "count"]
    if not covs:
        raise ParseError(path, 1, "cells file has no covariate columns")
    ci = header.index("count")
    try:
        schema = CovariateSchema([(c, _first_seen(r[header.index(c)] for _, r in body)) for c in covs])
    except InvalidSchemaError as exc:
        raise ParseError(path, 1, str(exc)) from None
    index = build_cell_index(schema)
    counts = np.zeros(len(index), dtype=np.int64)
    seen = set()
    for ln, r in body:
        raw = _number(path, ln, "count", r[ci])
        if raw < 0 or raw != int(raw):
            raise ParseError(path, ln, f"count must be a non-negative integer, got {r[ci]!r}")
        levels = tuple(r[header.index(c)] for c in covs)
        if levels in seen:
            raise ParseError(path, ln, f"duplicate cell {levels}")
        seen.add(levels)
        counts[index.id_of(levels)] = int(raw)
    return PopulationCells(index, counts)


def read_margins(path) -> PopulationMargins:
    header, body = _read(path)
    for col in ("variable", "level", "total"):
        if col not in header:
            raise ParseError(path, 1, f"margins file needs columns variable,level,total; missing {col!r}")
    vi, li, ti = (header.index(c) for c in ("variable", "level", "total"))
    order, totals = [], {}
    for ln, r in body:
        var, lv = r[vi], r[li]
        t = _number(path, ln, "total", r[ti])
        if t < 0:
            raise ParseError(path, ln, "total must be non-negative")
        if var not in totals:
            order.append(var)
            totals[var] = {}
        if lv in totals[var]:
            raise ParseError(path, ln, f"duplicate level {var}={lv}")
        totals[var][lv] = t
    try:
        schema = CovariateSchema([(v, list(totals[v])) for v in order])
        sums = {v: sum(totals[v].values()) for v in order}
        first = sums[order[0]]
        for v in order:
            if not np.isclose(sums[v], first, rtol=1e-9, atol=0):
                raise InvalidSchemaError(f"margins of {v!r} sum to {sums[v]:g} but {order[0]!r} sums to {first:g}")
        return PopulationMargins.from_mapping(schema, totals)
    except InvalidSchemaError as exc:
        raise ParseError(path, 1, str(exc)) from None


def read_header(path) -> list:
    return _read(path)[0]


def infer_schema(paths, columns) -> CovariateSchema:
    """Schema from the levels observed (in order) across several CSV files."""
    levels = {c: [] for c in columns}
    for p in paths:
        header, body = _read(p)
        for c in columns:
            if c not in header:
                raise ParseError(p, 1, f"missing covariate column {c!r}")
            levels[c] += [r[header.index(c)] for _, r in body]
    try:
        return CovariateSchema([(c, _first_seen(levels[c])) for c in columns])
    except InvalidSchemaError as exc:
        raise ParseError(paths[0], 1, str(exc)) from None


def read_sample(path, schema: CovariateSchema, target: Optional[str] = None) -> Dataset:
    header, body = _read(path)
    missing = [c for c in schema.names if c not in header]
    if missing:
        raise ParseError(path, 1, f"missing covariate column(s): {', '.join(missing)}")
    if target is not None and target not in header:
        raise ParseError(path, 1, f"target column {target!r} not found")
    cols = [header.index(c) for c in schema.names]
    codes, ys = [], []
    for ln, r in body:
        codes.append(schema.encode_row([r[i] for i in cols], where=f"{path}:{ln}"))
        if target is not None:
            ys.append(_number(path, ln, target, r[header.index(target)]))
    arr = np.array(codes, dtype=np.int64).reshape(len(codes), len(schema.names))
    return Dataset(schema, arr, np.array(ys, dtype=float) if target is not None else None)


def read_reference(path, schema: CovariateSchema) -> ReferenceSample:
    header, body = _read(path)
    if "inclusion_prob" not in header:
        raise ParseError(path, 1, "reference file needs an 'inclusion_prob' column")
    data = read_sample(path, schema)
    pi = header.index("inclusion_prob")
    probs = []
    for ln, r in body:
        p = _number(path, ln, "inclusion_prob", r[pi])
        if not 0 < p <= 1:
            raise ParseError(path, ln, f"inclusion_prob must lie in (0, 1], got {r[pi]!r}")
        probs.append(p)
    return ReferenceSample(data, np.array(probs))


def write_cells(path, cells: PopulationCells) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cells.schema.names + ["count"])
        for cell, c in zip(cells.index.cells, cells.counts):
            w.writerow(list(cell.levels) + [int(c)])


def write_sample(path, dataset: Dataset, target: str = "y") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(dataset.schema.names + ([target] if dataset.target is not None else []))
        for i, row in enumerate(dataset.rows):
            extra = [] if dataset.target is None else [format(float(dataset.target[i]), ".17g")]
            w.writerow(list(row) + extra)

