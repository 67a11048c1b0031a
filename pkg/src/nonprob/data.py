"""Samples, census cells and margins, and the stacked sample/reference frame.

Covariates are categorical. A :class:`Dataset` stores each row as integer
level codes (one column per schema variable) so that cell lookups, one-hot
encoding and resampling stay vectorised.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import (
    EmptyPopulationError,
    InvalidSchemaError,
    NoTargetError,
    SchemaMismatchError,
    UnknownLevelError,
)


def _frozen(a, dtype=None):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CovariateSchema:
    """Ordered categorical variables, each with an ordered list of levels.

    The first declared level of each variable is the reference level for
    dummy coding.
    """

    variables: tuple

    def __init__(self, variables: Iterable):
        if isinstance(variables, Mapping):
            variables = variables.items()
        vs = tuple((str(name), tuple(str(lv) for lv in levels)) for name, levels in variables)
        if not vs:
            raise InvalidSchemaError("schema has no variables")
        names = [v[0] for v in vs]
        if len(set(names)) != len(names):
            raise InvalidSchemaError(f"duplicate variable names in {names}")
        for name, levels in vs:
            if len(set(levels)) != len(levels):
                raise InvalidSchemaError(f"variable {name!r} has duplicate levels")
            if len(levels) < 2:
                raise InvalidSchemaError(f"variable {name!r} needs at least 2 levels, got {list(levels)}")
        object.__setattr__(self, "variables", vs)

    @property
    def names(self) -> list:
        return [v[0] for v in self.variables]

    @property
    def sizes(self) -> list:
        return [len(v[1]) for v in self.variables]

    def levels(self, name: str) -> tuple:
        for n, lv in self.variables:
            if n == name:
                return lv
        raise KeyError(name)

    def encode_row(self, row: Sequence[str], where: str = "") -> list:
        if len(row) != len(self.variables):
            raise InvalidSchemaError(f"row has {len(row)} values, schema has {len(self.variables)} variables")
        out = []
        for (name, levels), value in zip(self.variables, row):
            try:
                out.append(levels.index(str(value)))
            except ValueError:
                raise UnknownLevelError(name, value, where) from None
        return out

    def diff(self, other: "CovariateSchema") -> list:
        """Names of variables that differ between two schemas."""
        mine, theirs = dict(self.variables), dict(other.variables)
        out = [n for n in mine if mine[n] != theirs.get(n)]
        out += [n for n in theirs if n not in mine]
        if not out and self.names != other.names:
            out = self.names
        return out


@dataclass(frozen=True, eq=False)
class Dataset:
    """Rows of covariate level codes with an optional target column."""

    schema: CovariateSchema
    codes: np.ndarray
    target: Optional[np.ndarray] = None

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int64)
        if codes.ndim == 1 and codes.size == 0:
            codes = codes.reshape(0, len(self.schema.variables))
        if codes.ndim != 2 or codes.shape[1] != len(self.schema.variables):
            raise InvalidSchemaError(f"codes must be (n, {len(self.schema.variables)}), got {codes.shape}")
        for j, size in enumerate(self.schema.sizes):
            col = codes[:, j]
            if col.size and (col.min() < 0 or col.max() >= size):
                bad = col[(col < 0) | (col >= size)][0]
                raise UnknownLevelError(self.schema.names[j], int(bad), "level code out of range")
        object.__setattr__(self, "codes", _frozen(codes))
        if self.target is not None:
            y = np.asarray(self.target, dtype=float)
            if y.shape != (codes.shape[0],):
                raise InvalidSchemaError(f"target length {y.shape} does not match n={codes.shape[0]}")
            object.__setattr__(self, "target", _frozen(y))

    @classmethod
    def from_rows(cls, schema: CovariateSchema, rows: Iterable[Sequence[str]], target=None) -> "Dataset":
        coded = [schema.encode_row(r, where=f"row {i}") for i, r in enumerate(rows)]
        codes = np.array(coded, dtype=np.int64).reshape(len(coded), len(schema.variables))
        return cls(schema, codes, target)

    @property
    def n(self) -> int:
        return int(self.codes.shape[0])

    @property
    def rows(self) -> list:
        levels = [lv for _, lv in self.schema.variables]
        return [tuple(levels[j][c] for j, c in enumerate(row)) for row in self.codes]

    @property
    def is_binary(self) -> bool:
        return self.target is not None and bool(np.all((self.target == 0) | (self.target == 1)))

    def require_target(self) -> np.ndarray:
        if self.target is None:
            raise NoTargetError("dataset has no target column")
        return self.target

    def take(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        # rows of a valid dataset are valid; skip re-validation
        out = object.__new__(Dataset)
        object.__setattr__(out, "schema", self.schema)
        object.__setattr__(out, "codes", _frozen(self.codes[idx]))
        object.__setattr__(out, "target", None if self.target is None else _frozen(self.target[idx]))
        return out

    def without_target(self) -> "Dataset":
        return Dataset(self.schema, self.codes)


@dataclass(frozen=True)
class Cell:
    cell_id: int
    levels: tuple


@dataclass(frozen=True)
class CellIndex:
    """All level combinations of a schema, row-major over variable order."""

    schema: CovariateSchema
    cells: tuple

    @property
    def strides(self) -> np.ndarray:
        sizes = self.schema.sizes
        return np.array([int(np.prod(sizes[j + 1:])) for j in range(len(sizes))], dtype=np.int64)

    @property
    def codes(self) -> np.ndarray:
        """Level codes of every cell, shape (n_cells, p)."""
        return np.array(list(itertools.product(*[range(s) for s in self.schema.sizes])), dtype=np.int64)

    def __len__(self):
        return len(self.cells)

    def id_of(self, levels: Sequence[str]) -> int:
        codes = self.schema.encode_row(levels)
        return int(np.dot(codes, self.strides))

    def as_dataset(self) -> Dataset:
        return Dataset(self.schema, self.codes)


def build_cell_index(schema: CovariateSchema) -> CellIndex:
    if not isinstance(schema, CovariateSchema) or not schema.variables:
        raise InvalidSchemaError("empty schema")
    level_lists = [lv for _, lv in schema.variables]
    cells = tuple(Cell(i, combo) for i, combo in enumerate(itertools.product(*level_lists)))
    return CellIndex(schema, cells)


def assign_cells(dataset: Dataset, index: CellIndex) -> np.ndarray:
    if dataset.schema != index.schema:
        raise SchemaMismatchError(dataset.schema.diff(index.schema))
    return dataset.codes @ index.strides


@dataclass(frozen=True, eq=False)
class PopulationCells:
    index: CellIndex
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.shape != (len(self.index),):
            raise InvalidSchemaError(f"expected {len(self.index)} cell counts, got {counts.shape}")
        if np.any(counts < 0) or np.any(counts != np.round(counts)):
            raise InvalidSchemaError("cell counts must be non-negative integers")
        object.__setattr__(self, "counts", _frozen(counts, dtype=np.int64))

    @classmethod
    def from_mapping(cls, schema: CovariateSchema, counts: Mapping) -> "PopulationCells":
        """Build from ``{level tuple: count}``; unlisted cells are empty."""
        index = build_cell_index(schema)
        arr = np.zeros(len(index), dtype=np.int64)
        for levels, c in counts.items():
            arr[index.id_of(levels)] += int(c)
        return cls(index, arr)

    @property
    def schema(self) -> CovariateSchema:
        return self.index.schema

    @property
    def N(self) -> int:
        return int(self.counts.sum())

    @property
    def shares(self) -> np.ndarray:
        return self.counts / self.N


@dataclass(frozen=True, eq=False)
class PopulationMargins:
    """Per-variable level totals. ``totals[j][k]`` is the total for level k of variable j."""

    schema: CovariateSchema
    totals: tuple
    N: float

    def __post_init__(self):
        tot = tuple(_frozen(t, dtype=float) for t in self.totals)
        if len(tot) != len(self.schema.variables):
            raise InvalidSchemaError("one totals vector per schema variable required")
        for (name, levels), t in zip(self.schema.variables, tot):
            if t.shape != (len(levels),):
                raise InvalidSchemaError(f"variable {name!r}: expected {len(levels)} totals")
            if np.any(t < 0):
                raise InvalidSchemaError(f"variable {name!r}: negative total")
            if not np.isclose(t.sum(), self.N, rtol=1e-9, atol=0):
                raise InvalidSchemaError(f"variable {name!r}: totals sum to {t.sum()}, expected N={self.N}")
        object.__setattr__(self, "totals", tot)

    @classmethod
    def from_mapping(cls, schema: CovariateSchema, totals: Mapping) -> "PopulationMargins":
        """Build from ``{variable: {level: total}}``."""
        vecs = []
        for name, levels in schema.variables:
            given = totals[name]
            unknown = set(given) - set(levels)
            if unknown:
                raise UnknownLevelError(name, sorted(unknown)[0])
            vecs.append([float(given.get(lv, 0.0)) for lv in levels])
        return cls(schema, tuple(vecs), float(sum(vecs[0])))

    def total(self, variable: str, level: str) -> float:
        j = self.schema.names.index(variable)
        return float(self.totals[j][self.schema.variables[j][1].index(level)])


def margins_from_cells(cells: PopulationCells) -> PopulationMargins:
    codes = cells.index.codes
    totals = tuple(
        np.bincount(codes[:, j], weights=cells.counts, minlength=size)
        for j, size in enumerate(cells.schema.sizes)
    )
    return PopulationMargins(cells.schema, totals, float(cells.N))


@dataclass(frozen=True, eq=False)
class ReferenceSample:
    """Reference rows (no target) with known inclusion probabilities.

    ``synthetic`` marks references built from census cells, where the
    inclusion probability of each row is ``1/N_c`` of its cell.
    """

    dataset: Dataset
    inclusion_probs: np.ndarray
    synthetic: bool = False

    def __post_init__(self):
        p = np.asarray(self.inclusion_probs, dtype=float)
        if p.shape != (self.dataset.n,):
            raise InvalidSchemaError("one inclusion probability per reference row required")
        if np.any(~(p > 0)) or np.any(p > 1):
            raise InvalidSchemaError("inclusion probabilities must lie in (0, 1]")
        object.__setattr__(self, "inclusion_probs", _frozen(p))


def _round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def synthesize_reference(cells: PopulationCells, scale: float = 1.0) -> ReferenceSample:
    """One block of rows per census cell, sized ``round(scale * N_c)`` (at least 1)."""
    if not 0 < scale <= 1:
        raise ValueError(f"scale must lie in (0, 1], got {scale}")
    if cells.N < 1:
        raise EmptyPopulationError("all census cells are empty")
    counts = cells.counts
    reps = _round_half_away(scale * counts).astype(np.int64)
    reps = np.where(counts > 0, np.maximum(reps, 1), 0)
    ids = np.repeat(np.arange(len(counts)), reps)
    codes = cells.index.codes[ids]
    probs = 1.0 / counts[ids]
    return ReferenceSample(Dataset(cells.schema, codes), probs, synthetic=True)


REFERENCE_WEIGHTINGS = ("calibrated", "inverse", "literal")


@dataclass(frozen=True, eq=False)
class CombinedFrame:
    """Sample rows (S=1) stacked above reference rows (S=0).

    ``base_weights`` is 1 for sample rows and ``1/pi`` for reference rows.
    Reference rows carry NaN in ``dataset.target``.
    """

    dataset: Dataset
    S: np.ndarray
    base_weights: np.ndarray
    inclusion_probs: np.ndarray
    synthetic_reference: bool = False

    @property
    def n_sample(self) -> int:
        return int(self.S.sum())

    def sample_rows(self) -> Dataset:
        idx = np.flatnonzero(self.S == 1)
        return self.dataset.take(idx)

    def regression_weights(self, mode: str = "calibrated") -> np.ndarray:
        """Weights for the membership regression.

        ``inverse``: sample rows 1, reference rows ``1/pi``.
        ``literal``: sample rows 1, reference rows ``pi``.
        ``calibrated``: as ``inverse``, but a synthetic reference is rescaled
        so each cell's reference weight totals ``N_c`` rather than
        ``rows_c * N_c``. A genuine probability reference is left as ``1/pi``.
        """
        ref = self.S == 0
        if mode == "inverse":
            return self.base_weights.copy()
        if mode == "literal":
            w = np.ones_like(self.base_weights)
            w[ref] = self.inclusion_probs[ref]
            return w
        if mode == "calibrated":
            w = self.base_weights.copy()
            if self.synthetic_reference and ref.any():
                index = build_cell_index(self.dataset.schema)
                cid = assign_cells(self.dataset, index)[ref]
                rows_per_cell = np.bincount(cid, minlength=len(index))
                w[ref] = w[ref] / rows_per_cell[cid]
            return w
        raise ValueError(f"unknown reference weighting {mode!r}; choose from {REFERENCE_WEIGHTINGS}")


def stack_with_indicator(sample: Dataset, reference: ReferenceSample) -> CombinedFrame:
    ref = reference.dataset
    if sample.schema != ref.schema:
        raise SchemaMismatchError(sample.schema.diff(ref.schema))
    codes = np.vstack([sample.codes, ref.codes])
    target = None
    if sample.target is not None:
        target = np.concatenate([sample.target, np.full(ref.n, np.nan)])
    S = np.concatenate([np.ones(sample.n, dtype=np.int64), np.zeros(ref.n, dtype=np.int64)])
    pi = np.concatenate([np.ones(sample.n), reference.inclusion_probs])
    return CombinedFrame(
        Dataset(sample.schema, codes, target),
        _frozen(S),
        _frozen(1.0 / pi),
        _frozen(pi),
        reference.synthetic,
    )


@dataclass(frozen=True)
class ValidationReport:
    violations: list = field(default_factory=list)
    violation_ids: list = field(default_factory=list)

    @property
    def violated(self) -> bool:
        return bool(self.violations)


def common_support_report(sample: Dataset, cells: PopulationCells) -> ValidationReport:
    """Census cells with people in them but no sampled rows."""
    if sample.schema != cells.schema:
        raise SchemaMismatchError(sample.schema.diff(cells.schema))
    n_c = np.bincount(assign_cells(sample, cells.index), minlength=len(cells.index))
    bad = np.flatnonzero((cells.counts > 0) & (n_c == 0))
    return ValidationReport([cells.index.cells[i].levels for i in bad], [int(i) for i in bad])


def cell_counts(dataset: Dataset, index: CellIndex) -> np.ndarray:
    return np.bincount(assign_cells(dataset, index), minlength=len(index))
