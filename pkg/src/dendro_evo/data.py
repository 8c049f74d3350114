"""Feature tables and CSV ingestion."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"
LABEL = "label"
IGNORE = "ignore"
KINDS = (CONTINUOUS, CATEGORICAL, LABEL, IGNORE)


class IngestError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """n x p table with one kind per column.

    Continuous columns are stored as float arrays, categorical columns as
    arrays of strings.
    """

    columns: tuple
    names: tuple
    kinds: tuple
    row_labels: tuple = field(default=())

    def __post_init__(self):
        cols = []
        for col, kind in zip(self.columns, self.kinds):
            if kind == CONTINUOUS:
                col = np.asarray(col, dtype=float)
            elif kind == CATEGORICAL:
                col = np.asarray([str(v) for v in col], dtype=object)
            else:
                raise ValueError(f"feature columns must be continuous or categorical, got {kind!r}")
            col.setflags(write=False)
            cols.append(col)
        if len({c.shape[0] for c in cols}) > 1:
            raise ValueError("columns have different lengths")
        if not (len(cols) == len(self.names) == len(self.kinds)):
            raise ValueError("columns, names and kinds must have equal length")
        n = cols[0].shape[0] if cols else len(self.row_labels)
        rows = tuple(str(r) for r in self.row_labels) or tuple(str(i + 1) for i in range(n))
        if len(rows) != n:
            raise ValueError("row_labels length does not match the columns")
        object.__setattr__(self, "columns", tuple(cols))
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "kinds", tuple(self.kinds))
        object.__setattr__(self, "row_labels", rows)

    @classmethod
    def from_array(cls, x, names: Sequence[str] | None = None, row_labels=()) -> "FeatureMatrix":
        """All-continuous matrix from a 2-D array."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 2:
            raise ValueError("expected a 2-D array")
        names = tuple(names) if names is not None else tuple(f"V{j + 1}" for j in range(x.shape[1]))
        return cls(tuple(x[:, j] for j in range(x.shape[1])), names, (CONTINUOUS,) * x.shape[1], tuple(row_labels))

    @property
    def n(self) -> int:
        return len(self.row_labels)

    @property
    def p(self) -> int:
        return len(self.columns)

    def column(self, j: int) -> np.ndarray:
        return self.columns[j]

    def continuous_indices(self) -> list[int]:
        return [j for j, k in enumerate(self.kinds) if k == CONTINUOUS]

    def continuous_array(self, exclude: Sequence[int] = ()) -> np.ndarray:
        """Continuous columns stacked as an n x q float array."""
        idx = [j for j in self.continuous_indices() if j not in set(exclude)]
        if not idx:
            return np.empty((self.n, 0))
        return np.column_stack([self.columns[j] for j in idx])

    def drop(self, j: int) -> "FeatureMatrix":
        keep = [i for i in range(self.p) if i != j]
        return self.select(keep)

    def select(self, idx: Sequence[int]) -> "FeatureMatrix":
        return FeatureMatrix(
            tuple(self.columns[i] for i in idx),
            tuple(self.names[i] for i in idx),
            tuple(self.kinds[i] for i in idx),
            self.row_labels,
        )

    def take_rows(self, rows: Sequence[int]) -> "FeatureMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        return FeatureMatrix(
            tuple(c[rows] for c in self.columns),
            self.names,
            self.kinds,
            tuple(self.row_labels[r] for r in rows),
        )


@dataclass(frozen=True)
class Dataset:
    features: FeatureMatrix
    labels: np.ndarray | None = None
    label_name: str | None = None


def _is_number(s: str) -> bool:
    try:
        v = float(s)
    except ValueError:
        return False
    return math.isfinite(v)


_MISSING = {"", "na", "nan", "null", "none", "?"}


def ingest(
    path: str | Path,
    overrides: Mapping[str, str] | None = None,
    label: str | None = None,
    row_names: str | None = None,
) -> Dataset:
    """Read a comma-separated UTF-8 file with a header row.

    Column kinds are inferred (all-numeric means continuous, anything else
    categorical) and then replaced by ``overrides``.  ``label`` is shorthand
    for ``overrides[label] = "label"``; ``row_names`` names a column used as
    row labels and dropped from the features.
    """
    path = Path(path)
    overrides = dict(overrides or {})
    if label is not None:
        overrides[label] = LABEL
    for name, kind in overrides.items():
        if kind not in KINDS:
            raise IngestError(f"unknown column kind {kind!r} for column {name!r}")
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise IngestError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise IngestError(f"{path}: duplicate column names in header")
    body = rows[1:]
    body = [r for r in body if r and any(c.strip() for c in r)]
    if not body:
        raise IngestError(f"{path}: no data rows")
    for lineno, r in enumerate(rows[1:], start=2):
        if r and any(c.strip() for c in r) and len(r) != len(header):
            raise IngestError(f"{path}: row {lineno} has {len(r)} fields, expected {len(header)}")
    for name in list(overrides) + ([row_names] if row_names else []):
        if name not in header:
            raise IngestError(f"{path}: no column named {name!r}")
    data_lines = [i for i, r in enumerate(rows[1:], start=2) if r and any(c.strip() for c in r)]
    for lineno, r in zip(data_lines, body):
        for name, cell in zip(header, r):
            if overrides.get(name) == IGNORE:
                continue
            if cell.strip().lower() in _MISSING:
                raise IngestError(f"{path}: row {lineno} has a missing value in column {name!r}")

    columns, names, kinds = [], [], []
    labels = label_name = None
    row_labels: tuple = ()
    for j, name in enumerate(header):
        cells = [r[j].strip() for r in body]
        if name == row_names:
            row_labels = tuple(cells)
            continue
        kind = overrides.get(name)
        if kind is None:
            kind = CONTINUOUS if all(_is_number(c) for c in cells) else CATEGORICAL
        if kind == IGNORE:
            continue
        if kind == LABEL:
            labels, label_name = np.asarray(cells, dtype=object), name
            continue
        if kind == CONTINUOUS:
            bad = [k for k, c in enumerate(cells) if not _is_number(c)]
            if bad:
                raise IngestError(f"{path}: row {data_lines[bad[0]]} column {name!r} is not numeric: {cells[bad[0]]!r}")
            columns.append(np.array([float(c) for c in cells]))
        else:
            columns.append(np.asarray(cells, dtype=object))
        names.append(name)
        kinds.append(kind)
    if not columns:
        raise IngestError(f"{path}: no feature columns")
    return Dataset(FeatureMatrix(tuple(columns), tuple(names), tuple(kinds), row_labels), labels, label_name)


def write_csv(path: str | Path, fm: FeatureMatrix, labels=None, label_name: str = "label", precision: int = 17) -> None:
    """Write a feature table (and optional label column) as CSV."""
    header = list(fm.names) + ([label_name] if labels is not None else [])
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(fm.n):
            row = []
            for col, kind in zip(fm.columns, fm.kinds):
                row.append(repr(float(col[i])) if kind == CONTINUOUS and precision >= 17 else
                           (f"{col[i]:.{precision}g}" if kind == CONTINUOUS else str(col[i])))
            if labels is not None:
                row.append(str(labels[i]))
            w.writerow(row)
