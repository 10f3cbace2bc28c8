"""Typed, immutable columnar tables and deterministic row partitions.

A :class:`Dataset` holds feature columns plus a target.  Numerical and
ordinal columns store ``float64`` values; categorical columns store dense
integer codes together with the list of original labels.  Every column
carries an explicit missing mask.  Downstream code never copies or mutates a
dataset, it works on arrays of row indices instead.
"""
from __future__ import annotations

import csv
import enum
import hashlib
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import ConfigError, ParseError

MISSING_TOKENS = frozenset({"", "na"})
ORDINAL_MAX_UNIQUE = 100


class FeatureKind(str, enum.Enum):
    NUMERICAL = "numerical"
    CATEGORICAL = "categorical"
    ORDINAL = "ordinal"

    @property
    def is_numeric(self):
        return self is not FeatureKind.CATEGORICAL

    @property
    def is_categorical(self):
        return self is not FeatureKind.NUMERICAL


class Task(str, enum.Enum):
    REGRESSION = "regression"
    BINARY = "binary"
    MULTICLASS = "multiclass"


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Column:
    """One typed column.

    ``values`` is float64 for numerical/ordinal columns and int64 category
    codes for categorical ones.  Payloads at missing positions are NaN (or -1
    for codes) and must not be interpreted.
    """

    name: str
    kind: FeatureKind
    values: np.ndarray
    missing: np.ndarray
    categories: tuple | None = None

    def __post_init__(self):
        kind = FeatureKind(self.kind)
        object.__setattr__(self, "kind", kind)
        missing = np.asarray(self.missing, dtype=bool)
        if kind is FeatureKind.CATEGORICAL:
            values = np.asarray(self.values, dtype=np.int64).copy()
            values[missing] = -1
            cats = tuple(self.categories or ())
            if values.size and values.max(initial=-1) >= len(cats):
                raise ValueError(f"column {self.name!r}: code out of range")
            object.__setattr__(self, "categories", cats)
        else:
            values = np.asarray(self.values, dtype=np.float64).copy()
            values[missing] = np.nan
        if values.shape != missing.shape or values.ndim != 1:
            raise ValueError(f"column {self.name!r}: values/missing shape mismatch")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "missing", _frozen(missing))

    def __len__(self):
        return self.values.shape[0]

    @classmethod
    def from_labels(cls, name, labels, missing=None):
        """Categorical column from arbitrary hashable labels (first-appearance ids)."""
        if isinstance(labels, np.ndarray) and labels.dtype.kind == "U" and missing is not None:
            missing = np.asarray(missing, dtype=bool)
            uniq, first, inv = np.unique(labels, return_index=True, return_inverse=True)
            inv = inv.reshape(-1)
            present = np.zeros(uniq.size, bool)
            present[inv[~missing]] = True
            keep = np.flatnonzero(present)
            keep = keep[np.argsort(first[keep], kind="stable")]
            remap = np.full(uniq.size, -1, dtype=np.int64)
            remap[keep] = np.arange(keep.size)
            cats = tuple(str(u) for u in uniq[keep])
            return cls(name, FeatureKind.CATEGORICAL, remap[inv], missing, cats)
        labels = list(labels)
        if missing is None:
            missing = np.array([_is_missing_token(v) for v in labels], dtype=bool)
        index = {}
        codes = np.full(len(labels), -1, dtype=np.int64)
        for i, (lab, miss) in enumerate(zip(labels, missing)):
            if miss:
                continue
            code = index.get(lab)
            if code is None:
                code = index[lab] = len(index)
            codes[i] = code
        return cls(name, FeatureKind.CATEGORICAL, codes, missing, tuple(index))

    @classmethod
    def from_numeric(cls, name, values, kind=None):
        values = np.asarray(values, dtype=np.float64)
        missing = np.isnan(values)
        if kind is None:
            kind = _numeric_kind(values[~missing])
        return cls(name, kind, values, missing)

    def as_float(self):
        """Float view used by models: codes for categoricals, NaN where missing."""
        if self.kind is FeatureKind.CATEGORICAL:
            out = self.values.astype(np.float64)
            out[self.missing] = np.nan
            return out
        return self.values

    def labels(self):
        """Per-row original labels (None where missing)."""
        if self.kind is FeatureKind.CATEGORICAL:
            cats = self.categories
            return [None if c < 0 else cats[c] for c in self.values]
        return [None if m else float(v) for v, m in zip(self.values, self.missing)]


@dataclass(frozen=True, eq=False)
class Dataset:
    columns: tuple
    target: Column
    task: Task = Task.REGRESSION
    n_classes: int = 1
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        cols = tuple(self.columns)
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "task", Task(self.task))
        n = len(self.target)
        for c in cols:
            if len(c) != n:
                raise ValueError(f"column {c.name!r} has {len(c)} rows, target has {n}")
        index = {c.name: i for i, c in enumerate(cols)}
        if len(index) != len(cols):
            raise ValueError("duplicate column names")
        object.__setattr__(self, "_index", index)
        if self.task is Task.REGRESSION:
            if self.n_classes != 1:
                raise ValueError("regression datasets have n_classes == 1")
        else:
            y = self.target.values
            if self.target.missing.any():
                raise ValueError("classification target has missing values")
            lo, hi = (y.min(), y.max()) if n else (0, 0)
            expected = 2 if self.task is Task.BINARY else self.n_classes
            if self.task is Task.BINARY and self.n_classes != 2:
                raise ValueError("binary datasets have n_classes == 2")
            if lo < 0 or hi >= expected or np.any(y != np.round(y)):
                raise ValueError(f"target values must be integers in [0, {expected})")

    @property
    def n_rows(self):
        return len(self.target)

    @property
    def names(self):
        return [c.name for c in self.columns]

    def column(self, name):
        try:
            return self.columns[self._index[name]]
        except KeyError:
            raise KeyError(name) from None

    def __contains__(self, name):
        return name in self._index

    def kinds(self):
        return {c.name: c.kind for c in self.columns}

    def y(self):
        """Target as float64 (class ids for classification)."""
        return np.asarray(self.target.values, dtype=np.float64)

    def with_target(self, values):
        """Copy sharing all feature columns but carrying a different target."""
        tgt = Column(self.target.name, self.target.kind, values,
                     np.zeros(len(values), dtype=bool), self.target.categories)
        return Dataset(self.columns, tgt, self.task, self.n_classes)

    def with_columns(self, extra):
        return Dataset(self.columns + tuple(extra), self.target, self.task, self.n_classes)

    def fingerprint(self):
        """Content hash of every column and the target (provenance only)."""
        h = hashlib.sha256()
        for col in self.columns + (self.target,):
            h.update(col.name.encode())
            h.update(col.kind.value.encode())
            h.update(col.values.tobytes())
            h.update(col.missing.tobytes())
            for cat in col.categories or ():
                h.update(repr(cat).encode())
        h.update(self.task.value.encode())
        return h.hexdigest()[:16]

    @classmethod
    def from_dict(cls, features, target, task=None, n_classes=None, kinds=None,
                  target_name="target"):
        """Build a dataset from in-memory arrays.

        String/object arrays become categorical columns; numeric arrays use
        :func:`infer_kind` unless ``kinds`` overrides them.
        """
        kinds = dict(kinds or {})
        cols = []
        for name, values in features.items():
            cols.append(_column_from_values(name, values, kinds.get(name)))
        tgt, task, n_classes = _make_target(target_name, target, task, n_classes)
        return cls(tuple(cols), tgt, task, n_classes)


def concat_rows(first: Dataset, second: Dataset) -> Dataset:
    """Stack two datasets with the same schema; categories are merged by label."""
    if first.names != second.names:
        raise ConfigError("cannot concatenate datasets with different columns")
    cols = []
    for a, b in zip(first.columns, second.columns):
        if a.kind is FeatureKind.CATEGORICAL and b.kind is FeatureKind.CATEGORICAL:
            index = {lab: i for i, lab in enumerate(a.categories)}
            cats = list(a.categories)
            remap = np.empty(len(b.categories) + 1, dtype=np.int64)
            remap[-1] = -1
            for j, lab in enumerate(b.categories):
                if lab not in index:
                    index[lab] = len(cats)
                    cats.append(lab)
                remap[j] = index[lab]
            codes = np.concatenate([a.values, remap[b.values]])
            cols.append(Column(a.name, a.kind, codes, np.concatenate([a.missing, b.missing]),
                               tuple(cats)))
        elif a.kind is FeatureKind.CATEGORICAL or b.kind is FeatureKind.CATEGORICAL:
            cols.append(Column.from_labels(a.name, a.labels() + b.labels(),
                                           np.concatenate([a.missing, b.missing])))
        else:
            cols.append(Column(a.name, a.kind, np.concatenate([a.values, b.values]),
                               np.concatenate([a.missing, b.missing])))
    y = np.concatenate([first.target.values, second.target.values])
    tgt = Column(first.target.name, first.target.kind, y,
                 np.concatenate([first.target.missing, second.target.missing]),
                 first.target.categories)
    return Dataset(tuple(cols), tgt, first.task, first.n_classes)


# ---------------------------------------------------------------------------
# kind inference and CSV loading


def _is_missing_token(v):
    return v is None or (isinstance(v, str) and v.strip().lower() in MISSING_TOKENS) or (
        isinstance(v, float) and np.isnan(v))


def _numeric_kind(non_missing):
    if np.unique(non_missing).size < ORDINAL_MAX_UNIQUE:
        return FeatureKind.ORDINAL
    return FeatureKind.NUMERICAL


def _try_parse_floats(values):
    try:
        return np.array([float(v) for v in values], dtype=np.float64)
    except (TypeError, ValueError):
        return None


def infer_kind(raw_column: Sequence) -> FeatureKind:
    """Classify a raw column.

    String-valued columns are categorical; numeric columns with fewer than 100
    distinct non-missing values are ordinal; other numeric columns are
    numerical.  An all-missing column is reported as categorical with a
    warning.
    """
    raw = list(raw_column)
    if not raw:
        raise ValueError("infer_kind needs a non-empty column")
    present = [v for v in raw if not _is_missing_token(v)]
    if not present:
        warnings.warn("all-missing column treated as categorical with 0 categories",
                      stacklevel=2)
        return FeatureKind.CATEGORICAL
    parsed = _try_parse_floats(present)
    if parsed is None:
        return FeatureKind.CATEGORICAL
    return _numeric_kind(parsed)


def _column_from_values(name, values, kind=None, line_of=None):
    values = list(values) if not isinstance(values, np.ndarray) else values
    if isinstance(values, np.ndarray) and values.dtype.kind in "fiub":
        arr = values.astype(np.float64)
        missing = np.isnan(arr)
        if kind is None:
            kind = _numeric_kind(arr[~missing])
        kind = FeatureKind(kind)
        if kind is FeatureKind.CATEGORICAL:
            labels = [None if m else float(v) for v, m in zip(arr, missing)]
            return Column.from_labels(name, labels, missing)
        return Column(name, kind, arr, missing)
    raw = list(values)
    kind = FeatureKind(kind) if kind is not None else infer_kind(raw)
    missing = np.array([_is_missing_token(v) for v in raw], dtype=bool)
    if kind is FeatureKind.CATEGORICAL:
        labels = [v if isinstance(v, str) else str(v) for v in raw]
        return Column.from_labels(name, labels, missing)
    out = np.full(len(raw), np.nan)
    for i, (v, m) in enumerate(zip(raw, missing)):
        if m:
            continue
        try:
            out[i] = float(v)
        except (TypeError, ValueError):
            line = line_of(i) if line_of else None
            raise ParseError(f"column {name!r}: cannot parse {v!r} as a number",
                             line=line) from None
    return Column(name, kind, out, missing)


def _make_target(name, values, task, n_classes):
    if isinstance(values, Column):
        values = values.labels() if values.kind is FeatureKind.CATEGORICAL else values.values
    arr = np.asarray(values)
    numeric = arr.dtype.kind in "fiub"
    if not numeric:
        raw = [str(v) for v in arr]
        if any(_is_missing_token(v) for v in raw):
            raise ConfigError(f"target column {name!r} has missing values")
        parsed = _try_parse_floats(raw)
        if parsed is not None:
            arr, numeric = parsed, True
    if task is None:
        if not numeric:
            n_unique = len(set(arr.tolist()))
            task = Task.BINARY if n_unique == 2 else Task.MULTICLASS
        elif set(np.unique(arr).tolist()) <= {0, 1} and np.unique(arr).size == 2:
            task = Task.BINARY
        else:
            task = Task.REGRESSION
    task = Task(task)
    if task is Task.REGRESSION:
        y = arr.astype(np.float64)
        if np.isnan(y).any():
            raise ConfigError(f"target column {name!r} has missing values")
        return Column(name, FeatureKind.NUMERICAL, y, np.zeros(len(y), bool)), task, 1
    labels, codes = np.unique(arr, return_inverse=True)
    k = len(labels) if n_classes is None else int(n_classes)
    if task is Task.BINARY:
        if len(labels) > 2:
            raise ConfigError(f"binary target {name!r} has {len(labels)} classes")
        k = 2
    tgt = Column(name, FeatureKind.CATEGORICAL, codes.astype(np.int64),
                 np.zeros(len(codes), bool), tuple(str(v) for v in labels)
                 + tuple(f"class_{i}" for i in range(len(labels), k)))
    return tgt, task, k


def read_csv_rows(path):
    """Header, data rows and their line numbers of a comma-separated file."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file: a header row is required", line=1) from None
        width = len(header)
        rows = []
        lines = []
        for row in reader:
            if not row:
                continue
            if len(row) != width:
                raise ParseError(f"expected {width} fields, got {len(row)}",
                                 line=reader.line_num)
            rows.append(row)
            lines.append(reader.line_num)
    if len(set(header)) != len(header):
        raise ParseError("duplicate column names in header", line=1)
    return header, rows, lines


def load_csv(path, target, schema_hints: Mapping | None = None, task=None) -> Dataset:
    """Read a headed, comma-separated file into a :class:`Dataset`.

    Empty fields and ``NA`` (any case) are missing.  ``schema_hints`` maps
    column names to a :class:`FeatureKind` (or its string value) and
    overrides inference.  With ``target=None`` every column is a feature and
    the dataset carries a placeholder all-zero regression target.
    """
    schema_hints = {k: FeatureKind(v) for k, v in (schema_hints or {}).items()}
    header, rows, lines = read_csv_rows(path)
    if target is not None and target not in header:
        raise ConfigError(f"target column {target!r} not found in header")
    unknown = set(schema_hints) - set(header)
    if unknown:
        raise ConfigError(f"schema hints name unknown columns: {sorted(unknown)}")
    by_col = list(zip(*rows)) if rows else [() for _ in header]
    cols = []
    tgt_raw = None
    for name, raw in zip(header, by_col):
        if name == target:
            tgt_raw = list(raw)
            continue
        cols.append(_column_from_values(name, list(raw), schema_hints.get(name),
                                        line_of=lines.__getitem__))
    if target is None:
        n = len(rows)
        tgt = Column("", FeatureKind.NUMERICAL, np.zeros(n), np.zeros(n, bool))
        return Dataset(tuple(cols), tgt, Task.REGRESSION, 1)
    if any(_is_missing_token(v) for v in tgt_raw):
        raise ConfigError(f"target column {target!r} has missing values")
    tgt, task, n_classes = _make_target(target, np.array(tgt_raw, dtype=object), task, None)
    return Dataset(tuple(cols), tgt, task, n_classes)


def write_csv(path, dataset: Dataset, extra: Iterable[Column] = ()):
    """Write features (plus optional extra columns) and the target as CSV."""
    cols = list(dataset.columns) + list(extra)
    header = [c.name for c in cols] + [dataset.target.name]
    rendered = [render_column(c) for c in cols]
    tgt = dataset.target
    if tgt.kind is FeatureKind.CATEGORICAL:
        rendered.append([str(tgt.categories[c]) for c in tgt.values])
    else:
        rendered.append([repr(float(v)) for v in tgt.values])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(zip(*rendered))


def _render_label(lab):
    if isinstance(lab, tuple):
        return "-".join(_render_label(x) for x in lab)
    if isinstance(lab, float):
        return repr(lab)
    return str(lab)


def render_column(col):
    if col.kind is FeatureKind.CATEGORICAL:
        cats = [_render_label(c) for c in col.categories]
        return ["" if c < 0 else cats[c] for c in col.values]
    return ["" if m else repr(float(v)) for v, m in zip(col.values, col.missing)]


# ---------------------------------------------------------------------------
# row partitions


@dataclass(frozen=True)
class SplitPlan:
    """Train/validation split, k folds and 2**q blocks from one shuffle."""

    train_rows: np.ndarray
    valid_rows: np.ndarray
    folds: tuple
    blocks: tuple
    seed: int

    def restricted(self, rows):
        """Folds and blocks intersected with ``rows`` (e.g. the training rows)."""
        rows = np.asarray(rows)
        folds = tuple(np.intersect1d(f, rows) for f in self.folds)
        blocks = tuple(np.intersect1d(b, rows) for b in self.blocks)
        return folds, blocks


def make_split_plan(dataset: Dataset, q: int, k: int, valid_fraction: float,
                    seed: int) -> SplitPlan:
    """Partition rows deterministically.

    One seeded shuffle drives everything.  Rows are laid out as the training
    rows followed by the validation rows (grouped by class for classification)
    and then dealt round-robin into folds and blocks, so every fold and block
    receives its share of training rows, validation rows and each class.
    """
    n = dataset.n_rows
    if not 0 <= q <= 20:
        raise ConfigError(f"q must be in [0, 20], got {q}")
    if not 2 <= k <= 20:
        raise ConfigError(f"k must be in [2, 20], got {k}")
    if not 0 < valid_fraction < 0.5:
        raise ConfigError(f"valid_fraction must be in (0, 0.5), got {valid_fraction}")
    n_blocks = 2 ** q
    if n_blocks > n:
        raise ConfigError(f"2**q = {n_blocks} blocks exceed the {n} rows")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    if dataset.task is Task.REGRESSION:
        groups = [perm]
    else:
        y = dataset.target.values[perm]
        groups = [perm[y == c] for c in range(dataset.n_classes)]
    train_parts, valid_parts = [], []
    for g in groups:
        n_valid = int(round(valid_fraction * len(g)))
        valid_parts.append(g[:n_valid])
        train_parts.append(g[n_valid:])
    train_seq = np.concatenate(train_parts)
    valid_seq = np.concatenate(valid_parts)
    if len(train_seq) == 0 or len(valid_seq) == 0:
        raise ConfigError("dataset too small for a train/validation split")
    seq = np.concatenate([train_seq, valid_seq])
    folds = tuple(_frozen(np.sort(seq[j::k])) for j in range(k))
    blocks = tuple(_frozen(np.sort(seq[b::n_blocks])) for b in range(n_blocks))
    return SplitPlan(_frozen(np.sort(train_seq)), _frozen(np.sort(valid_seq)),
                     folds, blocks, seed)
