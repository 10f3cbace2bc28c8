"""Operator catalog, feature expressions and their evaluation.

Expressions are small immutable trees: :class:`Base` names an input column
and :class:`Apply` applies a catalog operator to child expressions.  Their
canonical text form (prefix notation) doubles as the column name of the
generated feature and as the on-disk format.

Stateful operators (frequencies, group-by statistics, category combination)
are *fitted* on one set of rows and *applied* to another.  Fitted tables are
keyed by original labels, never by internal codes, so they can be applied to
a freshly loaded table.
"""
from __future__ import annotations

import enum
import hashlib
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence, Union

import numpy as np
from scipy.special import expit

from .dataframe import Column, Dataset, FeatureKind
from .exceptions import ConfigError, ParseError, SchemaError


class Mode(str, enum.Enum):
    """Which rows feed fitted statistics."""

    TRAIN_FIT = "trainfit"
    TRANSDUCTIVE = "transductive"


NUM, CAT, ANY = "num", "cat", "any"


@dataclass(frozen=True)
class Operator:
    name: str
    arity: int
    roles: tuple
    output_kind: FeatureKind = FeatureKind.NUMERICAL
    commutative: bool = False
    stateful: bool = False

    @property
    def input_kinds(self):
        return self.roles


def _op(name, roles, **kw):
    return Operator(name, len(roles), tuple(roles), **kw)


CATALOG = (
    _op("freq", [ANY], stateful=True),
    _op("abs", [NUM]),
    _op("log", [NUM]),
    _op("sqrt", [NUM]),
    _op("sigmoid", [NUM]),
    _op("round", [NUM]),
    _op("residual", [NUM]),
    _op("min", [NUM, NUM], commutative=True),
    _op("max", [NUM, NUM], commutative=True),
    _op("add", [NUM, NUM], commutative=True),
    _op("sub", [NUM, NUM]),
    _op("mul", [NUM, NUM], commutative=True),
    _op("div", [NUM, NUM]),
    _op("GroupByThenMin", [NUM, CAT], stateful=True),
    _op("GroupByThenMax", [NUM, CAT], stateful=True),
    _op("GroupByThenMean", [NUM, CAT], stateful=True),
    _op("GroupByThenMedian", [NUM, CAT], stateful=True),
    _op("GroupByThenStd", [NUM, CAT], stateful=True),
    _op("GroupByThenRank", [NUM, CAT], stateful=True),
    _op("Combine", [CAT, CAT], output_kind=FeatureKind.CATEGORICAL, commutative=True, stateful=True),
    _op("CombineThenFreq", [CAT, CAT], commutative=True, stateful=True),
    _op("GroupByThenNUnique", [CAT, CAT], stateful=True),
)
OPERATORS = {op.name: op for op in CATALOG}
_OPS_LOWER = {op.name.lower(): op for op in CATALOG}


def get_operator(name) -> Operator:
    op = OPERATORS.get(name) or _OPS_LOWER.get(name.lower())
    if op is None:
        raise KeyError(name)
    return op


# ---------------------------------------------------------------------------
# expressions

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*")


def _quote(name):
    if _IDENT.fullmatch(name):
        return name
    return "`" + name.replace("`", "``") + "`"


@dataclass(frozen=True)
class Base:
    name: str

    order = 0

    @cached_property
    def text(self):
        return _quote(self.name)

    def __str__(self):
        return self.text

    def base_names(self):
        return {self.name}

    def walk(self):
        yield self


@dataclass(frozen=True)
class Apply:
    op: str
    args: tuple

    @cached_property
    def operator(self):
        return OPERATORS[self.op]

    @cached_property
    def order(self):
        return 1 + max(a.order for a in self.args)

    @cached_property
    def text(self):
        return f"{self.op}({','.join(a.text for a in self.args)})"

    def __str__(self):
        return self.text

    def base_names(self):
        out = set()
        for a in self.args:
            out |= a.base_names()
        return out

    def walk(self):
        """Post-order traversal (children before parents)."""
        for a in self.args:
            yield from a.walk()
        yield self

    @property
    def stateful(self):
        return any(isinstance(n, Apply) and n.operator.stateful for n in self.walk())


FeatureExpr = Union[Base, Apply]


def as_expr(x) -> FeatureExpr:
    if isinstance(x, (Base, Apply)):
        return x
    if isinstance(x, str):
        return Base(x)
    raise TypeError(f"not a feature expression: {x!r}")


def make(op, *args) -> Apply:
    """Build an application in canonical form (commutative children sorted)."""
    operator = get_operator(op)
    args = tuple(as_expr(a) for a in args)
    if len(args) != operator.arity:
        raise ValueError(f"{operator.name} takes {operator.arity} argument(s), got {len(args)}")
    if operator.commutative:
        args = tuple(sorted(args, key=lambda a: a.text))
    return Apply(operator.name, args)


def canonical_string(expr) -> str:
    return as_expr(expr).text


def is_stateful(expr) -> bool:
    return isinstance(expr, Apply) and expr.stateful


def _fits(kind, role):
    if role == ANY:
        return True
    if role == NUM:
        return kind.is_numeric
    return kind.is_categorical


def expr_kind(expr, kinds: Mapping) -> FeatureKind:
    """Output kind of ``expr`` given base column kinds; raises on type errors."""
    expr = as_expr(expr)
    if isinstance(expr, Base):
        try:
            return FeatureKind(kinds[expr.name])
        except KeyError:
            raise SchemaError(f"unknown base column {expr.name!r}", [expr.name]) from None
    op = expr.operator
    for arg, role in zip(expr.args, op.roles):
        k = expr_kind(arg, kinds)
        if not _fits(k, role):
            raise ConfigError(f"{expr.text}: argument {arg.text} of kind {k.value} "
                              f"cannot be used as {role}")
    return op.output_kind


# ---------------------------------------------------------------------------
# parsing


def parse_expr(text: str) -> FeatureExpr:
    """Parse prefix notation, e.g. ``GroupByThenMean(num_diagnose,age)``."""
    parser = _Parser(text)
    expr = parser.expr()
    parser.skip_ws()
    if parser.pos != len(text):
        parser.fail("unexpected trailing input")
    return expr


class _Parser:
    def __init__(self, text):
        self.text = text
        self.pos = 0

    def fail(self, msg, pos=None):
        pos = self.pos if pos is None else pos
        raise ParseError(msg, offset=len(self.text[:pos].encode("utf-8")))

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self):
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch):
        if self.peek() != ch:
            self.fail(f"expected {ch!r}")
        self.pos += 1

    def ident(self):
        self.skip_ws()
        start = self.pos
        if self.peek() == "`":
            self.pos += 1
            out = []
            while True:
                j = self.text.find("`", self.pos)
                if j < 0:
                    self.fail("unterminated quoted name", start)
                out.append(self.text[self.pos:j])
                if self.text[j + 1:j + 2] == "`":
                    out.append("`")
                    self.pos = j + 2
                    continue
                self.pos = j + 1
                return "".join(out), True, start
        m = _IDENT.match(self.text, self.pos)
        if not m:
            self.fail("expected a name")
        self.pos = m.end()
        return m.group(), False, start

    def expr(self):
        name, quoted, start = self.ident()
        if quoted or self.peek() != "(":
            return Base(name)
        try:
            op = get_operator(name)
        except KeyError:
            self.fail(f"unknown operator {name!r}", start)
        self.pos += 1
        args = [self.expr()]
        while self.peek() == ",":
            self.pos += 1
            args.append(self.expr())
        if self.peek() != ")":
            if self.pos >= len(self.text):
                self.fail("unbalanced parentheses")
            self.fail("expected ',' or ')'")
        self.pos += 1
        if len(args) != op.arity:
            self.fail(f"{op.name} takes {op.arity} argument(s), got {len(args)}", start)
        return make(op.name, *args)


# ---------------------------------------------------------------------------
# expansion


def expand(base: Sequence, catalog: Iterable[Operator] = CATALOG,
           must_include: Iterable | None = None) -> list:
    """Enumerate every type-valid first-order application over ``base``.

    ``base`` is a sequence of ``(feature, kind)`` pairs where ``feature`` is a
    column name or an expression.  With ``must_include`` only candidates
    using at least one of those features are returned (used for higher
    orders).  Self-pairs are never generated.
    """
    feats = [(as_expr(f), FeatureKind(k)) for f, k in base]
    if not feats:
        raise ValueError("expand needs at least one base feature")
    required = None if must_include is None else {as_expr(f) for f in must_include}
    out, seen = [], set()

    def emit(op, args):
        if required is not None and not required.intersection(args):
            return
        e = make(op.name, *args)
        if e not in seen:
            seen.add(e)
            out.append(e)

    for op in catalog:
        if op.arity == 1:
            for f, k in feats:
                if _fits(k, op.roles[0]):
                    emit(op, (f,))
            continue
        r1, r2 = op.roles
        for i, (fi, ki) in enumerate(feats):
            if not _fits(ki, r1):
                continue
            js = range(i + 1, len(feats)) if op.commutative else range(len(feats))
            for j in js:
                fj, kj = feats[j]
                if j == i or not _fits(kj, r2):
                    continue
                emit(op, (fi, fj))
    return out


# ---------------------------------------------------------------------------
# evaluation

class _Unknown:
    def __repr__(self):
        return "<unknown>"


UNKNOWN = _Unknown()


@dataclass
class _Num:
    values: np.ndarray  # NaN = missing


@dataclass
class _Cat:
    codes: np.ndarray  # -1 = missing
    labels: list


@dataclass
class NodeStats:
    """Fitted table of one stateful node: label -> statistic, plus fallback."""

    op: str
    table: dict
    fallback: object = None

    def __eq__(self, other):
        if not isinstance(other, NodeStats) or other.op != self.op:
            return False
        if self.table.keys() != other.table.keys():
            return False
        return all(_stat_equal(self.table[k], other.table[k]) for k in self.table) and \
            _stat_equal(self.fallback, other.fallback)


def _stat_equal(a, b):
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return np.array_equal(np.asarray(a), np.asarray(b), equal_nan=True)
    if isinstance(a, float) and isinstance(b, float) and np.isnan(a) and np.isnan(b):
        return True
    return a == b


@dataclass
class FittedStats:
    """Per-node fitted tables keyed by the node's canonical string."""

    nodes: dict = field(default_factory=dict)
    n_fit: int = 0
    fit_digest: str = ""

    def merge(self, other: "FittedStats"):
        for k, v in other.nodes.items():
            self.nodes.setdefault(k, v)
        return self

    def __eq__(self, other):
        return isinstance(other, FittedStats) and self.nodes == other.nodes


def _row_digest(rows):
    return hashlib.sha256(np.asarray(rows, dtype=np.int64).tobytes()).hexdigest()[:16]


def _factorize_float(values):
    missing = np.isnan(values)
    uniq, inv = np.unique(values[~missing], return_inverse=True)
    codes = np.full(values.shape[0], -1, dtype=np.int64)
    codes[~missing] = inv
    return _Cat(codes, [float(u) for u in uniq])


def _as_role(v, role):
    if role == NUM:
        if not isinstance(v, _Num):
            raise ConfigError("categorical value used where a numerical one is required")
        return v
    if isinstance(v, _Cat):
        return v
    return _factorize_float(v.values)


def _clean(a):
    a = np.asarray(a, dtype=np.float64)
    a[~np.isfinite(a)] = np.nan
    return a


def _round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _elementwise(op, a, b=None):
    with np.errstate(all="ignore"):
        if op == "abs":
            out = np.abs(a)
        elif op == "log":
            out = np.where(a > 0, np.log(np.where(a > 0, a, 1.0)), np.nan)
        elif op == "sqrt":
            out = np.where(a >= 0, np.sqrt(np.where(a >= 0, a, 0.0)), np.nan)
        elif op == "sigmoid":
            out = expit(a)
        elif op == "round":
            out = _round_half_away(a)
        elif op == "residual":
            out = a - np.trunc(a)
        elif op == "min":
            out = np.minimum(a, b)
        elif op == "max":
            out = np.maximum(a, b)
        elif op == "add":
            out = a + b
        elif op == "sub":
            out = a - b
        elif op == "mul":
            out = a * b
        elif op == "div":
            out = np.where(b != 0, a / np.where(b != 0, b, 1.0), np.nan)
        else:
            raise KeyError(op)
    return _clean(out)


def _per_code(labels, table, fallback):
    """Statistic for every code of ``labels`` (fallback for unseen labels)."""
    return [table.get(lab, fallback) if lab is not UNKNOWN else fallback for lab in labels]


def _gather(per_code, codes, dtype=np.float64):
    arr = np.asarray(per_code, dtype=dtype) if per_code else np.zeros(0, dtype)
    out = np.full(codes.shape[0], np.nan)
    ok = codes >= 0
    out[ok] = arr[codes[ok]]
    return out


# -- group statistics over (value, code) pairs --------------------------------

def _group_reduce(values, codes, n_codes, how):
    """Per-code statistic of ``values`` (already filtered to present rows).

    Returns (stat per code, count per code).
    """
    counts = np.bincount(codes, minlength=n_codes)
    stat = np.full(n_codes, np.nan)
    if values.size == 0:
        return stat, counts
    present = counts > 0
    if how == "mean" or how == "std":
        sums = np.bincount(codes, weights=values, minlength=n_codes)
        mean = np.divide(sums, counts, out=np.full(n_codes, np.nan), where=present)
        if how == "mean":
            return mean, counts
        dev = values - mean[codes]
        ss = np.bincount(codes, weights=dev * dev, minlength=n_codes)
        std = np.sqrt(np.divide(ss, counts, out=np.full(n_codes, np.nan), where=present))
        return std, counts
    order = np.lexsort((values, codes))
    sv, sc = values[order], codes[order]
    starts = np.flatnonzero(np.r_[True, sc[1:] != sc[:-1]])
    group_codes = sc[starts]
    if how == "min":
        stat[group_codes] = sv[starts]
    elif how == "max":
        ends = np.r_[starts[1:], sv.size] - 1
        stat[group_codes] = sv[ends]
    elif how == "median":
        cnt = counts[group_codes]
        lo = starts + (cnt - 1) // 2
        hi = starts + cnt // 2
        stat[group_codes] = 0.5 * (sv[lo] + sv[hi])
    else:
        raise KeyError(how)
    return stat, counts


def _global(values, how):
    if values.size == 0:
        return float("nan")
    if how == "mean":
        return float(values.sum() / values.size)
    if how == "std":
        m = values.sum() / values.size
        return float(np.sqrt(((values - m) ** 2).sum() / values.size))
    if how == "min":
        return float(values.min())
    if how == "max":
        return float(values.max())
    if how == "median":
        s = np.sort(values)
        n = s.size
        return float(0.5 * (s[(n - 1) // 2] + s[n // 2]))
    raise KeyError(how)


_GROUP_HOW = {
    "GroupByThenMin": "min",
    "GroupByThenMax": "max",
    "GroupByThenMean": "mean",
    "GroupByThenMedian": "median",
    "GroupByThenStd": "std",
}


def _freq_fit(v: _Cat, name):
    n = v.codes.shape[0]
    counts = np.bincount(v.codes[v.codes >= 0], minlength=len(v.labels))
    table = {}
    for lab, c in zip(v.labels, counts):
        if c > 0 and lab is not UNKNOWN:
            table[lab] = float(c / n)
    n_missing = int((v.codes < 0).sum())
    if n_missing:
        table[None] = float(n_missing / n)
    return NodeStats(name, table, 0.0)


def _freq_apply(st: NodeStats, v: _Cat):
    out = _gather(_per_code(v.labels, st.table, st.fallback), v.codes)
    out[v.codes < 0] = st.table.get(None, st.fallback)
    return out


def _groupby_fit(name, f: _Num, c: _Cat):
    ok = (c.codes >= 0) & ~np.isnan(f.values)
    vals, codes = f.values[ok], c.codes[ok]
    if name == "GroupByThenRank":
        order = np.lexsort((vals, codes))
        sv, sc = vals[order], codes[order]
        bounds = np.flatnonzero(np.r_[True, sc[1:] != sc[:-1], True]) if sc.size else [0]
        table = {}
        for s, e in zip(bounds[:-1], bounds[1:]):
            lab = c.labels[sc[s]]
            if lab is not UNKNOWN:
                table[lab] = sv[s:e].copy()
        return NodeStats(name, table, np.sort(vals))
    how = _GROUP_HOW[name]
    stat, counts = _group_reduce(vals, codes, len(c.labels), how)
    table = {lab: float(stat[i]) for i, lab in enumerate(c.labels)
             if counts[i] > 0 and lab is not UNKNOWN}
    return NodeStats(name, table, _global(vals, how))


def _rank_in(sorted_vals, x):
    n = sorted_vals.size
    if n == 0:
        return np.full(x.shape, np.nan)
    lo = np.searchsorted(sorted_vals, x, side="left")
    hi = np.searchsorted(sorted_vals, x, side="right")
    return (lo + hi + 1) / (2.0 * n)


def _groupby_apply(st: NodeStats, f: _Num, c: _Cat):
    bad = (c.codes < 0) | np.isnan(f.values)
    if st.op != "GroupByThenRank":
        out = _gather(_per_code(c.labels, st.table, st.fallback), c.codes)
        out[bad] = np.nan
        return out
    out = np.full(f.values.shape[0], np.nan)
    ok = np.flatnonzero(~bad)
    if ok.size == 0:
        return out
    codes = c.codes[ok]
    order = np.argsort(codes, kind="stable")
    sc = codes[order]
    bounds = np.flatnonzero(np.r_[True, sc[1:] != sc[:-1], True])
    for s, e in zip(bounds[:-1], bounds[1:]):
        lab = c.labels[sc[s]]
        ref = st.table.get(lab, st.fallback) if lab is not UNKNOWN else st.fallback
        idx = ok[order[s:e]]
        out[idx] = _rank_in(ref, f.values[idx])
    return out


def _pair_keys(a: _Cat, b: _Cat):
    """Unique (label_a, label_b) pairs present on rows where both exist."""
    ok = (a.codes >= 0) & (b.codes >= 0)
    width = len(b.labels) + 1
    pair = np.where(ok, a.codes * width + b.codes, -1)
    uniq, first, inv = np.unique(pair, return_index=True, return_inverse=True)
    keys = [None if p < 0 else (a.labels[p // width], b.labels[p % width]) for p in uniq]
    return keys, first, inv.reshape(-1)


def _has_unknown(key):
    return key is not None and (key[0] is UNKNOWN or key[1] is UNKNOWN)


def _combine_fit(name, a: _Cat, b: _Cat):
    keys, first, inv = _pair_keys(a, b)
    n = a.codes.shape[0]
    if name == "Combine":
        table = {}
        for u in np.argsort(first, kind="stable"):
            k = keys[u]
            if k is not None and not _has_unknown(k):
                table[k] = len(table)
        return NodeStats(name, table, None)
    counts = np.bincount(inv, minlength=len(keys))
    table = {k: float(cnt / n) for k, cnt in zip(keys, counts)
             if not (k is not None and _has_unknown(k))}
    return NodeStats(name, table, 0.0)


def _combine_apply(st: NodeStats, a: _Cat, b: _Cat):
    keys, _, inv = _pair_keys(a, b)
    if st.op == "Combine":
        unknown = len(st.table)
        per = np.array([-1 if k is None else st.table.get(k, unknown) for k in keys],
                       dtype=np.int64)
        labels = list(st.table) + [UNKNOWN]
        return _Cat(per[inv] if per.size else np.full(inv.shape, -1, np.int64), labels)
    per = np.array([st.table.get(k, st.fallback) for k in keys], dtype=np.float64)
    return per[inv] if per.size else np.zeros(inv.shape)


def _nunique_fit(name, a: _Cat, c: _Cat):
    ok = (a.codes >= 0) & (c.codes >= 0)
    width = len(a.labels) + 1
    pairs = np.unique(c.codes[ok] * width + a.codes[ok])
    per_group = np.bincount(pairs // width, minlength=len(c.labels))
    table = {lab: float(per_group[i]) for i, lab in enumerate(c.labels)
             if per_group[i] > 0 and lab is not UNKNOWN}
    fallback = float(np.unique(a.codes[ok]).size)
    return NodeStats(name, table, fallback)


def _nunique_apply(st: NodeStats, a: _Cat, c: _Cat):
    out = _gather(_per_code(c.labels, st.table, st.fallback), c.codes)
    out[(a.codes < 0) | (c.codes < 0)] = np.nan
    return out


def _fit_node(expr: Apply, args) -> NodeStats:
    op = expr.op
    if op == "freq":
        return _freq_fit(args[0], op)
    if op in ("Combine", "CombineThenFreq"):
        return _combine_fit(op, *args)
    if op == "GroupByThenNUnique":
        return _nunique_fit(op, *args)
    return _groupby_fit(op, *args)


def _apply_node(st: NodeStats, args):
    op = st.op
    if op == "freq":
        return _Num(_freq_apply(st, args[0]))
    if op == "Combine":
        return _combine_apply(st, *args)
    if op == "CombineThenFreq":
        return _Num(_combine_apply(st, *args))
    if op == "GroupByThenNUnique":
        return _Num(_nunique_apply(st, *args))
    return _Num(_groupby_apply(st, *args))


def _base_values(col: Column, rows):
    if col.kind is FeatureKind.CATEGORICAL:
        return _Cat(col.values[rows], list(col.categories))
    return _Num(col.values[rows].astype(np.float64))


def _subset(v, pos):
    if isinstance(v, _Num):
        return _Num(v.values[pos])
    return _Cat(v.codes[pos], v.labels)


def _evaluate(expr, dataset, rows, nodes, stat_pos, memo):
    key = expr.text
    if key in memo:
        return memo[key]
    if isinstance(expr, Base):
        if expr.name not in dataset:
            raise SchemaError(f"missing base column {expr.name!r}", [expr.name])
        out = _base_values(dataset.column(expr.name), rows)
    else:
        op = expr.operator
        args = [_as_role(_evaluate(a, dataset, rows, nodes, stat_pos, memo), r)
                for a, r in zip(expr.args, op.roles)]
        if op.stateful:
            st = nodes.get(key)
            if st is None:
                if stat_pos is None:
                    raise SchemaError(f"no fitted statistics for {key}", [key])
                st = nodes[key] = _fit_node(expr, [_subset(a, stat_pos) for a in args])
            out = _apply_node(st, args)
        else:
            out = _Num(_elementwise(expr.op, *[a.values for a in args]))
    memo[key] = out
    return out


def _to_column(expr, v):
    name = expr.text
    if isinstance(v, _Cat):
        return Column(name, FeatureKind.CATEGORICAL, v.codes, v.codes < 0, tuple(v.labels))
    return Column(name, FeatureKind.NUMERICAL, v.values, np.isnan(v.values))


def fit_transform(expr, dataset: Dataset, fit_rows, apply_rows, mode=Mode.TRAIN_FIT):
    """Fit the statistics ``expr`` needs and materialize it on ``apply_rows``.

    Statistics come from ``fit_rows`` (``Mode.TRAIN_FIT``) or from
    ``fit_rows`` together with ``apply_rows`` (``Mode.TRANSDUCTIVE``).
    Elementwise expressions ignore the mode.  Domain violations (log of a
    non-positive number, division by zero, ...) yield missing values.
    """
    expr = as_expr(expr)
    mode = Mode(mode)
    apply_rows = np.asarray(apply_rows, dtype=np.int64)
    fit_rows = np.unique(np.asarray(fit_rows, dtype=np.int64))
    if fit_rows.size == 0:
        raise ValueError("fit_rows must be non-empty")
    stats = FittedStats()
    if not is_stateful(expr):
        v = _evaluate(expr, dataset, apply_rows, stats.nodes, None, {})
        return _to_column(expr, v), stats
    stat_rows = fit_rows if mode is Mode.TRAIN_FIT else np.union1d(fit_rows, apply_rows)
    eval_rows = np.union1d(stat_rows, apply_rows)
    stat_pos = np.searchsorted(eval_rows, stat_rows)
    v = _evaluate(expr, dataset, eval_rows, stats.nodes, stat_pos, {})
    v = _subset(v, np.searchsorted(eval_rows, apply_rows))
    stats.n_fit = int(stat_rows.size)
    stats.fit_digest = _row_digest(stat_rows)
    return _to_column(expr, v), stats


def transform(expr, dataset: Dataset, rows=None, stats: FittedStats | None = None) -> Column:
    """Materialize ``expr`` on ``rows`` using previously fitted statistics."""
    expr = as_expr(expr)
    rows = np.arange(dataset.n_rows) if rows is None else np.asarray(rows, dtype=np.int64)
    nodes = stats.nodes if stats is not None else {}
    return _to_column(expr, _evaluate(expr, dataset, rows, nodes, None, {}))
