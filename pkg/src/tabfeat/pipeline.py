"""End-to-end feature generation: expand, prune, rank, fit, report.

:func:`run` takes a dataset and returns a :class:`TransformSpec` (the chosen
expressions with their fitted statistics) plus a :class:`RunReport`.
:func:`apply` materializes a spec on any table with the same base columns.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from . import gbdt
from .boost_eval import (BasePredictions, holdout_split, materialize, objective_for,
                         params_for, to_matrix)
from .dataframe import Dataset, FeatureKind, Task, make_split_plan
from .exceptions import ConfigError, ParseError, SchemaError
from .gbdt import BoostParams
from .ops import (CATALOG, OPERATORS, Base, FittedStats, Mode, NodeStats, as_expr,
                  expand, expr_kind, fit_transform, get_operator, parse_expr, transform)
from .pruning import feature_attribution, successive_pruning

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    q: int = 0
    k_folds: int = 5
    top_k: int = 10
    max_order: int = 1
    mode: Mode = Mode.TRAIN_FIT
    valid_fraction: float = 0.2
    seed: int = 0
    threads: int = 1
    stage1_params: BoostParams = gbdt.STAGE1_PARAMS
    stage2_params: BoostParams = gbdt.STAGE2_PARAMS
    base_params: BoostParams = gbdt.STAGE2_PARAMS
    operators: tuple = tuple(op.name for op in CATALOG)
    restrict_higher_order: bool = True
    metric: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.top_k < 1:
            raise ConfigError("top_k must be at least 1")
        if self.max_order < 1:
            raise ConfigError("max_order must be at least 1")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        try:
            ops = tuple(get_operator(o).name for o in self.operators)
        except KeyError as e:
            raise ConfigError(f"unknown operator {e.args[0]!r}") from None
        object.__setattr__(self, "operators", ops)
        if self.metric is not None and self.metric not in METRICS:
            raise ConfigError(f"unknown metric {self.metric!r}; choose from {sorted(METRICS)}")

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def config_hash(self):
        """Hash of every setting that can change the result (not ``threads``)."""
        d = dataclasses.asdict(self)
        d.pop("threads")
        blob = json.dumps(d, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# metrics


def rmse(y, pred):
    return float(np.sqrt(np.mean((np.asarray(y, float) - np.asarray(pred, float)) ** 2)))


def auc(y, score):
    """Area under the ROC curve with average ranks for ties."""
    y = np.asarray(y)
    pos = y == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes")
    r = rankdata(score)
    return float((r[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def accuracy(y, score):
    """Share of correct labels; 1-d scores are binary margins (class 1 if > 0)."""
    score = np.asarray(score)
    pred = score.argmax(axis=1) if score.ndim == 2 else (score > 0).astype(int)
    return float(np.mean(pred == np.asarray(y)))


METRICS = {"rmse": rmse, "auc": auc, "accuracy": accuracy}
LOWER_IS_BETTER = {"rmse"}


def default_metric(task: Task) -> str:
    return {Task.REGRESSION: "rmse", Task.BINARY: "auc", Task.MULTICLASS: "accuracy"}[task]


def metric(name, y, score):
    return METRICS[name](y, score)


# ---------------------------------------------------------------------------
# base model


def base_predictions(dataset: Dataset, base_exprs, folds, params: BoostParams = gbdt.STAGE2_PARAMS,
                     *, stat_rows=None, mode=Mode.TRAIN_FIT, valid_fraction=0.2,
                     threads=1) -> BasePredictions:
    """Out-of-fold raw margins of a model on ``base_exprs``.

    Each fold is predicted by a model trained on the other folds, which
    early-stops on a holdout carved from its own training rows.  Rows in no
    fold get NaN.
    """
    folds = [np.asarray(f, dtype=np.int64) for f in folds]
    if len(folds) < 2:
        raise ConfigError("need at least two folds")
    covered = np.sort(np.concatenate(folds))
    params = params_for(dataset, params)
    cols = materialize([as_expr(e) for e in base_exprs], dataset, np.arange(dataset.n_rows),
                       covered if stat_rows is None else stat_rows, mode)
    X, cat = to_matrix(cols)
    names = [c.name for c in cols]
    y = dataset.y()
    k = dataset.n_classes if dataset.task is Task.MULTICLASS else 1
    margins = np.full((dataset.n_rows, k), np.nan)
    for j, fold in enumerate(folds):
        train_rows = np.setdiff1d(covered, fold)
        if dataset.task is not Task.REGRESSION:
            absent = set(range(dataset.n_classes)) - set(np.unique(y[train_rows]).astype(int))
            if absent:
                raise ConfigError(f"class(es) {sorted(absent)} absent from the training "
                                  f"part of fold {j}; use fewer folds")

    def fold_margins(fold):
        train_rows = np.setdiff1d(covered, fold)
        fit_pos, hold_pos = holdout_split(train_rows.size, valid_fraction, params.seed)
        model = gbdt.train(X, y, None, train_rows[fit_pos], train_rows[hold_pos], params,
                           cat, names)
        return gbdt.predict(model, X, rows=fold).reshape(fold.size, k)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            preds = list(pool.map(fold_margins, folds))
    else:
        preds = [fold_margins(f) for f in folds]
    for fold, pred in zip(folds, preds):
        margins[fold] = pred
    if k == 1:
        margins = margins[:, 0]
    return BasePredictions(margins, objective_for(dataset), dataset.n_classes)


def holdout_metric(dataset: Dataset, exprs, train_rows, test_rows, params: BoostParams,
                   name, *, stat_rows=None, mode=Mode.TRAIN_FIT, valid_fraction=0.2, stats=None):
    """Train on ``train_rows`` (internal early-stopping holdout), score ``test_rows``."""
    params = params_for(dataset, params)
    all_rows = np.arange(dataset.n_rows)
    if stats is not None:
        cols = [transform(as_expr(e), dataset, all_rows, stats) for e in exprs]
    else:
        cols = materialize([as_expr(e) for e in exprs], dataset, all_rows,
                           train_rows if stat_rows is None else stat_rows, mode)
    X, cat = to_matrix(cols)
    fit_pos, hold_pos = holdout_split(train_rows.size, valid_fraction, params.seed)
    model = gbdt.train(X, dataset.y(), None, train_rows[fit_pos], train_rows[hold_pos], params,
                       cat, [c.name for c in cols])
    score = gbdt.predict(model, X, rows=test_rows)
    return metric(name, dataset.y()[test_rows], score)


# ---------------------------------------------------------------------------
# transform spec

_FORMAT = "tabfeat-transform-spec/1"


def _to_jsonable(x):
    if x is None or isinstance(x, (str, bool)):
        return x
    if isinstance(x, (tuple, list)):
        return [_to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_to_jsonable(v) for v in x.tolist()]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, (int, float)):
        return x
    raise TypeError(f"cannot serialize {x!r}")


def _from_jsonable(x):
    if isinstance(x, list):
        return tuple(_from_jsonable(v) for v in x)
    return x


def _dump(x):
    return json.dumps(_to_jsonable(x), ensure_ascii=False, allow_nan=True)


@dataclass
class TransformSpec:
    """Selected expressions, their scores and every fitted statistic."""

    exprs: list
    stats: FittedStats
    scores: list = field(default_factory=list)      # (delta, importance) per expr
    base_kinds: dict = field(default_factory=dict)
    mode: Mode = Mode.TRAIN_FIT
    config_hash: str = ""
    seed: int = 0
    fingerprint: str = ""

    def __eq__(self, other):
        if not isinstance(other, TransformSpec):
            return NotImplemented
        return (self.exprs == other.exprs and self.stats == other.stats
                and self.scores == other.scores and self.base_kinds == other.base_kinds
                and self.mode == other.mode and self.config_hash == other.config_hash
                and self.seed == other.seed and self.fingerprint == other.fingerprint)

    @property
    def names(self):
        return [e.text for e in self.exprs]

    def to_text(self) -> str:
        lines = [
            f"#format={_FORMAT}",
            f"#config_hash={self.config_hash}",
            f"#seed={self.seed}",
            f"#dataset_fingerprint={self.fingerprint}",
            f"#mode={Mode(self.mode).value}",
            f"#n_fit={self.stats.n_fit}",
            f"#fit_digest={self.stats.fit_digest}",
            "#base_kinds=" + json.dumps({k: FeatureKind(v).value
                                          for k, v in self.base_kinds.items()}),
            "rank\timportance\tdelta\texpression",
        ]
        for i, (e, (delta, imp)) in enumerate(zip(self.exprs, self.scores), 1):
            lines.append(f"{i}\t{imp!r}\t{delta!r}\t{e.text}")
        lines.append("#stats")
        for key, st in self.stats.nodes.items():
            for lab, val in st.table.items():
                lines.append(f"{key}\t{_dump(lab)}\t{_dump(val)}")
            if st.fallback is not None:
                lines.append(f"{key}\t*\t{_dump(st.fallback)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TransformSpec":
        header, exprs, scores = {}, [], []
        nodes = {}
        in_stats = False
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line:
                continue
            if line == "#stats":
                in_stats = True
                continue
            if line.startswith("#") and not in_stats:
                key, _, value = line[1:].partition("=")
                header[key] = value
                continue
            parts = line.split("\t")
            if in_stats:
                if len(parts) != 3:
                    raise ParseError("stats line needs 3 tab-separated fields", line=lineno)
                node, lab, val = parts
                if node not in nodes:
                    op = parse_expr(node).op
                    nodes[node] = NodeStats(op, {}, None)
                st = nodes[node]
                v = json.loads(val)
                if st.op == "GroupByThenRank":
                    v = np.asarray(v, dtype=np.float64)
                elif isinstance(v, list):
                    v = _from_jsonable(v)
                if lab == "*":
                    st.fallback = v
                else:
                    st.table[_from_jsonable(json.loads(lab))] = v
                continue
            if parts[0] == "rank":
                continue
            if len(parts) != 4:
                raise ParseError("record line needs 4 tab-separated fields", line=lineno)
            try:
                scores.append((float(parts[2]), float(parts[1])))
            except ValueError:
                raise ParseError("bad score value", line=lineno) from None
            exprs.append(parse_expr(parts[3]))
        if header.get("format") != _FORMAT:
            raise ParseError(f"not a transform spec (format {header.get('format')!r})", line=1)
        stats = FittedStats(nodes, int(header.get("n_fit", 0)), header.get("fit_digest", ""))
        kinds = {k: FeatureKind(v) for k, v in json.loads(header.get("base_kinds", "{}")).items()}
        return cls(exprs, stats, scores, kinds, Mode(header.get("mode", "trainfit")),
                   header.get("config_hash", ""), int(header.get("seed", 0)),
                   header.get("dataset_fingerprint", ""))

    def save(self, path):
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def apply(spec: TransformSpec, dataset: Dataset) -> Dataset:
    """Append the spec's features to ``dataset`` using the fitted statistics."""
    needed = set()
    for e in spec.exprs:
        needed |= e.base_names()
    absent = sorted(n for n in needed if n not in dataset)
    if absent:
        raise SchemaError(f"missing base column(s): {', '.join(absent)}", absent)
    for name in sorted(needed):
        want = spec.base_kinds.get(name)
        have = dataset.column(name).kind
        if want is not None and want.is_categorical != have.is_categorical:
            raise SchemaError(f"column {name!r} is {have.value}, spec expects {want.value}",
                              [name])
    new = [transform(e, dataset, None, spec.stats) for e in spec.exprs]
    return dataset.with_columns(c for c in new if c.name not in dataset)


# ---------------------------------------------------------------------------
# the run


@dataclass
class OrderReport:
    order: int
    n_candidates: int
    n_stage1: int
    n_stage2: int
    n_accepted: int
    seconds: float


@dataclass
class RunReport:
    orders: list = field(default_factory=list)
    metric: str = ""
    base_metric: float = math.nan
    augmented_metric: float = math.nan
    seconds: dict = field(default_factory=dict)
    schedules: list = field(default_factory=list)

    def to_text(self):
        lines = ["order\tcandidates\tstage1\tstage2\taccepted\tseconds"]
        for o in self.orders:
            lines.append(f"{o.order}\t{o.n_candidates}\t{o.n_stage1}\t{o.n_stage2}\t"
                         f"{o.n_accepted}\t{o.seconds:.2f}")
        lines.append(f"{self.metric} base={self.base_metric:.6g} "
                     f"augmented={self.augmented_metric:.6g}")
        return "\n".join(lines)


def run(dataset: Dataset, config: PipelineConfig = PipelineConfig(), base=None):
    """Generate features for ``dataset``; returns (TransformSpec, RunReport).

    Selection only looks at the training rows of a seeded split; the
    validation rows are kept for the final base-vs-augmented metric.
    ``base`` names the base columns (default: all columns).
    """
    t_start = time.perf_counter()
    cfg = config
    kinds = dataset.kinds()
    base_names = list(dataset.names if base is None else base)
    for n in base_names:
        if n not in dataset:
            raise SchemaError(f"missing base column {n!r}", [n])
    plan = make_split_plan(dataset, cfg.q, cfg.k_folds, cfg.valid_fraction, cfg.seed)
    train_rows, valid_rows = plan.train_rows, plan.valid_rows
    folds, blocks = plan.restricted(train_rows)
    stat_rows = train_rows if cfg.mode is Mode.TRAIN_FIT else np.arange(dataset.n_rows)
    seeded = lambda p: p.replace(seed=cfg.seed)  # noqa: E731
    p1, p2, pb = seeded(cfg.stage1_params), seeded(cfg.stage2_params), seeded(cfg.base_params)
    catalog = [OPERATORS[o] for o in cfg.operators]
    report = RunReport(metric=cfg.metric or default_metric(dataset.task))

    current = [Base(n) for n in base_names]
    feature_kinds = {e: kinds[e.name] for e in current}
    accepted = []
    new_feats = None
    for order in range(1, cfg.max_order + 1):
        t0 = time.perf_counter()
        base_preds = base_predictions(dataset, current, folds, pb, stat_rows=stat_rows,
                                      mode=cfg.mode, valid_fraction=cfg.valid_fraction,
                                      threads=cfg.threads)
        must = new_feats if (order > 1 and cfg.restrict_higher_order) else None
        existing = set(current)
        cands = [c for c in expand([(e, feature_kinds[e]) for e in current], catalog, must)
                 if c not in existing]
        survivors, schedule = successive_pruning(
            cands, dataset, base_preds, blocks, p1, stat_rows=stat_rows, mode=cfg.mode,
            valid_fraction=cfg.valid_fraction, seed=cfg.seed, threads=cfg.threads,
            return_schedule=True)
        report.schedules.append(schedule)
        ranked = feature_attribution(survivors, current, dataset, base_preds, p2,
                                     rows=train_rows, stat_rows=stat_rows, mode=cfg.mode,
                                     valid_fraction=cfg.valid_fraction)
        chosen = ranked[: cfg.top_k]
        report.orders.append(OrderReport(order, len(cands), len(survivors), len(ranked),
                                         len(chosen), time.perf_counter() - t0))
        log.info("order %d: %d candidates, %d after stage one, %d accepted",
                 order, len(cands), len(survivors), len(chosen))
        if not chosen:
            break
        accepted.extend(chosen)
        new_feats = [c.expr for c in chosen]
        for e in new_feats:
            feature_kinds[e] = expr_kind(e, kinds)
        current = current + new_feats
    report.seconds["selection"] = time.perf_counter() - t_start

    stats = FittedStats()
    all_rows = np.arange(dataset.n_rows)
    for c in accepted:
        stats.merge(fit_transform(c.expr, dataset, stat_rows, all_rows, cfg.mode)[1])
    stats.n_fit = int(stat_rows.size)
    stats.fit_digest = hashlib.sha256(stat_rows.astype(np.int64).tobytes()).hexdigest()[:16]
    spec = TransformSpec([c.expr for c in accepted], stats,
                         [(c.delta.delta, c.importance) for c in accepted],
                         {n: kinds[n] for n in base_names}, cfg.mode, cfg.config_hash(),
                         cfg.seed, dataset.fingerprint())

    t0 = time.perf_counter()
    base_exprs = [Base(n) for n in base_names]
    report.base_metric = holdout_metric(dataset, base_exprs, train_rows, valid_rows, pb,
                                        report.metric, valid_fraction=cfg.valid_fraction)
    if accepted:
        report.augmented_metric = holdout_metric(
            dataset, base_exprs + spec.exprs, train_rows, valid_rows, pb, report.metric,
            valid_fraction=cfg.valid_fraction, stats=stats)
    else:
        report.augmented_metric = report.base_metric
    report.seconds["metric"] = time.perf_counter() - t0
    report.seconds["total"] = time.perf_counter() - t_start
    return spec, report
