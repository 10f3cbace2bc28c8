"""Histogram gradient boosting with initial margins, early stopping and MDI."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..exceptions import SchemaError
from . import _kernels
from .binning import BinMapper
from .objectives import Objective, base_score, gradients, loss

MIN_HESS = 1e-3


@dataclass(frozen=True)
class BoostParams:
    n_trees: int = 1000
    learning_rate: float = 0.1
    max_leaves: int = 16
    early_stopping_rounds: int = 3
    min_child_samples: int = 20
    max_bins: int = 255
    lambda_l2: float = 1.0
    seed: int = 0
    objective: Objective = Objective.MSE
    n_classes: int = 1

    def __post_init__(self):
        object.__setattr__(self, "objective", Objective(self.objective))
        if self.max_leaves < 2:
            raise ValueError("max_leaves must be at least 2")
        if self.n_trees < 0 or self.learning_rate <= 0:
            raise ValueError("n_trees must be >= 0 and learning_rate > 0")

    def replace(self, **kw):
        return replace(self, **kw)


STAGE1_PARAMS = BoostParams(early_stopping_rounds=3)
STAGE2_PARAMS = BoostParams(early_stopping_rounds=50)


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    missing_left: np.ndarray
    is_categorical: np.ndarray
    cat_mask: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    @property
    def n_leaves(self):
        return int((self.left < 0).sum())

    def arrays(self):
        return (self.feature, self.threshold, self.missing_left, self.is_categorical,
                self.cat_mask, self.left, self.right, self.value)


@dataclass
class BoostModel:
    trees: list                 # per iteration: list of n_outputs trees
    mapper: BinMapper
    base_score: np.ndarray      # per output
    objective: Objective
    n_features: int
    feature_names: list
    best_iteration: int
    train_curve: list = field(default_factory=list)
    valid_curve: list = field(default_factory=list)

    @property
    def n_outputs(self):
        return self.base_score.shape[0]

    @property
    def per_feature_gain(self):
        out = np.zeros(self.n_features)
        for it in self.trees:
            for tree in it:
                split = tree.left >= 0
                np.add.at(out, tree.feature[split], tree.gain[split])
        return out

    def raw_scores(self, binned, start):
        """Add every kept tree to ``start`` (shape (n, n_outputs))."""
        out = np.array(start, dtype=np.float64, copy=True)
        mb = self.mapper.missing_bin
        for it in self.trees:
            for k, tree in enumerate(it):
                col = np.zeros(binned.shape[1])
                _kernels.predict_tree(binned, *tree.arrays(), mb, col)
                out[:, k] += col
        return out


def _as_2d(a, n, k):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.shape != (n, k):
        raise ValueError(f"margin has shape {a.shape}, expected {(n, k)}")
    return a


def _squeeze(scores, objective):
    return scores if Objective(objective) is Objective.SOFTMAX else scores[:, 0]


def train(X, y, margin=None, train_rows=None, valid_rows=None,
          params: BoostParams = BoostParams(), categorical=None,
          feature_names=None) -> BoostModel:
    """Fit a boosted ensemble on ``train_rows`` starting from ``margin``.

    With a margin the ensemble boosts from it (base score 0); without one it
    starts from the best constant.  Training stops when the loss on
    ``valid_rows`` has not improved for ``early_stopping_rounds`` iterations or
    when no tree can split; the model keeps the best iteration.  With no
    validation rows every one of ``n_trees`` iterations is kept.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be two-dimensional")
    n, n_features = X.shape
    y = np.asarray(y, dtype=np.float64)
    obj = params.objective
    k = params.n_classes if obj is Objective.SOFTMAX else 1
    if obj is Objective.SOFTMAX and k < 2:
        k = int(y.max()) + 1
    train_rows = np.arange(n) if train_rows is None else np.asarray(train_rows, np.int64)
    valid_rows = np.zeros(0, np.int64) if valid_rows is None else np.asarray(valid_rows, np.int64)
    if train_rows.size == 0:
        raise ValueError("train_rows must be non-empty")

    mapper = BinMapper(params.max_bins).fit(X[train_rows], categorical)
    b_tr = mapper.transform(X[train_rows])
    b_va = mapper.transform(X[valid_rows])
    y_tr, y_va = y[train_rows], y[valid_rows]

    if margin is None:
        base = np.atleast_1d(np.asarray(base_score(obj, y_tr, k), dtype=np.float64))
        s_tr = np.tile(base, (train_rows.size, 1))
        s_va = np.tile(base, (valid_rows.size, 1))
    else:
        m = _as_2d(margin, n, k)
        base = np.zeros(k)
        s_tr = m[train_rows] + base
        s_va = m[valid_rows] + base

    has_valid = valid_rows.size > 0
    train_curve = [loss(obj, y_tr, _squeeze(s_tr, obj))]
    valid_curve = [loss(obj, y_va, _squeeze(s_va, obj))] if has_valid else []
    best_it, best_loss = 0, (valid_curve[0] if has_valid else np.inf)

    width = params.max_bins + 1
    hg = np.zeros((params.max_leaves, n_features, width))
    hh = np.zeros((params.max_leaves, n_features, width))
    hc = np.zeros((params.max_leaves, n_features, width), dtype=np.int64)
    local_rows = np.arange(train_rows.size, dtype=np.int64)
    n_bins = mapper.n_bins.astype(np.int64)
    is_cat = np.asarray(mapper.is_categorical, dtype=np.bool_)
    mb = mapper.missing_bin

    trees = []
    for it in range(params.n_trees):
        g, h = gradients(obj, y_tr, _squeeze(s_tr, obj))
        if k == 1:
            g, h = g[:, None], h[:, None]
        grown, any_split = [], False
        for c in range(k):
            res = _kernels.grow_tree(b_tr, np.ascontiguousarray(g[:, c]),
                                     np.ascontiguousarray(h[:, c]), local_rows, n_bins,
                                     is_cat, params.max_leaves, params.min_child_samples,
                                     params.lambda_l2, MIN_HESS, params.learning_rate,
                                     hg, hh, hc)
            tree = Tree(*res[:9])
            if tree.left.size > 1:
                any_split = True
            else:
                tree.value[:] = 0.0
            grown.append((tree, res[9] if tree.left.size > 1 else None))
        if not any_split:
            break
        trees.append([t for t, _ in grown])
        for c, (tree, row_vals) in enumerate(grown):
            if row_vals is not None:
                s_tr[:, c] += row_vals
                if has_valid:
                    col = np.zeros(valid_rows.size)
                    _kernels.predict_tree(b_va, *tree.arrays(), mb, col)
                    s_va[:, c] += col
        train_curve.append(loss(obj, y_tr, _squeeze(s_tr, obj)))
        if has_valid:
            vl = loss(obj, y_va, _squeeze(s_va, obj))
            valid_curve.append(vl)
            if vl < best_loss:
                best_loss, best_it = vl, len(trees)
            elif len(trees) - best_it >= params.early_stopping_rounds:
                break
    if not has_valid:
        best_it = len(trees)
    names = list(feature_names) if feature_names is not None else list(range(n_features))
    return BoostModel(trees[:best_it], mapper, base, obj, n_features, names, best_it,
                      train_curve, valid_curve)


def predict(model: BoostModel, X, rows=None, margin=None):
    """Raw scores: ``margin`` (or the base score) plus every kept tree."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise SchemaError(f"X has {X.shape[-1]} features, model expects {model.n_features}")
    if rows is not None:
        X = X[np.asarray(rows, dtype=np.int64)]
    n, k = X.shape[0], model.n_outputs
    if margin is None:
        start = np.tile(model.base_score, (n, 1))
    else:
        m = np.asarray(margin, dtype=np.float64)
        if rows is not None and m.shape[0] != n:
            m = m[np.asarray(rows, dtype=np.int64)]
        start = _as_2d(m, n, k)
    out = model.raw_scores(model.mapper.transform(X), start)
    return _squeeze(out, model.objective)


def mdi(model: BoostModel) -> dict:
    """Split-gain importance per feature, normalized to sum to one."""
    gain = model.per_feature_gain
    total = gain.sum()
    if total <= 0:
        return {name: 0.0 for name in model.feature_names}
    return {name: float(v / total) for name, v in zip(model.feature_names, gain)}
