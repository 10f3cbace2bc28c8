"""Two-stage candidate pruning.

Stage one scores each candidate alone by residual boosting on growing,
nested subsets of the rows and halves the pool after every round.  Stage two
fits one residual model on the base features plus all survivors and ranks
the survivors by their split-gain importance.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import gbdt
from .boost_eval import BasePredictions, DeltaScore, evaluate_full, feature_boost
from .dataframe import Column, Dataset, FeatureKind, SplitPlan
from .gbdt import BoostParams
from .ops import Mode, as_expr, fit_transform

# mantissa bits kept when comparing candidate values (about 12 significant digits)
_MANTISSA_BITS = 40


@dataclass
class Candidate:
    expr: object
    delta: DeltaScore | None = None
    importance: float | None = None

    @property
    def text(self):
        return self.expr.text

    @property
    def score(self):
        return -math.inf if self.delta is None else self.delta.delta


@dataclass
class HalvingSchedule:
    """What happened in each round of stage one.

    ``counts[0]`` is the initial pool size and ``counts[i + 1]`` the pool after
    round ``i`` (before the final positive-delta filter).
    """

    q: int
    subset_sizes: list = field(default_factory=list)
    counts: list = field(default_factory=list)
    duplicates: list = field(default_factory=list)
    final_count: int = 0


def value_key(col: Column) -> bytes:
    """Bytes identifying a column's values up to ~12 significant digits."""
    if col.kind is FeatureKind.CATEGORICAL:
        return b"c" + np.asarray(col.values, dtype=np.int64).tobytes()
    v = np.asarray(col.values, dtype=np.float64)
    nan = np.isnan(v)
    mant, expo = np.frexp(np.where(nan | np.isinf(v), 0.0, v))
    mant = np.round(mant * 2.0 ** _MANTISSA_BITS).astype(np.int64)
    mant[nan] = np.iinfo(np.int64).min
    mant[np.isposinf(v)] = np.iinfo(np.int64).max
    mant[np.isneginf(v)] = np.iinfo(np.int64).max - 1
    # a mantissa rounded up to 1.0 is the same number as the next exponent's 0.5
    carry = np.abs(mant) == 2 ** _MANTISSA_BITS
    mant[carry] //= 2
    expo = expo + carry
    expo[nan | np.isinf(v) | (v == 0)] = 0
    return b"n" + mant.tobytes() + expo.astype(np.int64).tobytes()


def block_order(n_blocks, seed):
    """Seeded order in which blocks join the nested subsets."""
    return np.random.default_rng(seed).permutation(n_blocks)


def _blocks_of(plan, rows):
    blocks = plan.blocks if isinstance(plan, SplitPlan) else plan
    blocks = [np.asarray(b, dtype=np.int64) for b in blocks]
    if rows is not None:
        blocks = [np.intersect1d(b, rows) for b in blocks]
    n = len(blocks)
    if n & (n - 1) or n == 0:
        raise ValueError(f"number of blocks must be a power of two, got {n}")
    return blocks


def _map(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def successive_pruning(candidates, dataset: Dataset, base: BasePredictions, plan,
                       params: BoostParams = gbdt.STAGE1_PARAMS, *, rows=None,
                       stat_rows=None, mode=Mode.TRAIN_FIT, valid_fraction=0.2,
                       seed=0, threads=1, return_schedule=False):
    """Successive featurewise halving over nested row subsets.

    ``plan`` is a SplitPlan or a sequence of 2**q row blocks; with ``rows``
    the blocks are restricted to those rows.  Round ``i`` (``i = 0..q``)
    scores the live candidates on the union of ``2**i`` blocks and keeps the
    best half, so ``q + 1`` halvings happen in all; value-identical candidates
    are dropped on the way, keeping the first by canonical string.  With a
    single block there is no halving.
    Survivors must finally have a positive delta.  Statistics of stateful
    candidates are fitted on ``stat_rows`` (default: the evaluated subset).
    """
    blocks = _blocks_of(plan, rows)
    q = len(blocks).bit_length() - 1
    order = block_order(len(blocks), seed)
    pool = sorted((c if isinstance(c, Candidate) else Candidate(as_expr(c)) for c in candidates),
                  key=lambda c: c.text)
    schedule = HalvingSchedule(q, counts=[len(pool)])

    def score(args):
        cand, subset = args
        fit = subset if stat_rows is None else stat_rows
        col = fit_transform(cand.expr, dataset, fit, subset, mode)[0]
        return col

    for i in range(q + 1):
        subset = np.sort(np.concatenate([blocks[b] for b in order[: 2 ** i]]))
        schedule.subset_sizes.append(int(subset.size))
        cols = _map(score, [(c, subset) for c in pool], threads)
        seen, kept, kept_cols, dups = set(), [], [], 0
        for c, col in zip(pool, cols):
            key = value_key(col)
            if key in seen:
                dups += 1
                continue
            seen.add(key)
            kept.append(c)
            kept_cols.append(col)
        schedule.duplicates.append(dups)
        deltas = _map(lambda col: feature_boost(dataset, [col], base, subset, params,
                                                valid_fraction),
                      kept_cols, threads)
        pool = [replace(c, delta=d) for c, d in zip(kept, deltas)]
        if q > 0:
            pool = sorted(pool, key=lambda c: (-c.score, c.text))[: math.ceil(len(pool) / 2)]
            pool.sort(key=lambda c: c.text)
        schedule.counts.append(len(pool))
    survivors = [c for c in pool if c.score > 0]
    survivors.sort(key=lambda c: (-c.score, c.text))
    schedule.final_count = len(survivors)
    return (survivors, schedule) if return_schedule else survivors


def feature_attribution(survivors, base_exprs, dataset: Dataset, base: BasePredictions,
                        params: BoostParams = gbdt.STAGE2_PARAMS, *, rows=None,
                        stat_rows=None, mode=Mode.TRAIN_FIT, valid_fraction=0.2):
    """Rank survivors by their share of split gain in a joint residual model.

    Ties are broken by delta (descending) then canonical string.  The result
    does not depend on the order of ``survivors``.
    """
    cands = sorted((c if isinstance(c, Candidate) else Candidate(as_expr(c)) for c in survivors),
                   key=lambda c: c.text)
    if not cands:
        return []
    rows = base.covered() if rows is None else np.asarray(rows, dtype=np.int64)
    _, model = evaluate_full(dataset, [as_expr(e) for e in base_exprs],
                             [c.expr for c in cands], base, params, rows, valid_fraction,
                             fit_rows=rows if stat_rows is None else stat_rows, mode=mode)
    imp = gbdt.mdi(model)
    ranked = [replace(c, importance=imp.get(c.text, 0.0)) for c in cands]
    ranked.sort(key=lambda c: (-c.importance, -c.score, c.text))
    return ranked


def select_top_k(ranked, k):
    if k < 0:
        raise ValueError("k must be non-negative")
    return [c.expr for c in ranked[:k]]
