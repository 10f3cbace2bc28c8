import numpy as np
import pytest
from conftest import full_retrain_delta, interaction_data, oof_base

from tabfeat import gbdt
from tabfeat.boost_eval import (EPSILON, BasePredictions, evaluate_full, feature_boost,
                                holdout_split, materialize, to_matrix)
from tabfeat.dataframe import Column, Dataset
from tabfeat.exceptions import EvaluationError
from tabfeat.gbdt import STAGE1_PARAMS, STAGE2_PARAMS, Objective
from tabfeat.ops import Base, make


@pytest.fixture(scope="module")
def inter():
    ds = interaction_data(2000, seed=0)
    return ds, oof_base(ds, ["x1", "x2"])


class TestFeatureBoost:
    def test_delta_identity(self, inter):
        ds, base = inter
        s = feature_boost(ds, [make("mul", "x1", "x2")], base, np.arange(ds.n_rows))
        assert s.delta == s.base_loss - s.boosted_loss
        assert s.rows_used == 400

    def test_product_helps_and_agrees_with_retrain(self, inter):
        ds, base = inter
        rows = np.arange(ds.n_rows)
        prod = make("mul", "x1", "x2")
        s = feature_boost(ds, [prod], base, rows)
        assert s.delta > 0 and s.trees_used > 0
        oracle = full_retrain_delta(ds, [Base("x1"), Base("x2")], [prod], rows, STAGE1_PARAMS)
        assert np.sign(oracle) == np.sign(s.delta)

    def test_constant_column(self, inter):
        ds, base = inter
        const = Column.from_numeric("c", np.ones(ds.n_rows), "numerical")
        s = feature_boost(ds, [const], base, np.arange(ds.n_rows))
        assert s.delta <= EPSILON and s.trees_used == 0

    def test_target_copy_with_uninformative_base(self, inter, constant_base):
        ds, _ = inter
        base = constant_base(ds)
        leak = Column.from_numeric("leak", ds.y(), "numerical")
        s = feature_boost(ds, [leak], base, np.arange(ds.n_rows))
        assert s.boosted_loss < 0.1 * s.base_loss

    def test_small_holdout_rejected(self, inter):
        ds, base = inter
        with pytest.raises(EvaluationError, match="too small"):
            feature_boost(ds, [make("mul", "x1", "x2")], base, np.arange(40))

    def test_uncovered_rows_rejected(self, inter):
        ds, _ = inter
        m = np.full(ds.n_rows, np.nan)
        m[:1000] = 0.0
        with pytest.raises(EvaluationError, match="cover"):
            feature_boost(ds, ["x1"], BasePredictions(m, Objective.MSE), np.arange(2000))

    def test_in_sample_flag(self, inter):
        ds, base = inter
        s = feature_boost(ds, [make("mul", "x1", "x2")], base, np.arange(ds.n_rows),
                          in_sample=True)
        assert s.rows_used == ds.n_rows and s.delta > 0

    def test_binary_task(self):
        rng = np.random.default_rng(0)
        x1, x2 = rng.normal(size=(2, 1500))
        y = (x1 * x2 + rng.normal(0, 0.3, 1500) > 0).astype(float)
        ds = Dataset.from_dict({"x1": x1, "x2": x2}, y, task="binary")
        base = oof_base(ds, ["x1"])
        s = feature_boost(ds, [make("mul", "x1", "x2")], base, np.arange(1500))
        assert s.delta > 0.05

    def test_noise_delta_is_small(self, inter):
        ds, base = inter
        rows = np.arange(ds.n_rows)
        deltas = []
        for t in range(30):
            z = Column.from_numeric("z", np.random.default_rng(t).normal(size=ds.n_rows),
                                    "numerical")
            s = feature_boost(ds, [z], base, rows, STAGE1_PARAMS.replace(seed=t))
            deltas.append(s.delta / s.base_loss)
        assert np.mean(deltas) < 0.01

    @pytest.mark.xfail(strict=True, reason=(
        "early stopping on the scoring holdout keeps the pre-tree loss as a candidate "
        "optimum, so delta >= 0 for every feature and the mean over noise is positive"))
    def test_noise_mean_delta_not_positive(self, inter):
        ds, base = inter
        rows = np.arange(ds.n_rows)
        deltas = []
        for t in range(100):
            z = Column.from_numeric("z", np.random.default_rng(t).normal(size=ds.n_rows),
                                    "numerical")
            deltas.append(feature_boost(ds, [z], base, rows,
                                        STAGE1_PARAMS.replace(seed=t)).delta)
        deltas = np.array(deltas)
        assert deltas.mean() <= 2 * deltas.std(ddof=1) / np.sqrt(deltas.size)


class TestEvaluateFull:
    def test_no_columns(self, inter):
        ds, base = inter
        s, model = evaluate_full(ds, [], [], base)
        assert s.delta == 0.0 and model.per_feature_gain.sum() == 0.0

    def test_margins_are_additive(self, inter):
        ds, base = inter
        rows = np.arange(ds.n_rows)
        _, model = evaluate_full(ds, ["x1", "x2"], [make("mul", "x1", "x2")], base, rows=rows)
        X, _ = to_matrix(materialize(["x1", "x2", make("mul", "x1", "x2")], ds, rows))
        m = base.margins[rows]
        with_margin = gbdt.predict(model, X, margin=m)
        np.testing.assert_allclose(with_margin - m, gbdt.predict(model, X, margin=np.zeros_like(m)),
                                   atol=1e-12)

    def test_planted_feature_ranks_high(self):
        hits = 0
        for seed in range(20):
            ds = interaction_data(1200, seed, n_noise=9)
            base = oof_base(ds, ["x1", "x2"], seed=seed)
            cands = [make("mul", "x1", "x2")] + [make("abs", f"z{j}") for j in range(9)]
            _, model = evaluate_full(ds, [], cands, base,
                                     STAGE2_PARAMS.replace(seed=seed))
            imp = gbdt.mdi(model)
            top = sorted(imp, key=imp.get, reverse=True)[:2]
            hits += "mul(x1,x2)" in top
        assert hits >= 18

    def test_joint_delta_dominates_single(self):
        misses = 0
        for seed in range(20):
            ds = interaction_data(2000, seed, n_noise=2)
            base = oof_base(ds, ["x1", "x2"], seed=seed)
            cands = [make("mul", "x1", "x2"), make("add", "x1", "z0"), make("abs", "z1")]
            rows = base.covered()
            singles = [feature_boost(ds, [c], base, rows, STAGE2_PARAMS.replace(seed=seed))
                       for c in cands]
            joint, _ = evaluate_full(ds, [], cands, base, STAGE2_PARAMS.replace(seed=seed))
            best = max(s.delta for s in singles)
            misses += joint.delta < best - 0.05 * joint.base_loss
        assert misses == 0


def test_holdout_split_is_a_partition():
    fit, hold = holdout_split(103, 0.2, seed=3)
    assert hold.size == 21
    np.testing.assert_array_equal(np.sort(np.r_[fit, hold]), np.arange(103))
