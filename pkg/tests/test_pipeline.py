import itertools

import numpy as np
import pytest
from conftest import interaction_data

from tabfeat.dataframe import Column, Dataset, make_split_plan
from tabfeat.exceptions import ConfigError, ParseError, SchemaError
from tabfeat.gbdt import STAGE2_PARAMS
from tabfeat.ops import Base, FittedStats, Mode, fit_transform, make, transform
from tabfeat.pipeline import (PipelineConfig, TransformSpec, apply, auc, base_predictions,
                              default_metric, metric, rmse, run)
from tabfeat.dataframe import Task

FAST_OPS = ("mul", "add", "div", "GroupByThenMean", "GroupByThenRank", "Combine", "freq")


def mixed_data(n=1500, seed=0):
    """Numeric interaction plus a per-group offset keyed on two categoricals."""
    rng = np.random.default_rng(seed)
    x1, x2 = rng.normal(size=(2, n))
    g = np.array(list("abcdef"))[rng.integers(0, 6, n)]
    h = np.array(list("uvw"))[rng.integers(0, 3, n)]
    offset = {k: v for k, v in zip("abcdef", rng.normal(0, 1, 6))}
    y = 2 * x1 * x2 + np.array([offset[k] for k in g]) + rng.normal(0, 0.1, n)
    return Dataset.from_dict({"x1": x1, "x2": x2, "g": g, "h": h}, y, task="regression",
                             kinds={"x1": "numerical", "x2": "numerical"})


@pytest.fixture(scope="module")
def fitted():
    ds = mixed_data()
    cfg = PipelineConfig(top_k=5, operators=FAST_OPS, seed=3)
    spec, report = run(ds, cfg)
    return ds, cfg, spec, report


class TestRun:
    def test_finds_interaction_and_improves(self, fitted):
        ds, cfg, spec, report = fitted
        assert 1 <= len(spec.exprs) <= cfg.top_k
        assert "mul(x1,x2)" in spec.names
        assert report.augmented_metric < 0.8 * report.base_metric

    def test_counts_non_increasing(self, fitted):
        _, _, _, report = fitted
        for o in report.orders:
            assert o.n_candidates >= o.n_stage1 >= o.n_stage2 >= o.n_accepted

    def test_spec_provenance(self, fitted):
        ds, cfg, spec, _ = fitted
        assert spec.config_hash == cfg.config_hash()
        assert spec.fingerprint == ds.fingerprint() and spec.seed == 3
        assert len(spec.scores) == len(spec.exprs)
        assert all(d > 0 for d, _ in spec.scores)

    def test_reproducible(self, fitted):
        ds, cfg, spec, _ = fitted
        again, _ = run(ds, cfg.replace(threads=3))
        assert again == spec
        assert again.to_text() == spec.to_text()

    def test_sum_of_pairwise_products(self):
        rng = np.random.default_rng(4)
        n = 3000
        X = rng.normal(size=(n, 5))
        y = sum(X[:, i] * X[:, j] for i, j in itertools.combinations(range(5), 2))
        y = y + rng.normal(0, 0.1, n)
        ds = Dataset.from_dict({f"x{j}": X[:, j] for j in range(5)}, y, task="regression",
                               kinds={f"x{j}": "numerical" for j in range(5)})
        spec, report = run(ds, PipelineConfig(top_k=10, operators=("mul", "add", "sub"), seed=0))
        assert len(spec.exprs) <= 10
        assert report.augmented_metric <= report.base_metric

    def test_order_bounded(self):
        ds = mixed_data(800, seed=1)
        spec, report = run(ds, PipelineConfig(top_k=2, max_order=2, operators=("mul", "add"),
                                              seed=0))
        assert all(e.order <= 2 for e in spec.exprs)
        assert len(report.orders) <= 2
        if len(report.orders) == 2:
            first = set(spec.names[: report.orders[0].n_accepted])
            for e in spec.exprs[report.orders[0].n_accepted:]:
                assert any(a.text in first for a in e.args)

    def test_noise_only_does_not_crash(self):
        rng = np.random.default_rng(0)
        ds = Dataset.from_dict({"a": rng.normal(size=400), "b": rng.normal(size=400)},
                               rng.normal(size=400), task="regression")
        spec, report = run(ds, PipelineConfig(top_k=3, operators=("mul", "sub")))
        if not spec.exprs:
            assert report.augmented_metric == report.base_metric
        assert np.isfinite(report.base_metric)

    def test_unknown_base_column(self):
        with pytest.raises(SchemaError):
            run(mixed_data(200), PipelineConfig(operators=("mul",)), base=["x1", "nope"])

    def test_leakage_canary(self, fitted):
        ds, cfg, spec, _ = fitted
        plan = make_split_plan(ds, cfg.q, cfg.k_folds, cfg.valid_fraction, cfg.seed)
        y = ds.y().copy()
        y[plan.valid_rows] = np.random.default_rng(9).normal(0, 100, plan.valid_rows.size)
        poisoned, _ = run(ds.with_target(y), cfg)
        assert poisoned.names == spec.names
        assert poisoned.stats == spec.stats
        assert poisoned.scores == spec.scores

    def test_transductive_mode_fits_on_all_rows(self):
        ds = mixed_data(600, seed=4)
        spec, _ = run(ds, PipelineConfig(top_k=5, operators=("GroupByThenMean", "mul"),
                                         mode=Mode.TRANSDUCTIVE))
        assert spec.stats.n_fit in (0, ds.n_rows)
        assert spec.mode is Mode.TRANSDUCTIVE


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(top_k=0), dict(max_order=0), dict(threads=0),
                                    dict(operators=("nope",)), dict(metric="mae")])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            PipelineConfig(**kw)

    def test_hash_ignores_threads(self):
        assert PipelineConfig(threads=1).config_hash() == PipelineConfig(threads=8).config_hash()
        assert PipelineConfig(seed=1).config_hash() != PipelineConfig(seed=2).config_hash()

    def test_defaults(self):
        cfg = PipelineConfig()
        assert (cfg.top_k, cfg.k_folds, cfg.max_order, cfg.q) == (10, 5, 1, 0)


class TestSpecFile:
    def _stateful_spec(self):
        ds = mixed_data(300, seed=2)
        exprs = [make("GroupByThenRank", "x1", "g"), make("Combine", "g", "h"),
                 make("GroupByThenMean", "x2", "g"), make("freq", "h"), make("mul", "x1", "x2")]
        rows = np.arange(200)
        stats = FittedStats()
        for e in exprs:
            stats.merge(fit_transform(e, ds, rows, rows)[1])
        stats.n_fit, stats.fit_digest = 200, "abc"
        spec = TransformSpec(exprs, stats, [(0.1 * i, 1 / 3 + i) for i in range(5)],
                             ds.kinds(), Mode.TRAIN_FIT, "h", 7, "f")
        return ds, spec

    def test_round_trip_bit_exact(self, tmp_path):
        _, spec = self._stateful_spec()
        spec.save(tmp_path / "t.spec")
        back = TransformSpec.load(tmp_path / "t.spec")
        assert back == spec
        assert back.to_text() == spec.to_text()
        assert back.scores == spec.scores

    def test_round_trip_applies_identically(self):
        ds, spec = self._stateful_spec()
        back = TransformSpec.from_text(spec.to_text())
        a, b = apply(spec, ds), apply(back, ds)
        for name in spec.names:
            np.testing.assert_array_equal(a.column(name).values, b.column(name).values)

    def test_header(self):
        _, spec = self._stateful_spec()
        lines = spec.to_text().splitlines()
        assert "#config_hash=h" in lines and "#seed=7" in lines
        assert "rank\timportance\tdelta\texpression" in lines

    def test_rejects_other_files(self):
        with pytest.raises(ParseError):
            TransformSpec.from_text("hello\n")
        with pytest.raises(ParseError):
            TransformSpec.from_text("#format=tabfeat-transform-spec/1\n1\tx\t0.1\tmul(a,b)\n")


class TestApply:
    def test_reproduces_selection_columns(self, fitted):
        ds, cfg, spec, _ = fitted
        plan = make_split_plan(ds, cfg.q, cfg.k_folds, cfg.valid_fraction, cfg.seed)
        out = apply(spec, ds)
        for e in spec.exprs:
            col, _ = fit_transform(e, ds, plan.train_rows, np.arange(ds.n_rows))
            np.testing.assert_array_equal(out.column(e.text).values, col.values)
        for name in ds.names:
            assert out.column(name) is ds.column(name)

    def test_unseen_category_uses_global_statistic(self):
        ds = mixed_data(300, seed=5)
        e = make("GroupByThenMean", "x1", "g")
        _, stats = fit_transform(e, ds, np.arange(300), np.arange(300))
        spec = TransformSpec([e], stats, [(0.1, 1.0)], ds.kinds())
        new = Dataset.from_dict({"x1": np.array([0.5, 0.5]), "x2": np.zeros(2),
                                 "g": np.array(["zzz", "a"]), "h": np.array(["u", "u"])},
                                np.zeros(2), task="regression", kinds={"x1": "numerical",
                                                                       "x2": "numerical"})
        got = apply(spec, new).column(e.text).values
        np.testing.assert_allclose(got[0], ds.column("x1").values.mean(), rtol=1e-12)
        a = ds.column("g").values == ds.column("g").categories.index("a")
        np.testing.assert_allclose(got[1], ds.column("x1").values[a].mean(), rtol=1e-12)

    def test_empty_spec(self):
        ds = mixed_data(50)
        out = apply(TransformSpec([], FittedStats()), ds)
        assert out.names == ds.names

    def test_missing_base_column(self):
        ds = mixed_data(50)
        spec = TransformSpec([make("mul", "x1", "q"), make("add", "p", "x2")], FittedStats())
        with pytest.raises(SchemaError, match="p, q"):
            apply(spec, ds)

    def test_kind_mismatch(self):
        ds = mixed_data(50)
        spec = TransformSpec([make("freq", "g")], FittedStats(),
                             base_kinds={"g": ds.column("x1").kind})
        with pytest.raises(SchemaError):
            apply(spec, ds)


class TestMetrics:
    def test_auc_matches_pair_count(self):
        rng = np.random.default_rng(0)
        y = rng.integers(0, 2, 200)
        s = np.round(rng.normal(size=200), 1)  # plenty of ties
        pos, neg = s[y == 1], s[y == 0]
        wins = sum((p > n) + 0.5 * (p == n) for p, n in itertools.product(pos, neg))
        assert abs(auc(y, s) - wins / (pos.size * neg.size)) < 1e-12

    def test_perfect_auc(self):
        assert auc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0

    def test_rmse_of_mean_is_std(self):
        y = np.random.default_rng(1).normal(size=100)
        assert rmse(y, np.full(100, y.mean())) == pytest.approx(y.std(), rel=1e-12)

    def test_single_class_auc(self):
        with pytest.raises(ValueError):
            auc([1, 1, 1], [0.1, 0.2, 0.3])

    def test_accuracy_argmax(self):
        assert metric("accuracy", [0, 2], np.array([[1, 0, 0], [0, 1, 2.0]])) == 1.0
        assert metric("accuracy", [0, 1], np.array([-1.0, -1.0])) == 0.5

    def test_defaults_per_task(self):
        assert [default_metric(t) for t in Task] == ["rmse", "auc", "accuracy"]


class TestBasePredictions:
    def test_out_of_fold(self):
        # a target copied into a feature is only learnable by a model that saw the row
        ds = interaction_data(1000, seed=0)
        folds = [np.arange(1000)[j::5] for j in range(5)]
        base = base_predictions(ds, ["x1", "x2"], folds)
        assert np.isfinite(base.margins).all()
        rng = np.random.default_rng(0)
        ids = rng.permutation(1000).astype(float)
        lookup = Dataset.from_dict({"id": ids}, ds.y(), task="regression",
                                   kinds={"id": "numerical"})
        oof = base_predictions(lookup, ["id"], folds)
        assert np.mean((oof.margins - ds.y()) ** 2) > 0.5 * ds.y().var()

    def test_constant_target(self):
        ds = Dataset.from_dict({"x": np.arange(100.0)}, np.full(100, 2.5), task="regression")
        base = base_predictions(ds, ["x"], [np.arange(100)[j::4] for j in range(4)])
        np.testing.assert_array_equal(base.margins, 2.5)

    def test_uncovered_rows_are_nan(self):
        ds = interaction_data(300, seed=1)
        base = base_predictions(ds, ["x1"], [np.arange(0, 100), np.arange(100, 200)])
        assert np.isnan(base.margins[200:]).all() and np.isfinite(base.margins[:200]).all()
        np.testing.assert_array_equal(base.covered(), np.arange(200))

    def test_class_absent_from_complement(self):
        y = np.r_[np.zeros(50), np.ones(50)]
        ds = Dataset.from_dict({"x": np.arange(100.0)}, y, task="binary")
        with pytest.raises(ConfigError, match="fewer folds"):
            base_predictions(ds, ["x"], [np.arange(50), np.arange(50, 100)])

    def test_oof_loss_not_below_in_sample(self):
        from tabfeat import gbdt
        from tabfeat.boost_eval import holdout_split
        gaps = []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            x1, x2 = rng.normal(size=(2, 600))
            y = (x1 + 0.5 * x2 + rng.normal(0, 1, 600) > 0).astype(float)
            ds = Dataset.from_dict({"x1": x1, "x2": x2}, y, task="binary")
            p = STAGE2_PARAMS.replace(seed=seed, objective=gbdt.Objective.LOGLOSS)
            folds = [np.arange(600)[j::5] for j in range(5)]
            oof = base_predictions(ds, ["x1", "x2"], folds, p)
            fit, hold = holdout_split(600, 0.2, seed)
            model = gbdt.train(np.c_[x1, x2], y, None, fit, hold, p)
            ins = gbdt.predict(model, np.c_[x1, x2])
            gaps.append(gbdt.loss(gbdt.Objective.LOGLOSS, y, oof.margins)
                        - gbdt.loss(gbdt.Objective.LOGLOSS, y, ins))
        assert np.mean(gaps) >= 0


def test_transform_matches_fit_transform_on_fit_rows():
    ds = mixed_data(200, seed=6)
    e = make("GroupByThenRank", "x1", "g")
    col, stats = fit_transform(e, ds, np.arange(150), np.arange(200))
    again = transform(e, ds, None, stats)
    np.testing.assert_array_equal(col.values, again.values)
    assert isinstance(Base("x1").text, str) and isinstance(col, Column)
