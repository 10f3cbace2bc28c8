import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from tabfeat.exceptions import ConfigError
from tabfeat.synthlab import (BERNOULLI_FLOOR, SUMMARY_HEADER, Scenario, SynthConfig,
                              floor_loss, generate, group_mean_exprs, theory_check)


class TestGenerate:
    def test_shapes_and_disjoint_groups(self):
        cfg = SynthConfig(k1=30, k2=10, h=7, seed=1)
        train, test = generate(cfg)
        assert (train.n_rows, test.n_rows) == (210, 70)
        tr = set(train.column("group_id").labels())
        te = set(test.column("group_id").labels())
        assert len(tr) == 30 and len(te) == 10 and not tr & te
        for ds in (train, test):
            _, counts = np.unique(ds.column("group_id").values, return_counts=True)
            assert set(counts) == {7}

    def test_bernoulli_target_is_z(self):
        train, _, z, _ = generate(SynthConfig(k1=50, k2=5, h=20), return_z=True)
        np.testing.assert_array_equal(train.y(), z[:, 0])
        assert set(np.unique(z)) <= {0.25, 0.75}
        assert set(np.unique(train.column("x").values)) <= {0.0, 1.0}

    def test_group_means_concentrate(self):
        train, _, z, _ = generate(SynthConfig(k1=200, k2=1, h=10_000, seed=3), return_z=True)
        x = train.column("x").values.reshape(200, 10_000)
        close = np.abs(x.mean(axis=1) - z[::10_000, 0]) <= 0.02
        assert close.mean() >= 0.99

    def test_marginal_is_half(self):
        train, _ = generate(SynthConfig(k1=100_000, k2=1, h=10, seed=4))
        assert abs(train.column("x").values.mean() - 0.5) <= 0.01

    def test_gaussian_scenario(self):
        cfg = SynthConfig(k1=400, k2=10, h=50, d=3, scenario="gaussian", noise=0.0, seed=2)
        train, _, z, _ = generate(cfg, return_z=True)
        assert train.names == ["group_id", "x0", "x1", "x2"]
        np.testing.assert_allclose(train.y(), z.mean(axis=1))
        resid = np.c_[[train.column(f"x{j}").values for j in range(3)]].T - z
        assert abs(resid.std() - 0.5) < 0.01
        assert 0 <= z.min() and z.max() <= 1

    def test_deterministic(self):
        a, _ = generate(SynthConfig(k1=5, k2=5, h=5, seed=9))
        b, _ = generate(SynthConfig(k1=5, k2=5, h=5, seed=9))
        assert a.fingerprint() == b.fingerprint()

    @pytest.mark.parametrize("kw", [dict(scenario="poisson"), dict(k1=0), dict(h=0),
                                    dict(d=2), dict(noise=-1.0)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            SynthConfig(**kw)


class TestFloor:
    def test_value(self):
        assert floor_loss("bernoulli") == 0.046875 == BERNOULLI_FLOOR

    def test_gaussian_unsupported(self):
        with pytest.raises(ConfigError):
            floor_loss(Scenario.GAUSSIAN)

    def test_brute_force_optimum(self):
        # joint law of (Z, x): Z uniform on {1/4, 3/4}, x | Z ~ Bernoulli(Z)
        joint = {(z, x): 0.5 * (z if x else 1 - z) for z in (0.25, 0.75) for x in (0, 1)}
        total = 0.0
        for x in (0, 1):
            risk = lambda c: sum(p * (z - c) ** 2 for (z, xx), p in joint.items() if xx == x)
            total += minimize_scalar(risk, bounds=(0, 1), method="bounded",
                                     options={"xatol": 1e-12}).fun
        assert total == pytest.approx(3 / 64, abs=1e-12)

    def test_five_eighths_predictor(self):
        joint = {(z, x): 0.5 * (z if x else 1 - z) for z in (0.25, 0.75) for x in (0, 1)}
        pred = {0: 3 / 8, 1: 5 / 8}
        assert sum(p * (z - pred[x]) ** 2 for (z, x), p in joint.items()) == pytest.approx(
            3 / 64, abs=1e-15)


class TestTheoryCheck:
    def test_small_run(self, tmp_path):
        res = theory_check(SynthConfig(k1=200, k2=50, h=50, seed=0), dump_dir=tmp_path)
        assert res.floor == BERNOULLI_FLOOR
        assert res.raw_mse > 0.04
        assert res.augmented_mse < res.raw_mse
        assert (tmp_path / "train.csv").exists() and (tmp_path / "test.csv").exists()
        assert res.summary().startswith("bernoulli,200,50,50,")
        assert len(res.summary().split(",")) == len(SUMMARY_HEADER.split(","))

    def test_gaussian_run(self):
        res = theory_check(SynthConfig(k1=200, k2=50, h=30, d=2, scenario="gaussian", seed=1))
        assert np.isnan(res.floor)
        assert res.augmented_mse < res.raw_mse

    def test_group_mean_exprs(self):
        assert [e.text for e in group_mean_exprs(2)] == ["GroupByThenMean(x0,group_id)",
                                                         "GroupByThenMean(x1,group_id)"]
