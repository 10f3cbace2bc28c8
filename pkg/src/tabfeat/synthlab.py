"""Grouped synthetic data where a group statistic carries the signal.

Every group ``g`` draws a hidden value ``Z_g``; its rows draw ``x`` from a
distribution centred on ``Z_g``.  Training and test groups are disjoint, so
a model on ``x`` alone cannot identify ``Z`` for a test row, while the group
mean of ``x`` (computed over train and test rows together) estimates it
better and better as groups grow.

Scenarios
---------
``bernoulli``
    ``Z`` is 1/4 or 3/4 with equal probability, ``x ~ Bernoulli(Z)`` and
    ``y = Z``.  The best predictor from ``x`` alone is ``5/8`` if ``x`` else
    ``3/8`` and its MSE is 3/64.
``gaussian``
    ``Z ~ U[0, 1]^d``, ``x ~ N(Z, 0.25 I)`` and ``y = mean(Z) + N(0, noise^2)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import gbdt
from .boost_eval import holdout_split, to_matrix
from .dataframe import Column, Dataset, FeatureKind, Task, concat_rows, write_csv
from .exceptions import ConfigError
from .ops import Mode, fit_transform, make

BERNOULLI_FLOOR = 3 / 64

# The targets here are step functions of one or two inputs, so a high
# learning rate reaches the optimum in a few dozen trees; this keeps the
# million-row runs short.
THEORY_PARAMS = gbdt.BoostParams(n_trees=300, learning_rate=0.3, early_stopping_rounds=20)


class Scenario(str, enum.Enum):
    BERNOULLI = "bernoulli"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class SynthConfig:
    k1: int = 2000
    k2: int = 500
    h: int = 50
    d: int = 1
    scenario: Scenario = Scenario.BERNOULLI
    noise: float = 0.1
    seed: int = 0

    def __post_init__(self):
        try:
            object.__setattr__(self, "scenario", Scenario(self.scenario))
        except ValueError:
            raise ConfigError(f"unknown scenario {self.scenario!r}; "
                              f"choose from {[s.value for s in Scenario]}") from None
        if min(self.k1, self.k2, self.h, self.d) < 1:
            raise ConfigError("k1, k2, h and d must all be at least 1")
        if self.scenario is Scenario.BERNOULLI and self.d != 1:
            raise ConfigError("the bernoulli scenario has a single feature (d = 1)")
        if self.noise < 0:
            raise ConfigError("noise must be non-negative")


def _x_names(d):
    return ["x"] if d == 1 else [f"x{j}" for j in range(d)]


def _draw(cfg: SynthConfig, rng, n_groups, prefix):
    h, d = cfg.h, cfg.d
    if cfg.scenario is Scenario.BERNOULLI:
        z = rng.choice([0.25, 0.75], size=(n_groups, 1))
        zr = np.repeat(z, h, axis=0)
        x = (rng.random((n_groups * h, 1)) < zr).astype(np.float64)
        y = zr[:, 0]
    else:
        z = rng.random((n_groups, d))
        zr = np.repeat(z, h, axis=0)
        x = zr + rng.normal(0.0, 0.5, size=zr.shape)
        y = zr.mean(axis=1) + rng.normal(0.0, cfg.noise, size=zr.shape[0])
    labels = np.repeat(np.array([f"{prefix}{g}" for g in range(n_groups)]), h)
    cols = [Column.from_labels("group_id", labels, np.zeros(labels.size, bool))]
    cols += [Column(n, FeatureKind.NUMERICAL, x[:, j], np.zeros(x.shape[0], bool))
             for j, n in enumerate(_x_names(d))]
    target = Column("y", FeatureKind.NUMERICAL, y, np.zeros(y.size, bool))
    return Dataset(tuple(cols), target, Task.REGRESSION), zr


def generate(cfg: SynthConfig, return_z=False):
    """(train, test) datasets; with ``return_z`` also the hidden per-row Z."""
    rng = np.random.default_rng(cfg.seed)
    train, z_train = _draw(cfg, rng, cfg.k1, "g")
    test, z_test = _draw(cfg, rng, cfg.k2, "t")
    if return_z:
        return train, test, z_train, z_test
    return train, test


def floor_loss(scenario) -> float:
    """Lowest MSE any predictor of ``y`` from ``x`` alone can reach."""
    scenario = Scenario(scenario)
    if scenario is not Scenario.BERNOULLI:
        raise ConfigError(f"no closed-form floor for the {scenario.value} scenario")
    return BERNOULLI_FLOOR


@dataclass(frozen=True)
class TheoryResult:
    scenario: str
    k1: int
    k2: int
    h: int
    raw_mse: float
    augmented_mse: float
    floor: float

    def summary(self):
        return (f"{self.scenario},{self.k1},{self.k2},{self.h},{self.raw_mse!r},"
                f"{self.augmented_mse!r},{self.floor!r}")


SUMMARY_HEADER = "scenario,k1,k2,h,raw_mse,augmented_mse,floor"


def group_mean_exprs(d):
    return [make("GroupByThenMean", n, "group_id") for n in _x_names(d)]


def _fit_and_score(data, columns, n_train, params, seed):
    X, cat = to_matrix(columns)
    fit_pos, hold_pos = holdout_split(n_train, 0.2, seed)
    model = gbdt.train(X, data.y(), None, fit_pos, hold_pos, params, cat)
    test = np.arange(n_train, data.n_rows)
    pred = gbdt.predict(model, X, rows=test)
    return float(np.mean((pred - data.y()[test]) ** 2))


def theory_check(cfg: SynthConfig, params: gbdt.BoostParams = THEORY_PARAMS,
                 dump_dir=None) -> TheoryResult:
    """Test MSE of a model on raw ``x`` and of one that also sees group means.

    The group means are fitted transductively over train and test rows.
    Group ids themselves are never given to either model.
    """
    train, test = generate(cfg)
    data = concat_rows(train, test)
    n_train = train.n_rows
    rows = np.arange(data.n_rows)
    params = params.replace(seed=cfg.seed)
    raw_cols = [data.column(n) for n in _x_names(cfg.d)]
    raw = _fit_and_score(data, raw_cols, n_train, params, cfg.seed)
    extra = [fit_transform(e, data, np.arange(n_train), rows, Mode.TRANSDUCTIVE)[0]
             for e in group_mean_exprs(cfg.d)]
    augmented = _fit_and_score(data, raw_cols + extra, n_train, params, cfg.seed)
    if dump_dir is not None:
        out = Path(dump_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "train.csv", train)
        write_csv(out / "test.csv", test)
    floor = floor_loss(cfg.scenario) if cfg.scenario is Scenario.BERNOULLI else float("nan")
    return TheoryResult(cfg.scenario.value, cfg.k1, cfg.k2, cfg.h, raw, augmented, floor)
