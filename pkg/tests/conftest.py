import numpy as np
import pytest

from tabfeat import gbdt
from tabfeat.boost_eval import BasePredictions, holdout_split, materialize, params_for, to_matrix
from tabfeat.dataframe import Dataset
from tabfeat.gbdt import Objective


def full_retrain_delta(dataset, base_exprs, extra_exprs, rows, params, valid_fraction=0.2):
    """Reference scorer: retrain on base + extra columns from scratch.

    Returns the holdout-loss reduction of the augmented model over a model on
    the base columns alone, both trained and early-stopped on the same split.
    """
    rows = np.asarray(rows)
    params = params_for(dataset, params)
    fit_pos, hold_pos = holdout_split(rows.size, valid_fraction, params.seed)
    y = dataset.y()[rows]

    def holdout_loss(exprs):
        X, cat = to_matrix(materialize(exprs, dataset, rows))
        model = gbdt.train(X, y, None, fit_pos, hold_pos, params, cat)
        return model.valid_curve[model.best_iteration]

    return holdout_loss(list(base_exprs)) - holdout_loss(list(base_exprs) + list(extra_exprs))


def interaction_data(n, seed, n_noise=0):
    """y = x1 * x2 + small noise, plus optional pure-noise columns."""
    rng = np.random.default_rng(seed)
    cols = {"x1": rng.normal(size=n), "x2": rng.normal(size=n)}
    for j in range(n_noise):
        cols[f"z{j}"] = rng.normal(size=n)
    y = cols["x1"] * cols["x2"] + rng.normal(0, 0.1, n)
    return Dataset.from_dict(cols, y, task="regression", kinds={k: "numerical" for k in cols})


def oof_base(dataset, base_exprs, k=5, seed=0):
    from tabfeat.pipeline import base_predictions
    folds = [np.arange(dataset.n_rows)[j::k] for j in range(k)]
    return base_predictions(dataset, base_exprs, folds, gbdt.STAGE2_PARAMS.replace(seed=seed))


@pytest.fixture
def constant_base():
    def make(dataset):
        y = dataset.y()
        return BasePredictions(np.full(dataset.n_rows, y.mean()), Objective.MSE)
    return make


# one summary line per acceptance criterion, printed after the run
_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (report.when != "call" and not (report.when == "setup" and report.skipped)):
        return
    number, title = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if report.skipped:
        status = "NOT RUN"
        if not detail and isinstance(report.longrepr, tuple):
            detail = str(report.longrepr[-1])
    else:
        status = "PASS" if report.passed else "FAIL"
    _CRITERIA[number] = (title, status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status, detail = _CRITERIA[number]
        line = f"criterion {number} {title}: {status}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))
