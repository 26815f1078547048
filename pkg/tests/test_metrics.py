import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedhe import baselines, metrics
from fedhe.errors import DataError


def test_formula_example():
    truth = [1, 1, 1, 0, 0, 0, 0, 0, 0, 0]
    pred = [1, 1, 0, 1, 0, 0, 0, 0, 0, 0]
    r = metrics.classification_report(truth, pred)
    assert r.acc == pytest.approx(0.8)
    assert r.f1_pos == pytest.approx(2 * 2 / (4 + 1 + 1))


def test_constant_negative_reproduces_the_degenerate_row():
    truth = np.r_[np.zeros(698), np.ones(302)]
    r = metrics.classification_report(truth, np.zeros(1000))
    assert r.acc == pytest.approx(0.698, abs=1e-12)
    assert r.prec_pos == 0 and r.rec_pos == 0
    assert r.rec_neg == 1.0
    assert r.prec_neg == pytest.approx(0.698)
    assert r.f1_macro == pytest.approx(0.411, abs=5e-4)
    assert r.prec_macro == pytest.approx(0.349, abs=5e-4)
    assert r.rec_macro == 0.5


def test_perfect_predictions():
    y = [0, 1, 1, 0, 1]
    assert all(v == 1.0 for v in metrics.classification_report(y, y).as_dict().values())


@pytest.mark.parametrize("p", [0.1, 0.3, 0.5, 0.698, 0.9])
def test_constant_negative_macro_f1_closed_form(p):
    n = 1000
    neg = int(round(p * n))
    truth = np.r_[np.zeros(neg), np.ones(n - neg)]
    q = neg / n
    assert metrics.classification_report(truth, np.zeros(n)).f1_macro == pytest.approx((2 * q / (1 + q)) / 2, abs=1e-12)


def test_classification_input_errors():
    with pytest.raises(DataError):
        metrics.classification_report([], [])
    with pytest.raises(DataError):
        metrics.classification_report([0, 1], [0])
    with pytest.raises(DataError):
        metrics.classification_report([0, 2], [0, 1])


def test_regression_constant_at_true_mean():
    r = metrics.regression_report([1, 2, 3], [2, 2, 2])
    assert r.mae == pytest.approx(2 / 3) and r.mse == pytest.approx(2 / 3)
    assert r.r2 == 0.0
    assert math.isnan(r.pc)


def test_regression_perfect():
    r = metrics.regression_report([1.0, 4.0, 2.0], [1.0, 4.0, 2.0])
    assert (r.mae, r.mse, r.r2) == (0.0, 0.0, 1.0)
    assert r.pc == pytest.approx(1.0)


def test_regression_needs_two_pairs():
    with pytest.raises(DataError):
        metrics.regression_report([1.0], [1.0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=3, max_size=30), st.floats(0.1, 10), st.floats(-5, 5))
def test_pc_symmetric_and_affine_invariant(xs, a, b):
    x = np.array(xs)
    y = np.sin(x) + 0.1 * x
    if np.ptp(x) < 1e-6 or np.ptp(y) < 1e-6:
        return
    r = metrics.regression_report(x, y).pc
    assert metrics.regression_report(y, x).pc == pytest.approx(r, abs=1e-9)
    assert metrics.regression_report(x, a * y + b).pc == pytest.approx(r, abs=1e-6)


def test_mean_report_propagates_nan():
    a = metrics.regression_report([1, 2, 3], [2, 2, 2])
    b = metrics.regression_report([1, 2, 3], [1, 2, 3])
    m = metrics.mean_report([a, b])
    assert m.mae == pytest.approx(1 / 3)
    assert math.isnan(m.pc)


def test_stratified_partition_balance():
    y = np.r_[np.zeros(70), np.ones(30)]
    parts = metrics.stratified_partition(y, 2, np.random.default_rng(0))
    assert [p.size for p in parts] == [50, 50]
    assert [int(y[p].sum()) for p in parts] == [15, 15]


@settings(max_examples=50, deadline=None)
@given(st.integers(10, 200), st.integers(1, 10), st.floats(0.05, 0.95), st.integers(0, 1000))
def test_stratified_partition_is_a_balanced_disjoint_cover(n, k, frac, seed):
    y = (np.arange(n) < frac * n).astype(float)
    parts = metrics.stratified_partition(y, k, np.random.default_rng(seed))
    allidx = np.concatenate(parts)
    assert np.array_equal(np.sort(allidx), np.arange(n))
    sizes = [p.size for p in parts]
    assert max(sizes) - min(sizes) <= 1
    for cls in (0, 1):
        counts = [int(np.sum(y[p] == cls)) for p in parts]
        assert max(counts) - min(counts) <= 1


def test_fold_indices_two_folds_of_ten():
    folds = metrics.fold_indices(np.arange(10.0), 2, "regression", seed=0)
    assert [f.size for f in folds] == [5, 5]
    assert np.array_equal(np.sort(np.concatenate(folds)), np.arange(10))


def test_cross_validation_is_deterministic(toy_classification):
    factory = lambda: baselines.make_model(baselines.BaselineSpec("nb"))
    a = metrics.cross_validate(factory, toy_classification, 5, "classification", seed=2)
    b = metrics.cross_validate(factory, toy_classification, 5, "classification", seed=2)
    assert a.mean == b.mean and len(a.per_fold) == 5


def test_cross_validation_missing_class_in_training_fold():
    x = np.arange(12.0)[:, None]
    y = np.r_[np.zeros(11), 1.0]
    with pytest.raises(DataError):
        metrics.cross_validate(lambda: baselines.GaussianNB(), (x, y), 2, "classification")


def test_dummy_r2_nonpositive_brute_force():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(20, 2))
    y = rng.normal(size=20)
    res = metrics.cross_validate(lambda: baselines.DummyRegressor(), (x, y), 4, "regression", seed=1)
    for fold, test_idx in zip(res.per_fold, metrics.fold_indices(y, 4, "regression", 1)):
        mask = np.ones(20, bool)
        mask[test_idx] = False
        yt = y[test_idx]
        ss_res = np.sum((yt - y[mask].mean()) ** 2)
        ss_tot = np.sum((yt - yt.mean()) ** 2)
        assert fold.r2 == pytest.approx(1 - ss_res / ss_tot, abs=1e-12)
        assert fold.r2 <= 0


def test_constant_prediction_whose_mean_rounds_off_has_undefined_pc():
    c = 0.1 + 0.2  # the mean of many copies of this value is not bit-equal to it
    pred = np.full(37, c)
    assert pred.mean() != c
    r = metrics.regression_report(np.arange(37.0), pred)
    assert math.isnan(r.pc)
