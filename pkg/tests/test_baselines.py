import numpy as np
import pytest
from sklearn import linear_model, naive_bayes, neighbors, tree

from fedhe import baselines
from fedhe.baselines import BaselineSpec
from fedhe.errors import ConfigError, DataError


def test_dummy_predicts_train_mean():
    m = baselines.DummyRegressor().fit(np.zeros((3, 1)), [1.0, 2.0, 3.0])
    assert np.all(m.predict(np.ones((4, 1))) == 2.0)


def test_linear_matches_sklearn(toy_regression):
    x, y = toy_regression
    ours = baselines.LinearRegressor().fit(x, y)
    ref = linear_model.LinearRegression().fit(x, y)
    assert np.allclose(ours.coef_, ref.coef_, atol=1e-10)
    assert ours.intercept_ == pytest.approx(ref.intercept_, abs=1e-10)


def test_ridge_zero_equals_linear(toy_regression):
    x, y = toy_regression
    a = baselines.LinearRegressor(0.0).fit(x, y).predict(x)
    b = baselines.LinearRegressor(1e-300).fit(x, y).predict(x)
    assert np.max(np.abs(a - b)) <= 1e-9


def test_ridge_matches_sklearn(toy_regression):
    x, y = toy_regression
    ours = baselines.LinearRegressor(2.5).fit(x, y)
    ref = linear_model.Ridge(alpha=2.5).fit(x, y)
    assert np.allclose(ours.coef_, ref.coef_, atol=1e-9)


def test_singular_linear_advises_ridge():
    x = np.c_[np.arange(5.0), 2 * np.arange(5.0)]
    with pytest.raises(DataError, match="lambda"):
        baselines.LinearRegressor().fit(x, np.arange(5.0))
    baselines.LinearRegressor(0.1).fit(x, np.arange(5.0))


def test_lasso_matches_sklearn(toy_regression):
    x, y = toy_regression
    lam = 0.05
    ours = baselines.LassoRegressor(lam).fit(x, y)
    # our objective is on standardized features: rescale for the sklearn oracle
    xs = (x - x.mean(0)) / x.std(0)
    ref = linear_model.Lasso(alpha=lam, tol=1e-12, max_iter=100000).fit(xs, y)
    assert np.allclose(ours.coef_ * x.std(0), ref.coef_, atol=1e-6)


def test_lasso_huge_penalty_reduces_to_dummy(toy_regression):
    x, y = toy_regression
    m = baselines.LassoRegressor(1e9).fit(x, y)
    assert np.all(m.coef_ == 0)
    assert m.intercept_ == pytest.approx(y.mean(), abs=1e-12)


def test_knn_matches_sklearn(toy_classification):
    x, y = toy_classification
    ours = baselines.KNNModel(10, classify=True).fit(x[:200], y[:200])
    ref = neighbors.KNeighborsClassifier(10).fit(x[:200], y[:200])
    # continuous features: no distance ties, so the oracles agree except on 5/5 votes
    p = ref.predict_proba(x[200:])[:, 1]
    clear = p != 0.5
    assert np.array_equal(ours.predict(x[200:])[clear], ref.predict(x[200:])[clear])
    assert np.all(ours.predict(x[200:])[~clear] == 0)


def test_knn_k1_returns_own_target(toy_regression):
    x, y = toy_regression
    m = baselines.KNNModel(1, classify=False).fit(x, y)
    assert np.array_equal(m.predict(x[:10]), y[:10])


def test_knn_regression_matches_sklearn(toy_regression):
    x, y = toy_regression
    ours = baselines.KNNModel(10, classify=False).fit(x[:150], y[:150]).predict(x[150:])
    ref = neighbors.KNeighborsRegressor(10).fit(x[:150], y[:150]).predict(x[150:])
    assert np.allclose(ours, ref, atol=1e-12)


def test_naive_bayes_matches_sklearn(toy_classification):
    x, y = toy_classification
    ours = baselines.GaussianNB().fit(x, y)
    ref = naive_bayes.GaussianNB().fit(x, y)
    assert np.allclose(ours.predict_proba(x), ref.predict_proba(x)[:, 1], atol=1e-8)


def test_naive_bayes_identical_classes_gives_priors():
    x = np.tile(np.array([[0.0], [1.0], [2.0]]), (2, 1))
    y = np.array([0, 0, 0, 1, 1, 1.0])
    x = np.r_[x, x[:3]]
    y = np.r_[y, [0, 0, 0]]
    m = baselines.GaussianNB().fit(x, y)
    assert np.allclose(m.predict_proba(np.array([[0.5], [7.0]])), 3 / 9, atol=1e-9)


def test_tree_matches_sklearn_on_training_fit(toy_classification):
    x, y = toy_classification
    ours = baselines.DecisionTree(max_depth=3, min_leaf=5).fit(x, y)
    ref = tree.DecisionTreeClassifier(max_depth=3, min_samples_leaf=5, random_state=0).fit(x, y)
    assert np.mean(ours.predict(x) == ref.predict(x)) > 0.97
    assert ours.depth() <= 3


def test_tree_never_splits_a_pure_node():
    x = np.arange(20.0)[:, None]
    m = baselines.DecisionTree(max_depth=8, min_leaf=1).fit(x, np.ones(20))
    assert m.depth() == 0


def test_regression_tree_is_piecewise_constant(toy_regression):
    x, y = toy_regression
    m = baselines.DecisionTree(max_depth=2, min_leaf=5, classify=False).fit(x, y)
    assert np.unique(m.predict(x)).size <= 4


def test_constant_classifier():
    m = baselines.ConstantClassifier().fit(np.zeros((4, 2)), [0, 1, 0, 1])
    assert np.all(m.predict(np.ones((3, 2))) == 0)
    assert np.all(m.predict_proba(np.ones((3, 2))) == 0)


@pytest.mark.parametrize("kind", baselines.KINDS)
def test_serialization_round_trip(kind, toy_classification, toy_regression):
    spec = BaselineSpec(kind)
    x, y = toy_classification if spec.task == "classification" else toy_regression
    m = baselines.fit(spec, (x, y))
    back = baselines.model_from_dict(baselines.model_to_dict(m))
    assert np.array_equal(back.predict(x), m.predict(x))


def test_feature_count_mismatch(toy_regression):
    x, y = toy_regression
    m = baselines.fit(BaselineSpec("linear"), (x, y))
    with pytest.raises(DataError):
        m.predict(x[:, :3])


def test_spec_validation():
    with pytest.raises(ConfigError):
        BaselineSpec("svm")
    with pytest.raises(ConfigError):
        BaselineSpec("knn", k_neighbors=0)
    assert BaselineSpec("knn").k_neighbors == 10
