"""Local classical models used as baselines for the federated and encrypted networks.

Classification: Gaussian naive Bayes, k-nearest neighbours, CART decision
tree and a constant-negative classifier (which reproduces the behaviour of
an SVM that collapses onto the majority class).  Regression: DUMMY (train
mean), LINEAR, RIDGE, LASSO, k-nearest neighbours and a CART regression tree.

Every model exposes ``fit(X, y)``, ``predict(X)`` and, for classifiers,
``predict_proba(X)`` returning P(y=1).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

__all__ = [
    "BaselineSpec",
    "KINDS",
    "CLASSIFIERS",
    "REGRESSORS",
    "fit",
    "predict",
    "make_model",
    "model_to_dict",
    "model_from_dict",
    "DummyRegressor",
    "LinearRegressor",
    "LassoRegressor",
    "KNNModel",
    "GaussianNB",
    "DecisionTree",
    "ConstantClassifier",
]

CLASSIFIERS = ("nb", "knn", "dt", "constant")
REGRESSORS = ("dummy", "linear", "ridge", "lasso", "knn_reg", "dt_reg")
KINDS = CLASSIFIERS + REGRESSORS


@dataclass(frozen=True)
class BaselineSpec:
    kind: str
    k_neighbors: int = 10
    ridge_lambda: float = 1.0
    lasso_lambda: float = 0.1
    tree_max_depth: int = 8
    tree_min_leaf: int = 5
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown baseline {self.kind!r}; known: {KINDS}")
        if self.k_neighbors < 1 or self.tree_max_depth < 1 or self.tree_min_leaf < 1:
            raise ConfigError("k_neighbors, tree_max_depth and tree_min_leaf must be positive")
        if self.ridge_lambda < 0 or self.lasso_lambda < 0:
            raise ConfigError("penalties must be non-negative")

    @property
    def task(self) -> str:
        return "classification" if self.kind in CLASSIFIERS else "regression"


def _xy(data):
    x, y = data.xy() if hasattr(data, "xy") else data
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if x.ndim != 2:
        raise DataError("features must be a 2-d array")
    if x.shape[0] == 0:
        raise DataError("cannot fit on an empty training set")
    if x.shape[0] != y.size:
        raise DataError(f"{x.shape[0]} rows but {y.size} targets")
    return x, y


class _Base:
    kind = ""
    n_features: int | None = None

    def _check_rows(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if self.n_features is None:
            raise DataError("model is not fitted")
        if x.shape[1] != self.n_features:
            raise DataError(f"model was fitted on {self.n_features} features, got {x.shape[1]}")
        return x


def _check_binary(y):
    if not np.all((y == 0) | (y == 1)):
        raise DataError("classification targets must be 0 or 1")


# --------------------------------------------------------------------------
# regression
# --------------------------------------------------------------------------

class DummyRegressor(_Base):
    kind = "dummy"

    def fit(self, x, y):
        x, y = _xy((x, y))
        self.n_features = x.shape[1]
        self.mean_ = float(y.mean())
        return self

    def predict(self, x):
        x = self._check_rows(x)
        return np.full(x.shape[0], self.mean_)


class LinearRegressor(_Base):
    """Least squares via the normal equations; ``lam > 0`` gives ridge.

    The intercept is never penalized (features and target are centred first).
    """

    def __init__(self, lam: float = 0.0):
        self.lam = float(lam)
        self.kind = "ridge" if lam > 0 else "linear"

    def fit(self, x, y):
        x, y = _xy((x, y))
        self.n_features = x.shape[1]
        x_mean = x.mean(axis=0)
        y_mean = y.mean()
        xc = x - x_mean
        gram = xc.T @ xc + self.lam * np.eye(x.shape[1])
        if self.lam == 0 and (np.linalg.matrix_rank(gram) < x.shape[1]
                              or np.linalg.cond(gram) > 1e12):
            raise DataError("normal equations are singular; use ridge with lambda > 0")
        self.coef_ = np.linalg.solve(gram, xc.T @ (y - y_mean))
        self.intercept_ = float(y_mean - x_mean @ self.coef_)
        return self

    def predict(self, x):
        x = self._check_rows(x)
        return x @ self.coef_ + self.intercept_


class LassoRegressor(_Base):
    """L1-penalized least squares by cyclic coordinate descent.

    Minimizes ``(1/2n)||y - Xw - b||^2 + lam*||w||_1`` on standardized
    features; coefficients are reported in the original feature scale.
    """

    kind = "lasso"

    def __init__(self, lam: float = 0.1, tol: float = 1e-8, max_sweeps: int = 10_000):
        self.lam = float(lam)
        self.tol = tol
        self.max_sweeps = max_sweeps

    def fit(self, x, y):
        x, y = _xy((x, y))
        n, p = x.shape
        self.n_features = p
        mu = x.mean(axis=0)
        sd = x.std(axis=0)
        live = sd > 0
        sd_safe = np.where(live, sd, 1.0)
        z = (x - mu) / sd_safe
        y_mean = y.mean()
        resid = y - y_mean
        w = np.zeros(p)
        self.n_sweeps_ = 0
        for sweep in range(self.max_sweeps):
            max_delta = 0.0
            for j in np.flatnonzero(live):
                zj = z[:, j]
                rho = zj @ resid / n + w[j]  # columns have unit mean square
                new = np.sign(rho) * max(abs(rho) - self.lam, 0.0)
                delta = new - w[j]
                if delta != 0.0:
                    resid -= delta * zj
                    w[j] = new
                    max_delta = max(max_delta, abs(delta))
            self.n_sweeps_ = sweep + 1
            if max_delta < self.tol:
                break
        self.coef_ = np.where(live, w / sd_safe, 0.0)
        self.intercept_ = float(y_mean - mu @ self.coef_)
        return self

    def predict(self, x):
        x = self._check_rows(x)
        return x @ self.coef_ + self.intercept_


class KNNModel(_Base):
    """Brute-force Euclidean k-nearest neighbours.

    All training points tied with the k-th nearest distance are included.
    Classification votes ties toward class 0; regression averages.
    """

    def __init__(self, k: int = 10, classify: bool = True):
        self.k = int(k)
        self.classify = classify
        self.kind = "knn" if classify else "knn_reg"

    def fit(self, x, y):
        x, y = _xy((x, y))
        if self.classify:
            _check_binary(y)
        self.n_features = x.shape[1]
        self.x_ = x.copy()
        self.y_ = y.copy()
        return self

    def _neighbour_mean(self, x) -> np.ndarray:
        x = self._check_rows(x)
        k = min(self.k, self.x_.shape[0])
        out = np.empty(x.shape[0])
        # direct differences (not the dot-product expansion) so equal distances tie exactly
        step = max(1, 2_000_000 // max(1, self.x_.size))
        for start in range(0, x.shape[0], step):
            q = x[start:start + step]
            d2 = np.sum((q[:, None, :] - self.x_[None, :, :]) ** 2, axis=2)
            kth = np.partition(d2, k - 1, axis=1)[:, k - 1:k]
            mask = d2 <= kth
            out[start:start + q.shape[0]] = (mask * self.y_).sum(axis=1) / mask.sum(axis=1)
        return out

    def predict_proba(self, x):
        return self._neighbour_mean(x)

    def predict(self, x):
        m = self._neighbour_mean(x)
        return (m > 0.5).astype(float) if self.classify else m


class GaussianNB(_Base):
    kind = "nb"

    def __init__(self, var_smoothing: float = 1e-9):
        self.var_smoothing = var_smoothing

    def fit(self, x, y):
        x, y = _xy((x, y))
        _check_binary(y)
        self.n_features = x.shape[1]
        eps = self.var_smoothing * max(float(np.var(x, axis=0).max()), 1e-300)
        self.classes_ = np.unique(y)
        self.theta_ = np.stack([x[y == c].mean(axis=0) for c in self.classes_])
        self.var_ = np.stack([x[y == c].var(axis=0) for c in self.classes_]) + eps
        self.prior_ = np.array([np.mean(y == c) for c in self.classes_])
        return self

    def _joint_log(self, x):
        x = self._check_rows(x)
        out = []
        for c in range(len(self.classes_)):
            ll = -0.5 * np.sum(np.log(2 * np.pi * self.var_[c]))
            ll = ll - 0.5 * np.sum((x - self.theta_[c]) ** 2 / self.var_[c], axis=1)
            out.append(np.log(self.prior_[c]) + ll)
        return np.stack(out, axis=1)

    def predict_proba(self, x):
        jl = self._joint_log(x)
        jl = jl - jl.max(axis=1, keepdims=True)
        post = np.exp(jl)
        post /= post.sum(axis=1, keepdims=True)
        if self.classes_.size == 1:
            return np.full(post.shape[0], float(self.classes_[0]))
        return post[:, list(self.classes_).index(1.0)]

    def predict(self, x):
        return (self.predict_proba(x) > 0.5).astype(float)


class DecisionTree(_Base):
    """CART with Gini impurity (classification) or squared error (regression).

    Nodes are dicts: leaves ``{"value": v}``, splits
    ``{"feature": j, "threshold": t, "left": ..., "right": ...}`` sending
    ``x[j] <= t`` left.  Pure nodes are never split.
    """

    def __init__(self, max_depth: int = 8, min_leaf: int = 5, classify: bool = True):
        self.max_depth = int(max_depth)
        self.min_leaf = int(min_leaf)
        self.classify = classify
        self.kind = "dt" if classify else "dt_reg"

    def fit(self, x, y):
        x, y = _xy((x, y))
        if self.classify:
            _check_binary(y)
        self.n_features = x.shape[1]
        self.tree_ = self._grow(x, y, 0)
        return self

    def _impurity_curve(self, ys_sorted):
        # impurity sums for every left/right cut of a sorted target vector
        n = ys_sorted.size
        cnt = np.arange(1, n)
        csum = np.cumsum(ys_sorted)[:-1]
        total = ys_sorted.sum()
        rcnt = n - cnt
        rsum = total - csum
        if self.classify:
            pl = csum / cnt
            pr = rsum / rcnt
            return cnt * 2 * pl * (1 - pl) + rcnt * 2 * pr * (1 - pr)
        csq = np.cumsum(ys_sorted * ys_sorted)[:-1]
        tsq = (ys_sorted * ys_sorted).sum()
        return (csq - csum ** 2 / cnt) + ((tsq - csq) - rsum ** 2 / rcnt)

    def _node_impurity(self, y):
        if self.classify:
            p = y.mean()
            return y.size * 2 * p * (1 - p)
        return float(np.sum((y - y.mean()) ** 2))

    def _grow(self, x, y, depth):
        value = float(y.mean())
        if depth >= self.max_depth or y.size < 2 * self.min_leaf or np.all(y == y[0]):
            return {"value": value}
        parent = self._node_impurity(y)
        best = (parent - 1e-12, None, None)
        for j in range(x.shape[1]):
            order = np.argsort(x[:, j], kind="stable")
            xs = x[order, j]
            imp = self._impurity_curve(y[order])
            cut = np.arange(1, y.size)
            ok = (xs[1:] > xs[:-1]) & (cut >= self.min_leaf) & (y.size - cut >= self.min_leaf)
            if not np.any(ok):
                continue
            cand = np.where(ok, imp, np.inf)
            i = int(np.argmin(cand))
            if cand[i] < best[0]:
                best = (cand[i], j, 0.5 * (xs[i] + xs[i + 1]))
        _, j, thr = best
        if j is None:
            return {"value": value}
        left = x[:, j] <= thr
        return {
            "feature": int(j),
            "threshold": float(thr),
            "left": self._grow(x[left], y[left], depth + 1),
            "right": self._grow(x[~left], y[~left], depth + 1),
        }

    def _leaf_values(self, x):
        x = self._check_rows(x)
        out = np.empty(x.shape[0])
        for i, row in enumerate(x):
            node = self.tree_
            while "value" not in node:
                node = node["left"] if row[node["feature"]] <= node["threshold"] else node["right"]
            out[i] = node["value"]
        return out

    def depth(self) -> int:
        def d(node):
            return 0 if "value" in node else 1 + max(d(node["left"]), d(node["right"]))
        return d(self.tree_)

    def predict_proba(self, x):
        return self._leaf_values(x)

    def predict(self, x):
        v = self._leaf_values(x)
        return (v > 0.5).astype(float) if self.classify else v


class ConstantClassifier(_Base):
    """Always predicts class ``label`` with probability 1."""

    kind = "constant"

    def __init__(self, label: float = 0.0):
        self.label = float(label)

    def fit(self, x, y):
        x, y = _xy((x, y))
        _check_binary(y)
        self.n_features = x.shape[1]
        return self

    def predict_proba(self, x):
        x = self._check_rows(x)
        return np.full(x.shape[0], self.label)

    def predict(self, x):
        return self.predict_proba(x)


def make_model(spec: BaselineSpec):
    """Unfitted model for ``spec`` (usable as a cross-validation factory)."""
    k = spec.kind
    if k == "dummy":
        return DummyRegressor()
    if k == "linear":
        return LinearRegressor(0.0)
    if k == "ridge":
        return LinearRegressor(spec.ridge_lambda)
    if k == "lasso":
        return LassoRegressor(spec.lasso_lambda)
    if k in ("knn", "knn_reg"):
        return KNNModel(spec.k_neighbors, classify=k == "knn")
    if k in ("dt", "dt_reg"):
        return DecisionTree(spec.tree_max_depth, spec.tree_min_leaf, classify=k == "dt")
    if k == "nb":
        return GaussianNB()
    return ConstantClassifier(0.0)


def fit(spec: BaselineSpec, train):
    x, y = _xy(train)
    return make_model(spec).fit(x, y)


def predict(model, rows):
    if hasattr(rows, "xy"):
        rows = rows.xy()[0]
    return model.predict(rows)


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

_ARRAY_ATTRS = ("coef_", "x_", "y_", "theta_", "var_", "prior_", "classes_")
_SCALAR_ATTRS = ("mean_", "intercept_", "lam", "k", "classify", "label", "max_depth",
                 "min_leaf", "var_smoothing", "tol", "max_sweeps", "n_features", "tree_")


def model_to_dict(model) -> dict:
    """JSON-compatible record ``{"kind": ..., "params": {...}}``."""
    params = {}
    for a in _ARRAY_ATTRS:
        if hasattr(model, a):
            params[a] = np.asarray(getattr(model, a)).tolist()
    for a in _SCALAR_ATTRS:
        if hasattr(model, a):
            params[a] = getattr(model, a)
    return {"kind": model.kind, "params": params}


def model_from_dict(d: dict):
    kind, p = d["kind"], d["params"]
    if kind not in KINDS:
        raise DataError(f"unknown model kind {kind!r}")
    model = make_model(BaselineSpec(kind))
    for a, v in p.items():
        setattr(model, a, np.asarray(v, dtype=float) if a in _ARRAY_ATTRS else v)
    model.kind = kind
    return model
