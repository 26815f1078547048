"""Surrogate models and feature attribution for any predictor.

A surrogate is fitted to a model's own predictions (not the ground truth)
and scored on a held-out 20% of those pairs.  Linear surrogates support
exact additive attribution ``phi_j = w_j (x_j - mean_j)``; permutation
importance works on the original model directly.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import metrics
from .baselines import DecisionTree
from .errors import ConfigError, DataError, UnsupportedConfigurationError

__all__ = [
    "Surrogate",
    "Attribution",
    "fit_surrogate",
    "attribute",
    "permutation_importance",
    "METRICS",
]

SURROGATE_KINDS = ("linear", "tree")
TREE_MAX_DEPTH = 3


def _features(data) -> tuple[np.ndarray, list[str]]:
    if hasattr(data, "xy"):
        x, _ = data.xy()
        names = data.feature_names()
    else:
        x = data[0] if isinstance(data, tuple) else data
        x = np.asarray(x, dtype=float)
        names = [f"x{j}" for j in range(x.shape[1])]
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DataError("need a non-empty 2-d feature matrix")
    return x, names


@dataclass
class Surrogate:
    kind: str
    task: str
    feature_names: list[str]
    fidelity: float  # NaN when the model's predictions are constant
    intercept: float = 0.0
    coef: np.ndarray | None = None
    tree: DecisionTree | None = None

    @property
    def fidelity_defined(self) -> bool:
        return not math.isnan(self.fidelity)

    def raw(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "linear":
            return self.intercept + x @ self.coef
        return self.tree.predict_proba(x) if self.task == "classification" else self.tree.predict(x)

    def predict(self, x) -> np.ndarray:
        out = self.raw(x)
        if self.task == "classification":
            return (out >= 0.5).astype(float)
        return out


def _infer_task(p: np.ndarray) -> str:
    return "classification" if np.all((p == 0) | (p == 1)) else "regression"


def _fidelity(task: str, target, pred) -> float:
    target = np.asarray(target, dtype=float)
    if task == "classification":
        return float(np.mean(target == pred))
    ss_tot = float(np.sum((target - target.mean()) ** 2))
    return 1.0 - float(np.sum((target - pred) ** 2)) / ss_tot


def fit_surrogate(model_predict_fn: Callable, data, kind: str = "linear", task: str | None = None,
                  seed: int = 0, holdout: float = 0.2) -> Surrogate:
    """Fit an interpretable surrogate to ``model_predict_fn`` over the rows of ``data``.

    ``kind`` is ``linear`` (least squares) or ``tree`` (CART, depth <= 3).
    Fidelity is R2 for regression and accuracy for classification, measured
    on a held-out share of the rows; it is NaN when the model's predictions
    are constant.
    """
    if kind not in SURROGATE_KINDS:
        raise ConfigError(f"unknown surrogate kind {kind!r}")
    if not 0 < holdout < 1:
        raise ConfigError("holdout must lie in (0, 1)")
    x, names = _features(data)
    p = np.asarray(model_predict_fn(x), dtype=float).ravel()
    if p.size != x.shape[0]:
        raise DataError("model returned the wrong number of predictions")
    task = task or _infer_task(p)

    if np.all(p == p[0]):
        return Surrogate(kind, task, names, math.nan, intercept=float(p[0]),
                         coef=np.zeros(x.shape[1]) if kind == "linear" else None,
                         tree=_const_tree(x, p) if kind == "tree" else None)

    perm = np.random.default_rng(seed).permutation(x.shape[0])
    n_test = max(1, int(round(holdout * x.shape[0])))
    test, fit_idx = perm[:n_test], perm[n_test:]
    if fit_idx.size == 0:
        raise DataError("too few rows to hold out a fidelity set")
    xf, pf = x[fit_idx], p[fit_idx]
    if kind == "linear":
        design = np.hstack([np.ones((xf.shape[0], 1)), xf])
        sol, *_ = np.linalg.lstsq(design, pf, rcond=None)
        s = Surrogate(kind, task, names, math.nan, intercept=float(sol[0]), coef=sol[1:])
    else:
        tree = DecisionTree(max_depth=TREE_MAX_DEPTH, min_leaf=1, classify=task == "classification")
        tree.fit(xf, pf)
        s = Surrogate(kind, task, names, math.nan, tree=tree)
    pt = p[test]
    if task == "regression" and np.all(pt == pt[0]):
        s.fidelity = math.nan
    else:
        s.fidelity = _fidelity(task, pt, s.predict(x[test]))
    return s


def _const_tree(x, p) -> DecisionTree:
    tree = DecisionTree(max_depth=1, min_leaf=1, classify=bool(np.all((p == 0) | (p == 1))))
    return tree.fit(x, p)


@dataclass
class Attribution:
    feature_names: list[str]
    values: np.ndarray
    contributions: np.ndarray
    base: float

    @property
    def prediction(self) -> float:
        return self.base + float(np.sum(self.contributions))

    def ranked(self) -> list[tuple[str, float, float]]:
        order = sorted(range(len(self.feature_names)), key=lambda j: (-abs(self.contributions[j]), j))
        return [(self.feature_names[j], float(self.values[j]), float(self.contributions[j])) for j in order]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "value", "contribution"])
        for name, v, c in self.ranked():
            w.writerow([name, repr(v), repr(c)])
        return buf.getvalue()


def attribute(surrogate: Surrogate, instance, background_means) -> Attribution:
    """Exact additive attribution of a linear surrogate's output for one instance."""
    if surrogate.kind != "linear":
        raise UnsupportedConfigurationError("attribution needs a linear surrogate")
    x = np.asarray(instance, dtype=float).ravel()
    mu = np.asarray(background_means, dtype=float).ravel()
    if x.size != surrogate.coef.size or mu.size != x.size:
        raise DataError("instance and background must match the surrogate's features")
    phi = surrogate.coef * (x - mu)
    base = surrogate.intercept + float(mu @ surrogate.coef)
    return Attribution(list(surrogate.feature_names), x, phi, base)


def _neg_mae(t, p):
    return -float(np.mean(np.abs(np.asarray(t) - np.asarray(p))))


METRICS: dict[str, Callable] = {
    "acc": lambda t, p: metrics.classification_report(t, p).acc,
    "f1_macro": lambda t, p: metrics.classification_report(t, p).f1_macro,
    "r2": lambda t, p: metrics.regression_report(t, p).r2,
    "neg_mae": _neg_mae,
}


def permutation_importance(model_predict_fn: Callable, data, metric: str | Callable = "r2",
                           seed: int = 0, repeats: int = 5) -> dict[str, float]:
    """Mean drop in ``metric`` (higher is better) after shuffling each feature column."""
    score = METRICS[metric] if isinstance(metric, str) else metric
    if hasattr(data, "xy"):
        x, y = data.xy()
        names = data.feature_names()
    else:
        x, y = data
        names = [f"x{j}" for j in range(np.shape(x)[1])]
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    base = score(y, model_predict_fn(x))
    rng = np.random.default_rng(seed)
    out = {}
    for j, name in enumerate(names):
        drops = []
        for _ in range(repeats):
            xp = x.copy()
            xp[:, j] = x[rng.permutation(x.shape[0]), j]
            drops.append(base - score(y, model_predict_fn(xp)))
        out[name] = float(np.mean(drops))
    return out


def top_features(importances: dict[str, float], n: int | None = None) -> Sequence[str]:
    ranked = sorted(importances, key=lambda k: -importances[k])
    return ranked if n is None else ranked[:n]
