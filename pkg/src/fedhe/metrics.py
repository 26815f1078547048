"""Evaluation metrics and the (stratified) k-fold cross-validation harness.

Precision and recall with a zero denominator are defined as 0.  The
classification report carries both the positive-class F1 and the macro F1
(mean of per-class F1); published tables of this kind use the macro value.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Callable, Sequence

import numpy as np

from .errors import DataError

__all__ = [
    "ConfusionCounts",
    "ClassificationReport",
    "RegressionReport",
    "classification_report",
    "regression_report",
    "mean_report",
    "stratified_partition",
    "random_partition",
    "fold_indices",
    "CVResult",
    "cross_validate",
]


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @classmethod
    def from_labels(cls, truth, predicted) -> "ConfusionCounts":
        t = _binary_labels(truth, "truth")
        p = _binary_labels(predicted, "predicted")
        if t.shape != p.shape:
            raise DataError(f"length mismatch: {t.size} truth vs {p.size} predicted")
        if t.size == 0:
            raise DataError("cannot evaluate an empty prediction set")
        return cls(
            tp=int(np.sum(t & p)),
            tn=int(np.sum(~t & ~p)),
            fp=int(np.sum(~t & p)),
            fn=int(np.sum(t & ~p)),
        )


def _binary_labels(x, what) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if not np.all((x == 0) | (x == 1)):
        raise DataError(f"{what} labels must be 0 or 1")
    return x == 1


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


@dataclass(frozen=True)
class ClassificationReport:
    acc: float
    f1_pos: float
    f1_macro: float
    prec_pos: float
    rec_pos: float
    prec_neg: float
    rec_neg: float
    prec_macro: float
    rec_macro: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RegressionReport:
    mae: float
    mse: float
    r2: float
    pc: float  # NaN when either variance is zero

    def as_dict(self) -> dict:
        return asdict(self)


def classification_report(truth, predicted) -> ClassificationReport:
    c = ConfusionCounts.from_labels(truth, predicted)
    tp, tn, fp, fn = c.tp, c.tn, c.fp, c.fn
    prec_pos = _ratio(tp, tp + fp)
    rec_pos = _ratio(tp, tp + fn)
    prec_neg = _ratio(tn, tn + fn)
    rec_neg = _ratio(tn, tn + fp)
    f1_pos = _ratio(2 * tp, 2 * tp + fp + fn)
    f1_neg = _ratio(2 * tn, 2 * tn + fn + fp)
    return ClassificationReport(
        acc=(tp + tn) / (tp + tn + fp + fn),
        f1_pos=f1_pos,
        f1_macro=(f1_pos + f1_neg) / 2,
        prec_pos=prec_pos,
        rec_pos=rec_pos,
        prec_neg=prec_neg,
        rec_neg=rec_neg,
        prec_macro=(prec_pos + prec_neg) / 2,
        rec_macro=(rec_pos + rec_neg) / 2,
    )


def regression_report(truth, predicted) -> RegressionReport:
    x = np.asarray(truth, dtype=float).ravel()
    y = np.asarray(predicted, dtype=float).ravel()
    if x.shape != y.shape:
        raise DataError(f"length mismatch: {x.size} truth vs {y.size} predicted")
    n = x.size
    if n < 2:
        raise DataError("regression metrics need at least 2 pairs")
    diff = x - y
    ss_res = float(np.sum(diff * diff))
    dx = x - x.mean()
    dy = y - y.mean()
    # an exactly constant vector has zero spread even when its computed mean rounds off
    ss_tot = 0.0 if np.all(x == x[0]) else float(np.sum(dx * dx))
    ss_pred = 0.0 if np.all(y == y[0]) else float(np.sum(dy * dy))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else -math.inf)
    if ss_tot > 0 and ss_pred > 0:
        pc = float(np.sum(dx * dy)) / (math.sqrt(ss_tot) * math.sqrt(ss_pred))
    else:
        pc = math.nan
    return RegressionReport(
        mae=float(np.sum(np.abs(diff))) / n,
        mse=ss_res / n,
        r2=r2,
        pc=pc,
    )


def mean_report(reports: Sequence):
    """Field-wise arithmetic mean of same-typed reports (NaN propagates)."""
    if not reports:
        raise DataError("no reports to average")
    cls = type(reports[0])
    values = {f.name: float(np.mean([getattr(r, f.name) for r in reports])) for f in fields(cls)}
    return cls(**values)


# --------------------------------------------------------------------------
# partitions
# --------------------------------------------------------------------------

def stratified_partition(y, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Split row indices into ``k`` parts with per-class counts within one of each other.

    Each class is shuffled and dealt round-robin, continuing the deal where
    the previous class stopped, so part sizes also differ by at most one.
    """
    y = np.asarray(y).ravel()
    if k < 1:
        raise DataError("k must be >= 1")
    if k > y.size:
        raise DataError(f"cannot split {y.size} rows into {k} parts")
    parts: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for cls in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == cls))
        for j, i in enumerate(idx):
            parts[(offset + j) % k].append(int(i))
        offset = (offset + idx.size) % k
    return [np.sort(np.array(p, dtype=int)) for p in parts]


def random_partition(n: int, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    if k < 1:
        raise DataError("k must be >= 1")
    if k > n:
        raise DataError(f"cannot split {n} rows into {k} parts")
    perm = rng.permutation(n)
    return [np.sort(perm[j::k]) for j in range(k)]


def fold_indices(y, folds: int, task: str, seed: int = 0) -> list[np.ndarray]:
    """Test-fold index arrays: stratified for classification, random otherwise."""
    if folds < 2:
        raise DataError("cross-validation needs at least 2 folds")
    rng = np.random.default_rng(seed)
    if task == "classification":
        return stratified_partition(y, folds, rng)
    if task == "regression":
        return random_partition(len(np.asarray(y)), folds, rng)
    raise DataError(f"unknown task {task!r}")


# --------------------------------------------------------------------------
# cross-validation
# --------------------------------------------------------------------------

@dataclass
class CVResult:
    mean: object
    per_fold: list


def _evaluate(task: str, truth, predicted):
    if task == "classification":
        return classification_report(truth, predicted)
    return regression_report(truth, predicted)


def cross_validate(model_factory: Callable[[], object], data, folds: int = 10,
                   task: str = "classification", seed: int = 0) -> CVResult:
    """k-fold cross-validation of models built by ``model_factory``.

    The factory returns a fresh object with ``fit(X, y)`` and ``predict(X)``;
    for classification ``predict`` yields 0/1 labels.  The mean report is
    what the rest of the package calls a model's confidence scores.
    """
    x, y = data.xy() if hasattr(data, "xy") else data
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    test_folds = fold_indices(y, folds, task, seed)
    reports = []
    for test_idx in test_folds:
        mask = np.ones(y.size, dtype=bool)
        mask[test_idx] = False
        if task == "classification" and np.unique(y[mask]).size < 2:
            raise DataError("a training fold is missing one of the classes")
        model = model_factory()
        model.fit(x[mask], y[mask])
        reports.append(_evaluate(task, y[test_idx], model.predict(x[test_idx])))
    return CVResult(mean=mean_report(reports), per_fold=reports)
