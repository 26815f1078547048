"""In-process simulation of k edge nodes training one network together.

Two modes:

* ``incremental`` passes the weights node 1 -> k, each node continuing
  training on its own shard;
* ``semi_concurrent`` lets every node train a copy of the current global
  weights, then averages the copies into the next global.

Round ``r`` trains with seed ``train.seed + r`` on every node, and the
initial global weights come from ``train.seed``.  With one node and one
round this is exactly centralized :func:`fedhe.nnet.train`.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import metrics
from .datakit import Standardizer, Table
from .errors import ConfigError, DataError
from .nnet import MlpSpec, TrainConfig, Weights, forward, init_weights, train

__all__ = [
    "FedConfig",
    "FedRun",
    "FedGrid",
    "MODES",
    "MODE_LABELS",
    "stratified_split",
    "average_weights",
    "train_federated",
    "predict",
    "crossval_federated",
    "crossval_centralized",
]

MODES = ("incremental", "semi_concurrent")
MODE_LABELS = {"incremental": "INC", "semi_concurrent": "CON", "centralized": "CEN"}

# per-node epoch budget used for incremental runs; semi-concurrent splits it over rounds
DEFAULT_NODE_EPOCHS = 200
DEFAULT_CON_ROUNDS = 10


@dataclass(frozen=True)
class FedConfig:
    k: int = 2
    mode: str = "incremental"
    rounds: int | None = None
    per_node_epochs: int | None = None
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=DEFAULT_NODE_EPOCHS))
    seed: int = 0
    weighted: bool = False  # sample-weighted averaging

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown federated mode {self.mode!r}")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.rounds is None:
            object.__setattr__(self, "rounds", 1 if self.mode == "incremental" else DEFAULT_CON_ROUNDS)
        if self.per_node_epochs is None:
            total = self.train.epochs
            object.__setattr__(self, "per_node_epochs",
                               total if self.mode == "incremental" else max(1, total // self.rounds))
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if self.per_node_epochs < 0:
            raise ConfigError("per_node_epochs must be >= 0")

    def round_config(self, r: int) -> TrainConfig:
        return replace(self.train, epochs=self.per_node_epochs, seed=self.train.seed + r)

    def to_dict(self) -> dict:
        return {"k": self.k, "mode": self.mode, "rounds": self.rounds,
                "per_node_epochs": self.per_node_epochs, "train": self.train.to_dict(),
                "seed": self.seed, "weighted": self.weighted}

    @classmethod
    def from_dict(cls, d: dict) -> "FedConfig":
        d = dict(d)
        if "train" in d:
            d["train"] = TrainConfig.from_dict(d["train"])
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(f"bad federated config: {e}") from None


@dataclass
class FedRun:
    global_weights: list[Weights]  # index 0 is the initial global
    n_samples: list[int]
    report: object = None

    @property
    def final(self) -> Weights:
        return self.global_weights[-1]


# --------------------------------------------------------------------------
# shards
# --------------------------------------------------------------------------

def _split_indices(y: np.ndarray, k: int, task: str, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    if task == "classification":
        if np.unique(y).size < 2:
            raise DataError("stratified split needs both classes present")
        return metrics.stratified_partition(y, k, rng)
    return metrics.random_partition(y.size, k, rng)


def stratified_split(data: Table, k: int, seed: int = 0, task: str = "classification") -> list[Table]:
    """Split rows into ``k`` near-equal shards, stratified on the target for classification."""
    if k == 1:
        return [data]
    y = np.asarray(data[data.target_name], dtype=float)
    return [data.take(idx) for idx in _split_indices(y, k, task, seed)]


def _shard_arrays(shards) -> list[tuple[np.ndarray, np.ndarray]]:
    if not shards:
        raise DataError("no shards given")
    if all(isinstance(s, Table) for s in shards):
        schema = shards[0].schema
        if any(s.schema != schema for s in shards):
            raise DataError("shards have incompatible schemas")
        levels = {}
        for c in shards[0].feature_columns:
            if not c.is_float:
                levels[c.name] = sorted({v for s in shards for v in s[c.name] if v is not None})
        return [s.xy(categories=levels) for s in shards]
    out = []
    for s in shards:
        x, y = s
        out.append((np.asarray(x, dtype=float), np.asarray(y, dtype=float)))
    widths = {x.shape[1] for x, _ in out}
    if len(widths) != 1:
        raise DataError("shards have incompatible feature widths")
    return out


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------

def average_weights(models: Sequence[Weights], n_samples: Sequence[int] | None = None) -> Weights:
    """Elementwise average in the given order.

    Computed as ``w_1 + sum_i c_i (w_i - w_1)`` so averaging identical
    models returns them unchanged bit-for-bit.
    """
    if not models:
        raise DataError("nothing to average")
    if n_samples is None:
        coef = [1.0 / len(models)] * len(models)
    else:
        total = float(sum(n_samples))
        coef = [n / total for n in n_samples]
    base = models[0].arrays()
    out = []
    for j, b in enumerate(base):
        acc = np.zeros_like(b)
        for c, m in zip(coef, models):
            acc = acc + (m.arrays()[j] - b) * c
        out.append(b + acc)
    return Weights.from_arrays(out)


def _node_train(spec: MlpSpec, shard, cfg: TrainConfig, init: Weights) -> Weights:
    if cfg.epochs == 0:
        return init.copy()
    w, _ = train(spec, shard, cfg, init=init)
    return w


def train_federated(spec: MlpSpec, shards, cfg: FedConfig, init: Weights | None = None) -> FedRun:
    """Run ``cfg.rounds`` federated rounds over ``shards`` (tables or ``(X, y)`` pairs)."""
    data = _shard_arrays(list(shards))
    if any(x.shape[0] == 0 for x, _ in data):
        raise DataError("empty shard")
    weights = init_weights(spec, cfg.train.seed) if init is None else init.copy()
    history = [weights]
    counts = [int(x.shape[0]) for x, _ in data]
    for r in range(cfg.rounds):
        rc = cfg.round_config(r)
        if cfg.mode == "incremental":
            for shard in data:
                weights = _node_train(spec, shard, rc, weights)
        else:
            local = [_node_train(spec, shard, rc, weights) for shard in data]
            weights = average_weights(local, counts if cfg.weighted else None)
        history.append(weights)
    return FedRun(global_weights=history, n_samples=counts)


def predict(spec: MlpSpec, weights: Weights, x) -> np.ndarray:
    """Network outputs as a 1-D array; class labels for sigmoid outputs."""
    out = np.asarray(forward(spec, weights, x), dtype=float)[:, 0]
    if spec.loss == "cross_entropy":
        return (out >= 0.5).astype(float)
    return out


# --------------------------------------------------------------------------
# federated cross-validation
# --------------------------------------------------------------------------

@dataclass
class FedGrid:
    """One metric row per (mode, k), plus the centralized reference when run."""

    task: str
    rows: list[dict]

    def row(self, mode: str, k: int) -> dict:
        label = MODE_LABELS.get(mode, mode)
        for r in self.rows:
            if r["mode"] == label and r["k"] == k:
                return r
        raise KeyError((mode, k))

    def to_csv(self) -> str:
        cols = list(self.rows[0].keys())
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in cols])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"task": self.task, "rows": self.rows}, indent=1, default=float) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return "NaN" if v != v else repr(v)
    return str(v)


def _task_of(spec: MlpSpec) -> str:
    return "classification" if spec.loss == "cross_entropy" else "regression"


def _folds(data, spec: MlpSpec, folds: int, seed: int, scale: bool):
    x, y = data.xy() if hasattr(data, "xy") else data
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    task = _task_of(spec)
    for f, test_idx in enumerate(metrics.fold_indices(y, folds, task, seed)):
        mask = np.ones(y.size, dtype=bool)
        mask[test_idx] = False
        xtr, xte = x[mask], x[test_idx]
        if scale:
            # scaling statistics of the training fold are shared with every node
            sc = Standardizer().fit(xtr)
            xtr, xte = sc.transform(xtr), sc.transform(xte)
        yield f, task, xtr, y[mask], xte, y[test_idx]


def _report(task: str, truth, pred):
    if task == "classification":
        return metrics.classification_report(truth, pred)
    return metrics.regression_report(truth, pred)


def crossval_centralized(data, spec: MlpSpec, train_cfg: TrainConfig, folds: int = 10,
                         seed: int = 0, scale: bool = True) -> metrics.CVResult:
    reports = []
    for _, task, xtr, ytr, xte, yte in _folds(data, spec, folds, seed, scale):
        w, _ = train(spec, (xtr, ytr), train_cfg)
        reports.append(_report(task, yte, predict(spec, w, xte)))
    return metrics.CVResult(mean=metrics.mean_report(reports), per_fold=reports)


def crossval_federated(data, spec: MlpSpec, cfg: FedConfig, folds: int = 10,
                       ks: Sequence[int] = (2, 3, 4), modes: Sequence[str] = MODES,
                       include_centralized: bool = True, scale: bool = True,
                       mode_configs: dict | None = None) -> FedGrid:
    """Federated k-fold CV: each training fold is split across k nodes, the result tested on the held-out fold.

    ``cfg`` supplies the training settings and seed; ``mode_configs``
    optionally overrides rounds/per_node_epochs per mode.  Round counts
    default per mode as in :class:`FedConfig`.  Shards are reshuffled once per
    CV iteration.
    """
    if folds < 2:
        raise ConfigError("folds must be >= 2")
    for m in modes:
        if m not in MODES:
            raise ConfigError(f"unknown federated mode {m!r}")
    overrides = mode_configs or {}
    configs = {}
    for m in modes:
        o = overrides.get(m, {})
        configs[m] = FedConfig(k=1, mode=m, rounds=o.get("rounds"), per_node_epochs=o.get("per_node_epochs"),
                               train=cfg.train, seed=cfg.seed, weighted=cfg.weighted)
    reports: dict[tuple[str, int], list] = {}
    for f, task, xtr, ytr, xte, yte in _folds(data, spec, folds, cfg.seed, scale):
        if include_centralized:
            w, _ = train(spec, (xtr, ytr), cfg.train)
            reports.setdefault(("centralized", 1), []).append(_report(task, yte, predict(spec, w, xte)))
        for k in ks:
            parts = [np.arange(ytr.size)] if k == 1 else _split_indices(ytr, k, task, cfg.seed + f)
            shards = [(xtr[p], ytr[p]) for p in parts]
            for m in modes:
                run = train_federated(spec, shards, replace(configs[m], k=k))
                reports.setdefault((m, k), []).append(_report(task, yte, predict(spec, run.final, xte)))
    rows = []
    for (m, k), reps in reports.items():
        mean = metrics.mean_report(reps)
        rows.append({"mode": MODE_LABELS[m], "k": k, **mean.as_dict()})
    return FedGrid(task=task, rows=rows)
