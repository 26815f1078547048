"""``fedhe`` command-line experiment runner.

Every command reads an optional JSON config (``--config``), lets flags
override its values, writes CSV + JSON outputs into the output directory
together with a ``manifest.json`` and exits with 0 on success, 2 on a
configuration error, 3 on a data error and 4 on a protocol error.

The output directory is ``--output-dir``, else the config's ``output``,
else ``$FEDHE_OUTPUT_DIR``, else ``./fedhe-out``.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import platform
import statistics
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__, baselines, datakit, explain, fedsim, fedwire, hecore, metrics, nnet
from .errors import ConfigError, DataError, FedHEError, ProtocolError

__all__ = ["ExperimentConfig", "load_config", "main", "ENV_OUTPUT_DIR"]

ENV_OUTPUT_DIR = "FEDHE_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "fedhe-out"
EXIT_CONFIG, EXIT_DATA, EXIT_PROTOCOL = 2, 3, 4

log = logging.getLogger("fedhe")

MLP_MODELS = ("mlp", "federated")


@dataclass
class ExperimentConfig:
    data: str | None = None
    schema: str | None = None
    synth: dict | None = None  # {"kind", "rows", "seed"}
    target: str | None = None  # medication flag -> classification
    orb: list | None = None  # [n, m] -> regression on QoL at month m
    impute: bool = True
    z_max: float = 4.0
    dp_epsilon: float | None = None
    task: str | None = None
    model: str = "mlp"  # baseline kind, "mlp" or "federated"; eval accepts a comma list
    he: bool = False
    hidden: list | None = None
    train: dict = field(default_factory=dict)
    federated: dict = field(default_factory=dict)
    folds: int = 10
    seed: int = 0
    output: str | None = None

    def models(self) -> list[str]:
        return [m.strip() for m in str(self.model).split(",") if m.strip()]

    def validate(self, needs_data: bool = True) -> "ExperimentConfig":
        if needs_data and (self.data is None) == (self.synth is None):
            raise ConfigError("give exactly one of 'data' or 'synth'")
        if self.target is not None and self.orb is not None:
            raise ConfigError("'target' and 'orb' select different tasks; give one")
        derived = "classification" if self.target is not None else "regression" if self.orb is not None else None
        if self.task is None:
            self.task = derived
        elif self.task not in ("classification", "regression"):
            raise ConfigError(f"task must be classification or regression, got {self.task!r}")
        elif derived and derived != self.task:
            raise ConfigError(f"task {self.task!r} conflicts with the {derived} dataset selection")
        if self.orb is not None and (len(self.orb) != 2 or not all(isinstance(v, int) for v in self.orb)):
            raise ConfigError("'orb' must be [n, m] with integer months")
        models = self.models()
        if not models:
            raise ConfigError("no model selected")
        for m in models:
            if m not in baselines.KINDS and m not in MLP_MODELS:
                raise ConfigError(f"unknown model {m!r}; choose a baseline {baselines.KINDS}, 'mlp' or 'federated'")
            if m in baselines.KINDS and self.task and baselines.BaselineSpec(m).task != self.task:
                raise ConfigError(f"model {m!r} does not fit a {self.task} task")
        if self.he:
            if models != ["mlp"]:
                raise ConfigError("the HE flag applies to a single 'mlp' model only")
            if self.train.get("optimizer", "sgd") != "sgd":
                raise ConfigError("encrypted training needs optimizer 'sgd'")
            self.train = {**self.train, "optimizer": "sgd"}
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if self.dp_epsilon is not None and not self.dp_epsilon > 0:
            raise ConfigError("dp_epsilon must be positive")
        try:
            self.train_config()
        except TypeError as e:
            raise ConfigError(f"bad 'train' section: {e}") from None
        return self

    def train_config(self) -> nnet.TrainConfig:
        unknown = set(self.train) - {f.name for f in fields(nnet.TrainConfig)}
        if unknown:
            raise ConfigError(f"unknown 'train' keys: {sorted(unknown)}")
        return nnet.TrainConfig(**{"seed": self.seed, **self.train})

    def to_dict(self) -> dict:
        return asdict(self)


_FED_KEYS = {"k", "ks", "mode", "modes", "rounds", "per_node_epochs", "weighted", "mode_configs"}


def _line_of(text: str, key: str) -> int | None:
    for i, line in enumerate(text.splitlines(), start=1):
        if f'"{key}"' in line:
            return i
    return None


def load_config(path) -> tuple[dict, str]:
    """Parse a JSON config file; errors carry ``path:line``."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    if not isinstance(d, dict):
        raise ConfigError(f"{path}:1: config must be a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    for key in d:
        if key not in known:
            raise ConfigError(f"{path}:{_line_of(text, key)}: unknown config key {key!r}")
    for key in d.get("federated", {}) or {}:
        if key not in _FED_KEYS:
            raise ConfigError(f"{path}:{_line_of(text, key)}: unknown federated key {key!r}")
    types = {"folds": int, "seed": int, "z_max": (int, float), "dp_epsilon": (int, float, type(None)),
             "impute": bool, "he": bool, "train": dict, "federated": dict, "model": str}
    for key, t in types.items():
        if key in d and not isinstance(d[key], t):
            raise ConfigError(f"{path}:{_line_of(text, key)}: {key!r} has the wrong type")
    return d, text


def _build_config(args, needs_data: bool = True) -> ExperimentConfig:
    base: dict = {}
    text, path = "", None
    if getattr(args, "config", None):
        path = args.config
        base, text = load_config(path)
    for f in fields(ExperimentConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            base[f.name] = v
    train_over = {k: getattr(args, k, None) for k in ("learning_rate", "batch_size", "epochs", "optimizer")}
    train_over = {k: v for k, v in train_over.items() if v is not None}
    if train_over:
        base["train"] = {**base.get("train", {}), **train_over}
    try:
        cfg = ExperimentConfig(**base)
        return cfg.validate(needs_data)
    except ConfigError as e:
        if path:
            raise ConfigError(f"{path}: {e}") from None
        raise


# --------------------------------------------------------------------------
# outputs
# --------------------------------------------------------------------------

def _output_dir(args, cfg: ExperimentConfig | None = None) -> Path:
    d = getattr(args, "output_dir", None) or (cfg.output if cfg else None) \
        or os.environ.get(ENV_OUTPUT_DIR) or DEFAULT_OUTPUT_DIR
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _cell(v) -> str:
    if isinstance(v, float):
        return "NaN" if math.isnan(v) else repr(v)
    return str(v)


def _json_safe(v):
    if isinstance(v, float) and (math.isnan(v) or math.isinf(v)):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    if isinstance(v, np.generic):
        return _json_safe(v.item())
    return v


def _dump_json(obj, path: Path):
    path.write_text(json.dumps(_json_safe(obj), indent=1, sort_keys=True) + "\n")


def write_rows(rows: list[dict], outdir: Path, stem: str) -> list[str]:
    """CSV + JSON twin of a list of same-keyed rows."""
    cols = list(rows[0].keys())
    with open(outdir / f"{stem}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_cell(r[c]) for c in cols])
    _dump_json(rows, outdir / f"{stem}.json")
    return [f"{stem}.csv", f"{stem}.json"]


def write_manifest(outdir: Path, command: str, config: dict, seed: int, outputs: list[str]):
    canon = json.dumps(_json_safe(config), sort_keys=True, separators=(",", ":"))
    _dump_json({
        "command": command,
        "config": config,
        "config_hash": hashlib.sha256(canon.encode()).hexdigest(),
        "seed": seed,
        "outputs": sorted(outputs),
        "versions": {"fedhe": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
    }, outdir / "manifest.json")


# --------------------------------------------------------------------------
# data pipeline
# --------------------------------------------------------------------------

def _sidecar(csv_path: str) -> str:
    p = Path(csv_path)
    return str(p.with_name(p.stem + ".schema.json"))


def _load(cfg: ExperimentConfig) -> datakit.Table:
    if cfg.synth is not None:
        s = cfg.synth
        unknown = set(s) - {"kind", "rows", "seed"}
        if unknown:
            raise ConfigError(f"unknown synth keys {sorted(unknown)}")
        t = datakit.synth(s.get("kind", "bcbase_like"), int(s.get("rows", 2000)), int(s.get("seed", cfg.seed)))
    else:
        if not Path(cfg.data).exists():
            raise DataError(f"{cfg.data}: no such file")
        schema = cfg.schema or (_sidecar(cfg.data) if Path(_sidecar(cfg.data)).exists() else None)
        t = datakit.load_csv(cfg.data, schema)
    if cfg.target is not None:
        t = datakit.make_binary_target(t, cfg.target)
    elif cfg.orb is not None:
        t = datakit.slice_orb(t, cfg.orb[0], cfg.orb[1])
    if cfg.impute:
        t = datakit.preprocess(t, z_max=cfg.z_max)
    if cfg.dp_epsilon is not None:
        t = datakit.dp_noise(t, datakit.DpConfig(cfg.dp_epsilon), cfg.seed)
    return t


def _task(cfg: ExperimentConfig, y: np.ndarray) -> str:
    if cfg.task:
        return cfg.task
    return "classification" if np.all((y == 0) | (y == 1)) else "regression"


def _mlp_spec(cfg: ExperimentConfig, n_inputs: int, task: str, federated: bool = False) -> nnet.MlpSpec:
    if task == "classification":
        return nnet.MlpSpec.classifier(n_inputs, tuple(cfg.hidden) if cfg.hidden else (64, 32, 16))
    if cfg.hidden:
        return nnet.MlpSpec.regressor(n_inputs, tuple(cfg.hidden))
    return nnet.MlpSpec.federated_regressor(n_inputs) if federated else nnet.MlpSpec.regressor(n_inputs)


def _fed_config(cfg: ExperimentConfig, k: int | None = None, mode: str | None = None) -> fedsim.FedConfig:
    f = cfg.federated
    return fedsim.FedConfig(k=k or f.get("k", 2), mode=mode or f.get("mode", "incremental"),
                            rounds=f.get("rounds"), per_node_epochs=f.get("per_node_epochs"),
                            train=cfg.train_config(), seed=cfg.seed, weighted=bool(f.get("weighted", False)))


class _Scaled:
    """Baseline wrapped with training-fold standardization."""

    def __init__(self, model):
        self.model = model

    def fit(self, x, y):
        self.scaler = datakit.Standardizer().fit(x)
        self.model.fit(self.scaler.transform(x), y)
        return self

    def predict(self, x):
        return self.model.predict(self.scaler.transform(x))


class _Mlp:
    """MLP with the fit/predict surface; ``he`` trains on ciphertexts."""

    def __init__(self, spec: nnet.MlpSpec, tcfg: nnet.TrainConfig, he: bool = False, seed: int = 0):
        self.spec, self.tcfg, self.he, self.seed = spec, tcfg, he, seed

    def fit(self, x, y):
        self.scaler = datakit.Standardizer().fit(x)
        xs = self.scaler.transform(x)
        if self.he:
            key = hecore.keygen(hecore.KeyGenConfig(seed=self.seed))
            enc, _ = nnet.train_encrypted(self.spec, xs, y, self.tcfg, key, np.random.default_rng((self.seed, 2)))
            self.weights = nnet.decrypt_weights(enc, key)
        else:
            self.weights, _ = nnet.train(self.spec, (xs, y), self.tcfg)
        return self

    def predict(self, x):
        return fedsim.predict(self.spec, self.weights, self.scaler.transform(x))


def _factory(cfg: ExperimentConfig, kind: str, n_inputs: int, task: str):
    if kind == "mlp":
        spec, tcfg = _mlp_spec(cfg, n_inputs, task), cfg.train_config()
        return lambda: _Mlp(spec, tcfg, cfg.he, cfg.seed)
    spec = baselines.BaselineSpec(kind)
    return lambda: _Scaled(baselines.make_model(spec))


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_synth(args) -> int:
    kind = args.kind or "bcbase_like"
    rows = args.rows or 2000
    seed = args.seed if args.seed is not None else 0
    out = Path(args.out) if args.out else _output_dir(args) / f"{kind}_{rows}_{seed}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    t = datakit.synth(kind, rows, seed)
    datakit.save_csv(t, out, _sidecar(str(out)))
    mdir = out.parent
    write_manifest(mdir, "synth", {"kind": kind, "rows": rows, "seed": seed}, seed,
                   [out.name, Path(_sidecar(str(out))).name])
    print(out)
    return 0


def cmd_prep(args) -> int:
    cfg = _build_config(args, needs_data=True)
    outdir = _output_dir(args, cfg)
    t = _load(cfg)
    if args.one_hot:
        t = datakit.one_hot(t)
    if args.standardize:
        t = datakit.standardize(t)
    outputs = ["prepared.csv", "prepared.schema.json"]
    datakit.save_csv(t, outdir / "prepared.csv", outdir / "prepared.schema.json")
    if args.split:
        task = cfg.task or _task(cfg, np.asarray(t[t.target_name], dtype=float))
        for i, shard in enumerate(fedsim.stratified_split(t, args.split, cfg.seed, task)):
            datakit.save_csv(shard, outdir / f"shard_{i}.csv", outdir / f"shard_{i}.schema.json")
            outputs += [f"shard_{i}.csv", f"shard_{i}.schema.json"]
    write_manifest(outdir, "prep", cfg.to_dict(), cfg.seed, outputs)
    print(outdir / "prepared.csv")
    return 0


def cmd_train(args) -> int:
    cfg = _build_config(args)
    if len(cfg.models()) != 1:
        raise ConfigError("train takes exactly one model")
    kind = cfg.models()[0]
    outdir = _output_dir(args, cfg)
    t = _load(cfg)
    x, y = t.xy()
    task = _task(cfg, y)
    start = time.perf_counter()
    record: dict = {"model": kind, "task": task, "features": t.feature_names()}
    if kind == "federated":
        scaler = datakit.Standardizer().fit(x)
        xs = scaler.transform(x)
        spec = _mlp_spec(cfg, x.shape[1], task, federated=True)
        fcfg = _fed_config(cfg)
        parts = [np.arange(y.size)] if fcfg.k == 1 else fedsim._split_indices(y, fcfg.k, task, cfg.seed)
        run = fedsim.train_federated(spec, [(xs[p], y[p]) for p in parts], fcfg)
        record.update(spec=spec.to_dict(), federated=fcfg.to_dict(), weights=run.final.to_text(),
                      scaler={"mean": scaler.mean_.tolist(), "scale": scaler.scale_.tolist()})
    else:
        m = _factory(cfg, kind, x.shape[1], task)().fit(x, y)
        record["scaler"] = {"mean": m.scaler.mean_.tolist(), "scale": m.scaler.scale_.tolist()}
        if kind == "mlp":
            record.update(spec=m.spec.to_dict(), train=m.tcfg.to_dict(), he=cfg.he, weights=m.weights.to_text())
        else:
            record["model_state"] = baselines.model_to_dict(m.model)
    elapsed = time.perf_counter() - start
    _dump_json(record, outdir / "model.json")
    write_manifest(outdir, "train", cfg.to_dict(), cfg.seed, ["model.json"])
    log.info("trained %s in %.2fs", kind, elapsed)
    print(outdir / "model.json")
    return 0


def cmd_eval(args) -> int:
    cfg = _build_config(args)
    outdir = _output_dir(args, cfg)
    t = _load(cfg)
    x, y = t.xy()
    task = _task(cfg, y)
    rows = []
    outputs = []
    for kind in cfg.models():
        if kind == "federated":
            f = cfg.federated
            grid = fedsim.crossval_federated(
                (x, y), _mlp_spec(cfg, x.shape[1], task, federated=True), _fed_config(cfg, k=1),
                folds=cfg.folds, ks=tuple(f.get("ks", (2, 3, 4))),
                modes=tuple(f.get("modes", fedsim.MODES)), mode_configs=f.get("mode_configs"))
            outputs += write_rows(grid.rows, outdir, "federated_grid")
            continue
        res = metrics.cross_validate(_factory(cfg, kind, x.shape[1], task), (x, y), cfg.folds, task, cfg.seed)
        label = "mlp-he" if kind == "mlp" and cfg.he else kind
        rows.append({"model": label.upper(), **res.mean.as_dict()})
    if rows:
        outputs += write_rows(rows, outdir, "eval")
    write_manifest(outdir, "eval", cfg.to_dict(), cfg.seed, outputs)
    print(outdir / outputs[0])
    return 0


def cmd_explain(args) -> int:
    cfg = _build_config(args)
    if len(cfg.models()) != 1 or cfg.models()[0] == "federated":
        raise ConfigError("explain takes one baseline or 'mlp' model")
    kind = cfg.models()[0]
    outdir = _output_dir(args, cfg)
    t = _load(cfg)
    x, y = t.xy()
    task = _task(cfg, y)
    model = _factory(cfg, kind, x.shape[1], task)().fit(x, y)
    names = t.feature_names()
    row = args.row or 0
    if not 0 <= row < x.shape[0]:
        raise DataError(f"row {row} out of range (table has {x.shape[0]} rows)")
    sur = explain.fit_surrogate(model.predict, x, kind=args.surrogate or "linear", task=task, seed=cfg.seed)
    sur.feature_names = names
    outputs = []
    if sur.kind == "linear":
        att = explain.attribute(sur, x[row], x.mean(axis=0))
        (outdir / "attribution.csv").write_text(att.to_csv())
        outputs.append("attribution.csv")
    metric = "f1_macro" if task == "classification" else "r2"
    imp = explain.permutation_importance(model.predict, (x, y), metric, seed=cfg.seed)
    imp_rows = [{"feature": names[int(k[1:])], "importance": v}
                for k, v in sorted(imp.items(), key=lambda kv: (-kv[1], int(kv[0][1:])))]
    outputs += write_rows(imp_rows, outdir, "importance")
    _dump_json({"kind": sur.kind, "task": sur.task, "fidelity": sur.fidelity,
                "intercept": sur.intercept,
                "coef": dict(zip(names, sur.coef.tolist())) if sur.coef is not None else None},
               outdir / "surrogate.json")
    outputs.append("surrogate.json")
    write_manifest(outdir, "explain", cfg.to_dict(), cfg.seed, outputs)
    print(outdir / outputs[0])
    return 0


def bench_he(rows: int = 200, features: int = 20, epochs: int = 2, repeats: int = 3,
             hidden=(64, 32, 16), seed: int = 0) -> dict:
    """Median wall-clock seconds of plaintext vs encrypted training and inference."""
    if min(rows, features, epochs, repeats) < 1:
        raise ConfigError("bench-he sizes must be positive")
    data = datakit.synth("bcbase_like", max(rows, 50), seed)
    x, y = datakit.preprocess(datakit.make_binary_target(data, "med_anxiety")).xy()
    x = datakit.Standardizer().fit_transform(x[:rows, :features])
    y = y[:rows]
    spec = nnet.MlpSpec.classifier(x.shape[1], tuple(hidden))
    tcfg = nnet.TrainConfig(epochs=epochs, seed=seed)
    key = hecore.keygen(hecore.KeyGenConfig(seed=seed))
    rng = np.random.default_rng((seed, 2))
    init = nnet.init_weights(spec, seed)
    ex, ey = hecore.encrypt_array(key, x, rng), hecore.encrypt_array(key, y[:, None], rng)
    basis = hecore.SlotBasis(hecore.encrypt(key, 0.0, rng))
    ew = nnet.encrypt_weights(init, key, rng)

    def timed(fn):
        ts = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            out = fn()
            ts.append(time.perf_counter() - t0)
        return statistics.median(ts), out

    tp, (wp, _) = timed(lambda: nnet.train(spec, (x, y), tcfg, init=init))
    te, (we, _) = timed(lambda: nnet.train(spec, (ex, ey), tcfg, init=ew, basis=basis))
    ip, _ = timed(lambda: nnet.forward(spec, wp, x))
    ie, _ = timed(lambda: nnet.forward(spec, we, ex))
    return {"train_plain_s": tp, "train_encrypted_s": te, "infer_plain_s": ip, "infer_encrypted_s": ie}


def cmd_bench_he(args) -> int:
    outdir = _output_dir(args)
    params = {"rows": args.rows or 200, "features": args.features or 20, "epochs": args.epochs or 2,
              "repeats": args.repeats or 3, "seed": args.seed or 0}
    row = bench_he(**params)
    outputs = write_rows([row], outdir, "bench_he")
    write_manifest(outdir, "bench-he", params, params["seed"], outputs)
    print(outdir / "bench_he.csv")
    return 0


def cmd_coordinator(args) -> int:
    cfg = _build_config(args, needs_data=False)
    if not args.n_inputs:
        raise ConfigError("coordinator needs --n-inputs")
    outdir = _output_dir(args, cfg)
    task = cfg.task or "classification"
    spec = _mlp_spec(cfg, args.n_inputs, task, federated=True)
    fcfg = _fed_config(cfg, k=args.k or cfg.federated.get("k", 2), mode="semi_concurrent")
    if args.rounds is not None or args.per_node_epochs is not None:
        fcfg = fedsim.FedConfig(k=fcfg.k, mode=fcfg.mode, rounds=args.rounds or fcfg.rounds,
                                per_node_epochs=args.per_node_epochs if args.per_node_epochs is not None
                                else fcfg.per_node_epochs, train=fcfg.train, seed=fcfg.seed,
                                weighted=fcfg.weighted)

    def announce(addr):
        print(f"listening on {addr[0]}:{addr[1]}", file=sys.stderr, flush=True)

    run = fedwire.run_coordinator(args.listen, spec, fcfg, fcfg.k, on_listen=announce)
    (outdir / "weights.txt").write_text(run.final.to_text())
    _dump_json({"spec": spec.to_dict(), "federated": fcfg.to_dict(), "n_samples": run.n_samples},
               outdir / "run.json")
    write_manifest(outdir, "coordinator", cfg.to_dict(), cfg.seed, ["weights.txt", "run.json"])
    print(outdir / "weights.txt")
    return 0


def cmd_worker(args) -> int:
    if not args.data or not args.node_id:
        raise ConfigError("worker needs --data and --node-id")
    if not Path(args.data).exists():
        raise DataError(f"{args.data}: no such file")
    schema = args.schema or (_sidecar(args.data) if Path(_sidecar(args.data)).exists() else None)
    shard = datakit.load_csv(args.data, schema)
    fedwire.run_worker(args.connect, shard, args.node_id)
    return 0


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--output-dir", help=f"output directory (default ${ENV_OUTPUT_DIR} or ./{DEFAULT_OUTPUT_DIR})")
    common.add_argument("-v", "--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", help="input CSV (schema sidecar <name>.schema.json is picked up)")
    data.add_argument("--schema", help="schema sidecar path")
    data.add_argument("--synth-kind", choices=("bcbase_like", "orb_like"), help="generate data instead of --data")
    data.add_argument("--synth-rows", type=int)
    data.add_argument("--target", help="medication flag used as the binary target")
    data.add_argument("--orb", type=int, nargs=2, metavar=("N", "M"), help="ORB-N-M regression slice")
    data.add_argument("--no-impute", dest="impute", action="store_const", const=False)
    data.add_argument("--z-max", type=float)
    data.add_argument("--dp-epsilon", type=float)
    data.add_argument("--task", choices=("classification", "regression"))
    data.add_argument("--seed", type=int)

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--model", help="baseline kind, 'mlp' or 'federated' (eval: comma list)")
    model.add_argument("--he", action="store_const", const=True, help="train the MLP on encrypted data")
    model.add_argument("--hidden", type=int, nargs="+")
    model.add_argument("--learning-rate", type=float)
    model.add_argument("--batch-size", type=int)
    model.add_argument("--epochs", type=int)
    model.add_argument("--optimizer", choices=("sgd", "adam"))
    model.add_argument("--folds", type=int)

    p = argparse.ArgumentParser(prog="fedhe", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic table")
    s.add_argument("--kind", choices=("bcbase_like", "orb_like"))
    s.add_argument("--rows", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="CSV path (default <output-dir>/<kind>_<rows>_<seed>.csv)")
    s.set_defaults(fn=cmd_synth)

    s = sub.add_parser("prep", parents=[common, data], help="derive the task table and preprocess it")
    s.add_argument("--one-hot", action="store_true", help="encode categorical features as 0/1 columns")
    s.add_argument("--standardize", action="store_true", help="z-score float feature columns")
    s.add_argument("--split", type=int, help="also write k stratified shard files")
    s.set_defaults(fn=cmd_prep)

    for name, fn, text in (("train", cmd_train, "fit one model on the whole table"),
                           ("eval", cmd_eval, "k-fold cross-validated metric rows"),
                           ("explain", cmd_explain, "surrogate, attribution and permutation importance")):
        s = sub.add_parser(name, parents=[common, data, model], help=text)
        if name == "explain":
            s.add_argument("--surrogate", choices=("linear", "tree"))
            s.add_argument("--row", type=int, help="row index to attribute")
        s.set_defaults(fn=fn)

    s = sub.add_parser("bench-he", parents=[common], help="plaintext vs encrypted timing row")
    s.add_argument("--rows", type=int)
    s.add_argument("--features", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--repeats", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(fn=cmd_bench_he)

    s = sub.add_parser("coordinator", parents=[common, model], help="serve a networked semi-concurrent run")
    s.add_argument("--listen", default="127.0.0.1:7450", help="host:port (port 0 picks a free port)")
    s.add_argument("--k", type=int, help="number of workers")
    s.add_argument("--n-inputs", type=int, help="feature width of the shards")
    s.add_argument("--rounds", type=int)
    s.add_argument("--per-node-epochs", type=int)
    s.add_argument("--task", choices=("classification", "regression"))
    s.add_argument("--seed", type=int)
    s.set_defaults(fn=cmd_coordinator)

    s = sub.add_parser("worker", parents=[common], help="join a coordinator with a local shard")
    s.add_argument("--connect", default="127.0.0.1:7450", help="coordinator host:port")
    s.add_argument("--data", help="shard CSV")
    s.add_argument("--schema")
    s.add_argument("--node-id")
    s.set_defaults(fn=cmd_worker)
    return p


def _normalize(args):
    kind = getattr(args, "synth_kind", None)
    args.synth = None
    if kind:
        if getattr(args, "data", None):
            raise ConfigError("--data and --synth-kind are mutually exclusive")
        args.synth = {"kind": kind, "rows": args.synth_rows or 2000, "seed": args.seed or 0}
    if getattr(args, "orb", None):
        args.orb = list(args.orb)
    if getattr(args, "hidden", None):
        args.hidden = list(args.hidden)
    if getattr(args, "command", None) == "coordinator":
        args.model = args.model or "federated"
    return args


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(_normalize(args))
    except ConfigError as e:
        print(f"fedhe: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"fedhe: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ProtocolError as e:
        print(f"fedhe: protocol error: {e}", file=sys.stderr)
        return EXIT_PROTOCOL
    except FedHEError as e:
        print(f"fedhe: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
