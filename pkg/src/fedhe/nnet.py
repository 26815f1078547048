"""Multilayer perceptron engine shared by plaintext, encrypted and federated training.

All computation goes through a handful of ring operations (``+``, ``-``,
``*``, ``@``, batch sums, scaling by public constants) plus named scalar
functions.  Those are supplied either by numpy arrays or by
:class:`~fedhe.hecore.CipherArray`, so the same code path trains on
plaintext and on MORE ciphertexts, in the same order of operations.
There are no comparisons on values anywhere in the forward or backward pass.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import hecore
from .errors import ConfigError, DataError, UnsupportedConfigurationError
from .hecore import CipherArray, SecretKey

__all__ = [
    "MlpSpec",
    "TrainConfig",
    "Weights",
    "init_weights",
    "forward",
    "loss_value",
    "gradients",
    "train",
    "grad_check",
    "encrypt_weights",
    "decrypt_weights",
    "train_encrypted",
]

_HIDDEN = ("relu", "tanh")
_OUTPUT = ("sigmoid", "linear")
_LOSSES = ("cross_entropy", "mse")


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple[int, ...]
    hidden_activation: str = "relu"
    output_activation: str = "sigmoid"
    loss: str = "cross_entropy"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ConfigError("an MLP needs at least an input and an output layer")
        if any(s < 1 for s in sizes):
            raise ConfigError(f"layer sizes must be positive, got {sizes}")
        if self.hidden_activation not in _HIDDEN:
            raise ConfigError(f"hidden_activation must be one of {_HIDDEN}")
        if self.output_activation not in _OUTPUT:
            raise ConfigError(f"output_activation must be one of {_OUTPUT}")
        if self.loss not in _LOSSES:
            raise ConfigError(f"loss must be one of {_LOSSES}")

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @classmethod
    def classifier(cls, n_inputs: int, hidden: Sequence[int] = (64, 32, 16)) -> "MlpSpec":
        """Binary classifier: ReLU hidden layers, sigmoid output, cross-entropy."""
        return cls((n_inputs, *hidden, 1), "relu", "sigmoid", "cross_entropy")

    @classmethod
    def regressor(cls, n_inputs: int, hidden: Sequence[int] = (100,) * 5) -> "MlpSpec":
        """Regressor: tanh hidden layers, linear output, MSE."""
        return cls((n_inputs, *hidden, 1), "tanh", "linear", "mse")

    @classmethod
    def federated_regressor(cls, n_inputs: int) -> "MlpSpec":
        return cls.regressor(n_inputs, hidden=(40,) * 10)

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "hidden_activation": self.hidden_activation,
            "output_activation": self.output_activation,
            "loss": self.loss,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        return cls(tuple(d["layer_sizes"]), d.get("hidden_activation", "relu"),
                   d.get("output_activation", "sigmoid"), d.get("loss", "cross_entropy"))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 128
    epochs: int = 300
    optimizer: str = "sgd"
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")

    def to_dict(self) -> dict:
        return {"learning_rate": self.learning_rate, "batch_size": self.batch_size,
                "epochs": self.epochs, "optimizer": self.optimizer, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**{k: d[k] for k in ("learning_rate", "batch_size", "epochs", "optimizer", "seed") if k in d})


class Weights:
    """Per-layer ``(W, b)`` pairs; ``W`` has shape ``(fan_in, fan_out)``.

    Entries are either float ndarrays or cipher arrays.  Instances are
    treated as values: training and averaging always build new objects.
    """

    __slots__ = ("layers",)

    def __init__(self, layers):
        self.layers = [(w, b) for w, b in layers]

    @property
    def encrypted(self) -> bool:
        return isinstance(self.layers[0][0], CipherArray)

    @property
    def shapes(self) -> list[tuple[int, ...]]:
        out = []
        for w, b in self.layers:
            out.append(tuple(w.shape))
            out.append(tuple(b.shape))
        return out

    def arrays(self) -> list:
        return [a for pair in self.layers for a in pair]

    @classmethod
    def from_arrays(cls, arrays) -> "Weights":
        arrays = list(arrays)
        if len(arrays) % 2:
            raise DataError("weights need an even number of arrays (W, b per layer)")
        return cls(zip(arrays[0::2], arrays[1::2]))

    def flat(self) -> np.ndarray:
        self._require_plain()
        return np.concatenate([np.ravel(a) for a in self.arrays()])

    @classmethod
    def from_flat(cls, shapes, flat) -> "Weights":
        flat = np.asarray(flat, dtype=float)
        arrays, pos = [], 0
        for shape in shapes:
            size = int(np.prod(shape)) if len(shape) else 1
            arrays.append(flat[pos:pos + size].reshape(shape).copy())
            pos += size
        if pos != flat.size:
            raise DataError(f"flat weight vector has {flat.size} values, shapes need {pos}")
        return cls.from_arrays(arrays)

    def copy(self) -> "Weights":
        return Weights((w.copy(), b.copy()) for w, b in self.layers)

    def equal(self, other: "Weights") -> bool:
        """Bit-exact equality of plaintext weights."""
        return self.shapes == other.shapes and np.array_equal(self.flat(), other.flat())

    def check(self, spec: MlpSpec):
        sizes = spec.layer_sizes
        expected = []
        for fi, fo in zip(sizes[:-1], sizes[1:]):
            expected += [(fi, fo), (fo,)]
        if self.shapes != expected:
            raise DataError(f"weight shapes {self.shapes} do not match spec {expected}")
        if not self.encrypted and not np.all(np.isfinite(self.flat())):
            raise DataError("weights contain non-finite entries")

    def _require_plain(self):
        if self.encrypted:
            raise DataError("operation needs plaintext weights")

    # -- serialization ----------------------------------------------------

    def to_text(self) -> str:
        header = " ".join("x".join(str(d) for d in s) for s in self.shapes)
        lines = ["fedhe-weights 1", f"shapes {header}"]
        lines += [repr(float(v)) for v in self.flat()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Weights":
        lines = text.strip().splitlines()
        if len(lines) < 2 or lines[0].strip() != "fedhe-weights 1" or not lines[1].startswith("shapes"):
            raise DataError("not a weights text record")
        shapes = [tuple(int(d) for d in tok.split("x")) for tok in lines[1].split()[1:]]
        return cls.from_flat(shapes, [float(v) for v in lines[2:]])

    def to_bytes(self) -> bytes:
        parts = [b"FHW1", struct.pack("<I", len(self.shapes))]
        for s in self.shapes:
            parts.append(struct.pack("<I", len(s)) + struct.pack(f"<{len(s)}I", *s))
        flat = self.flat()
        parts.append(flat.astype("<f8").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Weights":
        if data[:4] != b"FHW1":
            raise DataError("not a binary weights record")
        (count,), pos = struct.unpack_from("<I", data, 4), 8
        shapes = []
        for _ in range(count):
            (nd,) = struct.unpack_from("<I", data, pos)
            pos += 4
            shapes.append(tuple(struct.unpack_from(f"<{nd}I", data, pos)))
            pos += 4 * nd
        return cls.from_flat(shapes, np.frombuffer(data[pos:], dtype="<f8"))


def init_weights(spec: MlpSpec, seed: int) -> Weights:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append((rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out)))
    return Weights(layers)


# --------------------------------------------------------------------------
# ring-generic primitives
# --------------------------------------------------------------------------

def _apply(x, name: str):
    if isinstance(x, CipherArray):
        return x.apply(name)
    return hecore.FUNCTIONS[name].f(x)


def _activation(spec: MlpSpec, layer: int, n_layers: int) -> str:
    if layer == n_layers - 1:
        return "identity" if spec.output_activation == "linear" else "sigmoid"
    return spec.hidden_activation


def _forward_cache(spec: MlpSpec, weights: Weights, x):
    if x.shape[-1] != spec.n_inputs:
        raise DataError(f"batch width {x.shape[-1]} != input size {spec.n_inputs}")
    n_layers = len(weights.layers)
    acts, pre = [x], []
    a = x
    for i, (w, b) in enumerate(weights.layers):
        z = a @ w + b
        pre.append(z)
        a = _apply(z, _activation(spec, i, n_layers))
        acts.append(a)
    return pre, acts


def forward(spec: MlpSpec, weights: Weights, batch):
    """Predictions of shape ``(n, 1)``; sigmoid probabilities or linear outputs."""
    return _forward_cache(spec, weights, batch)[1][-1]


def _as_column(y):
    if isinstance(y, CipherArray):
        return y if y.ndim == 2 else y.reshape(y.shape[0], 1)
    y = np.asarray(y, dtype=float)
    return y.reshape(-1, 1)


def _batch_loss_sum(spec: MlpSpec, z_out, out, y):
    """Sum over the batch of per-sample loss (not yet divided by n)."""
    if spec.loss == "cross_entropy":
        if spec.output_activation == "sigmoid":
            # from logits: softplus(z) - y z; finite for any z
            per = _apply(z_out, "softplus") - y * z_out
        else:
            raise UnsupportedConfigurationError("cross_entropy needs a sigmoid output")
    else:
        diff = out - y
        per = diff * diff
    return per.sum(axis=0)


def loss_value(spec: MlpSpec, weights: Weights, x, y):
    """Mean loss over a batch; a scalar for plaintext, a ciphertext otherwise."""
    y = _as_column(y)
    pre, acts = _forward_cache(spec, weights, x)
    total = _batch_loss_sum(spec, pre[-1], acts[-1], y)
    n = x.shape[0]
    if isinstance(total, CipherArray):
        return total.reshape(()) * (1.0 / n)
    return float(total[0] * (1.0 / n))


def _output_delta(spec: MlpSpec, z_out, out, y, n: int):
    if spec.loss == "cross_entropy":
        return (out - y) * (1.0 / n)
    # mse
    g = (out - y) * (2.0 / n)
    if spec.output_activation == "sigmoid":
        g = g * _apply(z_out, "sigmoid_grad")
    return g


def gradients(spec: MlpSpec, weights: Weights, x, y, _cache=None):
    """Backpropagated gradients of the mean batch loss, as a :class:`Weights`."""
    y = _as_column(y)
    pre, acts = _cache if _cache is not None else _forward_cache(spec, weights, x)
    n = x.shape[0]
    grad_name = f"{spec.hidden_activation}_grad"
    dz = _output_delta(spec, pre[-1], acts[-1], y, n)
    grads = [None] * len(weights.layers)
    for i in range(len(weights.layers) - 1, -1, -1):
        w, _ = weights.layers[i]
        grads[i] = (acts[i].T @ dz, dz.sum(axis=0))
        if i > 0:
            dz = (dz @ w.T) * _apply(pre[i - 1], grad_name)
    return Weights(grads)


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------

class _Adam:
    def __init__(self, weights: Weights, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(a) for a in weights.arrays()]
        self.v = [np.zeros_like(a) for a in weights.arrays()]
        self.t = 0

    def step(self, weights: Weights, grads: Weights) -> Weights:
        self.t += 1
        out = []
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for j, (p, g) in enumerate(zip(weights.arrays(), grads.arrays())):
            self.m[j] = self.b1 * self.m[j] + (1.0 - self.b1) * g
            self.v[j] = self.b2 * self.v[j] + (1.0 - self.b2) * (g * g)
            m_hat = self.m[j] / c1
            v_hat = self.v[j] / c2
            out.append(p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return Weights.from_arrays(out)


def _sgd_step(weights: Weights, grads: Weights, lr: float) -> Weights:
    return Weights.from_arrays(p - g * lr for p, g in zip(weights.arrays(), grads.arrays()))


def _unpack(data):
    if hasattr(data, "xy"):
        return data.xy()
    x, y = data
    return x, y


def _shuffle_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng((int(seed), 1))


def train(spec: MlpSpec, data, cfg: TrainConfig, init: Weights | None = None,
          basis: hecore.SlotBasis | None = None):
    """Mini-batch training; returns ``(weights, per_epoch_mean_loss)``.

    ``data`` is a table (anything with ``xy()``) or an ``(X, y)`` pair of either
    ndarrays or cipher arrays.  The batch order depends only on ``cfg.seed``.
    For encrypted data the loss history is a cipher array of shape ``(epochs,)``.
    """
    x, y = _unpack(data)
    y = _as_column(y)
    encrypted = isinstance(x, CipherArray)
    if encrypted and cfg.optimizer != "sgd":
        raise UnsupportedConfigurationError("encrypted training supports only the sgd optimizer")
    if spec.loss == "cross_entropy" and spec.output_activation != "sigmoid":
        raise UnsupportedConfigurationError("cross_entropy needs a sigmoid output")
    n = x.shape[0]
    if n == 0:
        raise DataError("cannot train on an empty dataset")
    if y.shape[0] != n:
        raise DataError(f"{n} rows but {y.shape[0]} targets")

    weights = init_weights(spec, cfg.seed) if init is None else init
    weights.check(spec)
    if encrypted != weights.encrypted:
        raise DataError("weights and data must both be plaintext or both be encrypted")

    rng = _shuffle_rng(cfg.seed)
    adam = _Adam(weights, cfg.learning_rate) if cfg.optimizer == "adam" else None
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = None
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = x[idx], y[idx]
            cache = _forward_cache(spec, weights, xb)
            bl = _batch_loss_sum(spec, cache[0][-1], cache[1][-1], yb)
            epoch_loss = bl if epoch_loss is None else epoch_loss + bl
            grads = gradients(spec, weights, xb, yb, _cache=cache)
            if adam is not None:
                weights = adam.step(weights, grads)
            else:
                weights = _sgd_step(weights, grads, cfg.learning_rate)
                if basis is not None:
                    weights = Weights.from_arrays(basis.pinch(a) for a in weights.arrays())
        history.append(epoch_loss * (1.0 / n))
    if encrypted:
        hist = CipherArray(np.stack([h.data for h in history])) if history \
            else CipherArray(np.zeros((0, 2, 2)))
        return weights, hist.reshape(len(history))
    return weights, [float(h[0]) for h in history]


def grad_check(spec: MlpSpec, weights: Weights, x, y, epsilon: float = 1e-5) -> float:
    """Max relative error between backprop and central finite differences."""
    x = np.asarray(x, dtype=float)
    y = _as_column(y)
    analytic = gradients(spec, weights, x, y).flat()
    base = weights.flat()
    shapes = weights.shapes
    numeric = np.empty_like(base)
    for j in range(base.size):
        plus = base.copy()
        plus[j] += epsilon
        minus = base.copy()
        minus[j] -= epsilon
        lp = loss_value(spec, Weights.from_flat(shapes, plus), x, y)
        lm = loss_value(spec, Weights.from_flat(shapes, minus), x, y)
        numeric[j] = (lp - lm) / (2.0 * epsilon)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


# --------------------------------------------------------------------------
# encrypted helpers
# --------------------------------------------------------------------------

def encrypt_weights(weights: Weights, key: SecretKey, rng: np.random.Generator) -> Weights:
    return Weights.from_arrays(hecore.encrypt_array(key, a, rng) for a in weights.arrays())


def decrypt_weights(weights: Weights, key: SecretKey) -> Weights:
    return Weights.from_arrays(hecore.decrypt_array(key, a) for a in weights.arrays())


def train_encrypted(spec: MlpSpec, x, y, cfg: TrainConfig, key: SecretKey,
                    rng: np.random.Generator, init: Weights | None = None,
                    stabilize: bool = True):
    """Encrypt weights, features and targets, then train on ciphertexts.

    Returns the *encrypted* trained weights and loss history; the caller
    holding ``key`` decrypts them.  With ``stabilize`` the evaluator also
    receives an encryption of zero and uses its eigenbasis to pinch the
    weights after every step (see :class:`~fedhe.hecore.SlotBasis`).
    """
    if cfg.optimizer != "sgd":
        raise UnsupportedConfigurationError("encrypted training supports only the sgd optimizer")
    plain_init = init_weights(spec, cfg.seed) if init is None else init
    enc_w = encrypt_weights(plain_init, key, rng)
    ex = hecore.encrypt_array(key, x, rng)
    ey = hecore.encrypt_array(key, _as_column(y), rng)
    basis = hecore.SlotBasis(hecore.encrypt(key, 0.0, rng)) if stabilize else None
    return train(spec, (ex, ey), cfg, init=enc_w, basis=basis)
