"""MORE-style symmetric homomorphic encryption over floating point numbers.

A plaintext ``m`` is hidden as one eigenvalue of a 2x2 matrix
``C = S diag(m, r) S^-1``, where ``S`` is the secret key and ``r`` a fresh
random value.  Every ciphertext produced under one key shares the same
eigenbasis, so matrix addition and multiplication act slot-wise on
``(m, r)``: the scheme is a noise-free ring homomorphism.  Nonlinear scalar
functions are applied through the 2x2 matrix function ``f(C)``, which the
evaluator computes from the eigenvalues alone without knowledge of ``S``.

The scheme offers no cryptographic security: the eigenvalues of any
ciphertext reveal ``{m, r}`` directly (see :func:`hidden_slots`).

Two representations are provided.  :class:`Ciphertext` wraps a single 2x2
matrix and is what the scalar API (:func:`encrypt`, :func:`cipher_arith`,
:func:`apply_fn`) works with.  :class:`CipherArray` holds an arbitrary
ndarray of ciphertexts as a ``(..., 2, 2)`` float array and is what the
neural network engine uses to train on encrypted data at a usable speed.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import CipherArithmeticError, DataError, KeyGenerationError

__all__ = [
    "RDistribution",
    "KeyGenConfig",
    "SecretKey",
    "Ciphertext",
    "CipherArray",
    "keygen",
    "encrypt",
    "decrypt",
    "encrypt_array",
    "decrypt_array",
    "cipher_arith",
    "plain_arith",
    "apply_fn",
    "hidden_slots",
    "SlotBasis",
    "FUNCTIONS",
    "DEGENERATE_GAP",
]

#: eigenvalue gap below which the first-order matrix-function fallback is used
DEGENERATE_GAP = 1e-8
_MAX_KEYGEN_ATTEMPTS = 1000


# --------------------------------------------------------------------------
# scalar function table
# --------------------------------------------------------------------------

def _sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _sigmoid_grad(x):
    s = _sigmoid(x)
    return s * (1.0 - s)


def _sigmoid_grad2(x):
    s = _sigmoid(x)
    return s * (1.0 - s) * (1.0 - 2.0 * s)


def _softplus(x):
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _tanh_grad(x):
    t = np.tanh(x)
    return 1.0 - t * t


def _tanh_grad2(x):
    t = np.tanh(x)
    return -2.0 * t * (1.0 - t * t)


def _relu(x):
    return np.maximum(np.asarray(x, dtype=float), 0.0)


def _step(x):
    # derivative of relu; 0 at the kink
    return (np.asarray(x, dtype=float) > 0).astype(float)


def _zero(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def _one(x):
    return np.ones_like(np.asarray(x, dtype=float))


def _sqrt(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise CipherArithmeticError("sqrt of a negative value")
    return np.sqrt(x)


def _sqrt_grad(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return 0.5 / np.sqrt(x)


@dataclass(frozen=True)
class _Fn:
    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]
    positive_domain: bool = False


#: named scalar functions usable on ciphertexts, each with its derivative
FUNCTIONS: dict[str, _Fn] = {
    "identity": _Fn(lambda x: np.asarray(x, dtype=float), _one),
    "relu": _Fn(_relu, _step),
    "relu_grad": _Fn(_step, _zero),
    "sigmoid": _Fn(_sigmoid, _sigmoid_grad),
    "sigmoid_grad": _Fn(_sigmoid_grad, _sigmoid_grad2),
    "tanh": _Fn(np.tanh, _tanh_grad),
    "tanh_grad": _Fn(_tanh_grad, _tanh_grad2),
    "softplus": _Fn(_softplus, _sigmoid),
    "sqrt": _Fn(_sqrt, _sqrt_grad, positive_domain=True),
    "exp": _Fn(np.exp, np.exp),
}


def _lookup(name: str) -> _Fn:
    try:
        return FUNCTIONS[name]
    except KeyError:
        raise ValueError(f"unknown function {name!r}; known: {sorted(FUNCTIONS)}") from None


# --------------------------------------------------------------------------
# keys
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RDistribution:
    """Distribution of the randomizing slot value.

    Draws are multiplied by ``m`` when ``scaled`` is set (by ``floor`` for
    ``m == 0``), so the hidden value has the plaintext's sign and magnitude.
    Rounding error after an operation scales with the larger slot, so this
    keeps decryption error relative to ``m``, including for functions such
    as sigmoid whose value is tiny on one side of zero.
    """

    kind: str = "uniform"
    a: float = 0.5
    b: float = 2.0
    scaled: bool = True
    floor: float = 0.1

    def __post_init__(self):
        if self.kind not in ("uniform", "gaussian"):
            raise ValueError(f"unknown r distribution {self.kind!r}")
        if self.kind == "uniform" and not self.a < self.b:
            raise ValueError("uniform r distribution needs a < b")
        if self.kind == "gaussian" and self.b <= 0:
            raise ValueError("gaussian r distribution needs sigma > 0")

    def sample(self, rng: np.random.Generator, m: np.ndarray) -> np.ndarray:
        m = np.asarray(m, dtype=float)
        if self.kind == "uniform":
            u = rng.uniform(self.a, self.b, size=m.shape)
        else:
            u = rng.normal(self.a, self.b, size=m.shape)
        # r must be nonzero; only reachable for distributions straddling 0
        bad = u == 0.0
        while np.any(bad):
            u[bad] = rng.uniform(self.a, self.b, size=int(bad.sum())) if self.kind == "uniform" \
                else rng.normal(self.a, self.b, size=int(bad.sum()))
            bad = u == 0.0
        if self.scaled:
            u = u * np.where(m == 0, self.floor, m)
        return u


@dataclass(frozen=True)
class KeyGenConfig:
    seed: int = 0
    entry_range: tuple[float, float] = (-1.0, 1.0)
    cond_bound: float = 50.0
    r_distribution: RDistribution = field(default_factory=RDistribution)

    def __post_init__(self):
        lo, hi = self.entry_range
        if not lo < hi:
            raise ValueError("entry_range must be a nonempty interval")
        if not self.cond_bound > 1:
            raise ValueError("cond_bound must exceed 1")


@dataclass(frozen=True, eq=False)
class SecretKey:
    s: np.ndarray
    s_inv: np.ndarray
    r_distribution: RDistribution = field(default_factory=RDistribution)

    def __post_init__(self):
        s = np.array(self.s, dtype=float).reshape(2, 2)
        s_inv = np.array(self.s_inv, dtype=float).reshape(2, 2)
        s.setflags(write=False)
        s_inv.setflags(write=False)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "s_inv", s_inv)

    @classmethod
    def from_matrix(cls, s, r_distribution: RDistribution | None = None) -> "SecretKey":
        """Build a key from ``s`` alone (the inverse is computed in closed form)."""
        s = np.asarray(s, dtype=float).reshape(2, 2)
        det = s[0, 0] * s[1, 1] - s[0, 1] * s[1, 0]
        if abs(det) < 1e-6:
            raise KeyGenerationError(f"key matrix is singular (det={det:g})")
        s_inv = np.array([[s[1, 1], -s[0, 1]], [-s[1, 0], s[0, 0]]]) / det
        return cls(s, s_inv, r_distribution or RDistribution())

    def __eq__(self, other):
        if not isinstance(other, SecretKey):
            return NotImplemented
        return np.array_equal(self.s, other.s) and np.array_equal(self.s_inv, other.s_inv)

    __hash__ = None

    # the two rank-one projectors onto the hidden slots
    @property
    def _proj_m(self) -> np.ndarray:
        return np.outer(self.s[:, 0], self.s_inv[0, :])

    @property
    def _proj_r(self) -> np.ndarray:
        return np.outer(self.s[:, 1], self.s_inv[1, :])

    def to_text(self) -> str:
        """Eight numbers, ``s`` then ``s_inv``, row-major, space separated."""
        vals = list(self.s.ravel()) + list(self.s_inv.ravel())
        return " ".join(repr(float(v)) for v in vals)

    @classmethod
    def from_text(cls, text: str, r_distribution: RDistribution | None = None) -> "SecretKey":
        parts = text.split()
        if len(parts) != 8:
            raise DataError(f"key record needs 8 numbers, got {len(parts)}")
        vals = [float(p) for p in parts]
        return cls(np.array(vals[:4]), np.array(vals[4:]), r_distribution or RDistribution())

    def to_bytes(self) -> bytes:
        return struct.pack("<8d", *self.s.ravel(), *self.s_inv.ravel())

    @classmethod
    def from_bytes(cls, data: bytes, r_distribution: RDistribution | None = None) -> "SecretKey":
        if len(data) != 64:
            raise DataError(f"binary key record must be 64 bytes, got {len(data)}")
        vals = struct.unpack("<8d", data)
        return cls(np.array(vals[:4]), np.array(vals[4:]), r_distribution or RDistribution())


def keygen(cfg: KeyGenConfig = KeyGenConfig()) -> SecretKey:
    """Sample a well-conditioned invertible 2x2 key, deterministically from ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    lo, hi = cfg.entry_range
    for _ in range(_MAX_KEYGEN_ATTEMPTS):
        s = rng.uniform(lo, hi, size=(2, 2))
        det = s[0, 0] * s[1, 1] - s[0, 1] * s[1, 0]
        if abs(det) < 1e-6:
            continue
        if np.linalg.cond(s) > cfg.cond_bound:
            continue
        key = SecretKey.from_matrix(s, cfg.r_distribution)
        if np.max(np.abs(key.s @ key.s_inv - np.eye(2))) <= 1e-12:
            return key
    raise KeyGenerationError(
        f"no key with cond <= {cfg.cond_bound} found in {_MAX_KEYGEN_ATTEMPTS} attempts"
    )


# --------------------------------------------------------------------------
# scalar ciphertexts
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Ciphertext:
    c: np.ndarray

    def __post_init__(self):
        c = np.array(self.c, dtype=float).reshape(2, 2)
        c.setflags(write=False)
        object.__setattr__(self, "c", c)

    def __eq__(self, other):
        if not isinstance(other, Ciphertext):
            return NotImplemented
        return np.array_equal(self.c, other.c)

    __hash__ = None

    def __add__(self, other):
        return cipher_arith(self, other, "add")

    def __sub__(self, other):
        return cipher_arith(self, other, "sub")

    def __mul__(self, other):
        return cipher_arith(self, other, "mul")

    def __truediv__(self, other):
        return cipher_arith(self, other, "div")

    def to_bytes(self) -> bytes:
        return struct.pack("<4d", *self.c.ravel())

    @classmethod
    def from_bytes(cls, data: bytes) -> "Ciphertext":
        if len(data) != 32:
            raise DataError(f"ciphertext record must be 32 bytes, got {len(data)}")
        return cls(np.array(struct.unpack("<4d", data)))

    def to_text(self) -> str:
        return " ".join(repr(float(v)) for v in self.c.ravel())

    @classmethod
    def from_text(cls, text: str) -> "Ciphertext":
        parts = text.split()
        if len(parts) != 4:
            raise DataError(f"ciphertext record needs 4 numbers, got {len(parts)}")
        return cls(np.array([float(p) for p in parts]))


def encrypt(key: SecretKey, m: float, rng: np.random.Generator) -> Ciphertext:
    if not np.isfinite(m):
        raise DataError(f"cannot encrypt non-finite value {m!r}")
    return Ciphertext(_encrypt_raw(key, np.asarray(float(m)), rng))


def decrypt(key: SecretKey, c: Ciphertext) -> float:
    return float(_decrypt_raw(key, c.c))


def _encrypt_raw(key: SecretKey, m: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    r = key.r_distribution.sample(rng, m)
    return m[..., None, None] * key._proj_m + r[..., None, None] * key._proj_r


def _decrypt_raw(key: SecretKey, data: np.ndarray) -> np.ndarray:
    # top-left entry of S^-1 C S
    return np.einsum("a,...ab,b->...", key.s_inv[0], data, key.s[:, 0])


def hidden_slots(c: Ciphertext) -> tuple[float, float]:
    """Eigenvalues of a ciphertext, which are exactly its ``{m, r}`` slots.

    Needs no key: this is the scheme's known weakness.
    """
    lam = np.linalg.eigvals(c.c)
    lam = np.real_if_close(lam, tol=1e6)
    return tuple(sorted(float(v) for v in np.real(lam)))


def _inv2x2(data: np.ndarray) -> np.ndarray:
    a, b = data[..., 0, 0], data[..., 0, 1]
    c, d = data[..., 1, 0], data[..., 1, 1]
    det = a * d - b * c
    scale = np.max(np.abs(data), axis=(-2, -1)) ** 2
    if np.any(np.abs(det) <= 1e-14 * scale) or np.any(det == 0):
        raise CipherArithmeticError("division by a ciphertext with a zero hidden slot")
    out = np.empty_like(data)
    out[..., 0, 0] = d / det
    out[..., 0, 1] = -b / det
    out[..., 1, 0] = -c / det
    out[..., 1, 1] = a / det
    return out


def cipher_arith(a: Ciphertext, b: Ciphertext, op: str) -> Ciphertext:
    """Ring operation between two ciphertexts under the same key."""
    if op == "add":
        return Ciphertext(a.c + b.c)
    if op == "sub":
        return Ciphertext(a.c - b.c)
    if op == "mul":
        return Ciphertext(a.c @ b.c)
    if op == "div":
        return Ciphertext(a.c @ _inv2x2(b.c))
    raise ValueError(f"unknown op {op!r}")


def plain_arith(a: Ciphertext, s: float, op: str) -> Ciphertext:
    """Combine a ciphertext with a public constant, which enters as ``s*I``."""
    if not np.isfinite(s):
        raise DataError(f"non-finite constant {s!r}")
    if op == "add_const":
        return Ciphertext(a.c + s * np.eye(2))
    if op == "mul_const":
        return Ciphertext(s * a.c)
    raise ValueError(f"unknown op {op!r}")


def _matrix_function(data: np.ndarray, name: str) -> np.ndarray:
    """``f(C)`` for a stack of 2x2 matrices with real eigenvalues.

    Uses the interpolation form ``f(C) = alpha*I + beta*C`` with ``beta`` the
    divided difference of ``f`` over the two eigenvalues, which equals
    ``V f(D) V^-1`` without forming eigenvectors.  Below
    :data:`DEGENERATE_GAP` the first-order expansion about the mean
    eigenvalue is used instead.
    """
    fn = _lookup(name)
    a, b = data[..., 0, 0], data[..., 0, 1]
    c, d = data[..., 1, 0], data[..., 1, 1]
    mid = 0.5 * (a + d)
    half_diff = 0.5 * (a - d)
    disc = half_diff * half_diff + b * c
    if np.any(disc < -(DEGENERATE_GAP ** 2) * np.maximum(1.0, mid * mid)):
        raise CipherArithmeticError("ciphertext has complex eigenvalues; not well-formed")
    rad = np.sqrt(np.maximum(disc, 0.0))
    lam1 = mid + rad
    lam2 = mid - rad
    gap = lam1 - lam2
    degenerate = gap < DEGENERATE_GAP

    if fn.positive_domain and np.any(lam2 < 0):
        raise CipherArithmeticError(f"{name} undefined on a negative hidden value")

    f1 = fn.f(lam1)
    f2 = fn.f(lam2)
    safe_gap = np.where(degenerate, 1.0, gap)
    beta = np.where(degenerate, 0.0, (f1 - f2) / safe_gap)
    alpha = f1 - beta * lam1
    if np.any(degenerate):
        fm = fn.f(mid[degenerate])
        dfm = fn.df(mid[degenerate])
        beta[degenerate] = dfm
        alpha[degenerate] = fm - dfm * mid[degenerate]

    out = beta[..., None, None] * data
    out[..., 0, 0] += alpha
    out[..., 1, 1] += alpha
    return out


def apply_fn(c: Ciphertext, f: str) -> Ciphertext:
    """Apply the named scalar function to both hidden slots of ``c``."""
    return Ciphertext(_matrix_function(c.c[None], f)[0])


# --------------------------------------------------------------------------
# vectorized ciphertext arrays
# --------------------------------------------------------------------------

def _as_plain(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


class CipherArray:
    """An ndarray of ciphertexts, stored as a float array of shape ``(*shape, 2, 2)``.

    Supports the ring operations needed by the network engine: elementwise
    ``+ - *`` between ciphertexts or with public constants, ``@`` over the
    leading two dimensions, batch sums, transposition, indexing and
    :meth:`apply`.  No operation needs the key.
    """

    __slots__ = ("data",)
    __array_priority__ = 100  # make ndarray <op> CipherArray defer to us

    def __init__(self, data: np.ndarray):
        data = np.asarray(data, dtype=float)
        if data.shape[-2:] != (2, 2):
            raise ValueError(f"trailing dims must be (2, 2), got {data.shape}")
        self.data = data

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape[:-2]

    @property
    def ndim(self) -> int:
        return self.data.ndim - 2

    def __len__(self):
        return self.shape[0]

    def __repr__(self):
        return f"CipherArray(shape={self.shape})"

    def __getitem__(self, idx) -> "CipherArray":
        # basic and fancy indexing on the leading dims; trailing (2, 2) stays whole
        if idx is Ellipsis or (isinstance(idx, tuple) and Ellipsis in idx):
            raise IndexError("Ellipsis indexing is not supported on cipher arrays")
        return CipherArray(self.data[idx])

    def copy(self) -> "CipherArray":
        return CipherArray(self.data.copy())

    @property
    def T(self) -> "CipherArray":
        if self.ndim != 2:
            raise ValueError("transpose is defined for 2-d cipher arrays")
        return CipherArray(np.swapaxes(self.data, 0, 1))

    def reshape(self, *shape) -> "CipherArray":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return CipherArray(self.data.reshape(tuple(shape) + (2, 2)))

    @staticmethod
    def _plain_matrix(p) -> np.ndarray:
        p = _as_plain(p)
        return p[..., None, None] * np.eye(2)

    def __add__(self, other):
        if isinstance(other, CipherArray):
            return CipherArray(self.data + other.data)
        return CipherArray(self.data + self._plain_matrix(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, CipherArray):
            return CipherArray(self.data - other.data)
        return CipherArray(self.data - self._plain_matrix(other))

    def __rsub__(self, other):
        return CipherArray(self._plain_matrix(other) - self.data)

    def __neg__(self):
        return CipherArray(-self.data)

    def __mul__(self, other):
        if isinstance(other, CipherArray):
            return CipherArray(np.matmul(self.data, other.data))
        return CipherArray(_as_plain(other)[..., None, None] * self.data)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, CipherArray):
            return CipherArray(np.matmul(self.data, _inv2x2(other.data)))
        return CipherArray(self.data / _as_plain(other)[..., None, None])

    def __matmul__(self, other):
        if isinstance(other, CipherArray):
            return CipherArray(_cipher_matmul(self.data, other.data))
        # plaintext right operand: p enters as p*I, so it just scales
        return CipherArray(np.einsum("...ikab,kj->...ijab", self.data, _as_plain(other)))

    def __rmatmul__(self, other):
        return CipherArray(np.einsum("ik,...kjab->...ijab", _as_plain(other), self.data))

    def sum(self, axis=None) -> "CipherArray":
        if axis is None:
            axis = tuple(range(self.ndim))
        elif isinstance(axis, int):
            axis = (axis % self.ndim,)
        return CipherArray(self.data.sum(axis=axis))

    def apply(self, name: str) -> "CipherArray":
        flat = self.data.reshape(-1, 2, 2)
        return CipherArray(_matrix_function(flat, name).reshape(self.data.shape))

    @classmethod
    def stack(cls, items: Sequence[Ciphertext]) -> "CipherArray":
        return cls(np.stack([it.c for it in items]))

    def item(self, *idx) -> Ciphertext:
        return Ciphertext(self.data[idx])


def _cipher_matmul(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Matrix product of two 2-d cipher arrays as 8 real matrix products."""
    if x.ndim != 4 or y.ndim != 4:
        raise ValueError("cipher matmul needs 2-d cipher arrays")
    if x.shape[1] != y.shape[0]:
        raise ValueError(f"shape mismatch {x.shape[:2]} @ {y.shape[:2]}")
    out = np.empty((x.shape[0], y.shape[1], 2, 2))
    for i in range(2):
        for k in range(2):
            out[:, :, i, k] = x[:, :, i, 0] @ y[:, :, 0, k] + x[:, :, i, 1] @ y[:, :, 1, k]
    return out


class SlotBasis:
    """Spectral projectors shared by every ciphertext under one key.

    Built from a single reference ciphertext with well-separated hidden
    slots.  Floating point rounding leaves ciphertexts slightly outside the
    key's eigenbasis, and long training runs amplify that drift until
    eigenvalues turn complex; :meth:`pinch` removes it without the key.
    """

    def __init__(self, reference: Ciphertext, min_gap: float = 1e-3):
        k = reference.c
        mid = 0.5 * (k[0, 0] + k[1, 1])
        disc = (0.5 * (k[0, 0] - k[1, 1])) ** 2 + k[0, 1] * k[1, 0]
        if disc <= 0:
            raise CipherArithmeticError("reference ciphertext has no real eigenbasis")
        rad = np.sqrt(disc)
        if 2 * rad < min_gap * max(1.0, abs(mid)):
            raise CipherArithmeticError("reference ciphertext slots are too close")
        p1 = (k - (mid - rad) * np.eye(2)) / (2 * rad)
        self.projectors = (p1, np.eye(2) - p1)

    def pinch(self, arr: "CipherArray") -> "CipherArray":
        p1, p2 = self.projectors
        d = arr.data
        return CipherArray(p1 @ d @ p1 + p2 @ d @ p2)


def encrypt_array(key: SecretKey, values, rng: np.random.Generator) -> CipherArray:
    values = _as_plain(values)
    if not np.all(np.isfinite(values)):
        raise DataError("cannot encrypt non-finite values")
    return CipherArray(_encrypt_raw(key, values, rng))


def decrypt_array(key: SecretKey, arr: CipherArray) -> np.ndarray:
    return _decrypt_raw(key, arr.data)
