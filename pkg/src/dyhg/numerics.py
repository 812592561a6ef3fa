"""Dense matrix primitives with a small reverse-mode tape.

Matrices are 2-D numpy arrays. Training and inference run in float32; the
gradient checker runs everything in float64. Only the operations the DyHG
pipeline needs are provided, each with a hand-written vector-Jacobian product.

Determinism: every primitive is a pure numpy expression with a fixed
reduction order for a fixed BLAS thread count, so identical inputs give
bit-identical outputs. ``DYHG_THREADS`` (read by the CLI) pins that count.
"""
from __future__ import annotations

from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, GradCheckError, ShapeError

TRAIN_DTYPE = np.float32
CHECK_DTYPE = np.float64

GUMBEL_EPS = 1e-12
PROB_FLOOR = 1e-12


# --------------------------------------------------------------------------
# Random numbers
# --------------------------------------------------------------------------

class Rng:
    """Seeded generator built on the PCG64 bit stream.

    The raw 64-bit PCG64 output is stable across numpy releases and
    platforms; the conversion to floats is done here rather than through
    ``numpy.random.Generator`` (whose float streams carry no compatibility
    guarantee). A uniform double takes the top 53 bits of one raw word;
    normals use the cosine branch of Box-Muller on two uniforms.

    ``stream`` keys give independent child generators for the same seed.
    """

    def __init__(self, seed: int, stream: Sequence[int] = ()):
        self.seed = int(seed)
        self.stream = tuple(int(s) for s in stream)
        entropy = [self.seed & 0xFFFFFFFFFFFFFFFF, *self.stream]
        self._bits = np.random.PCG64(np.random.SeedSequence(entropy))

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, stream={self.stream})"

    def spawn(self, *key: int) -> "Rng":
        return Rng(self.seed, self.stream + tuple(key))

    def raw(self, n: int) -> np.ndarray:
        return self._bits.random_raw(n)

    def uniform(self, shape, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64))
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return (low + (high - low) * u).reshape(shape)

    def normal(self, shape) -> np.ndarray:
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64))
        u = self.uniform(2 * n)
        r = np.sqrt(-2.0 * np.log1p(-u[:n]))  # 1 - u in (0, 1]
        return (r * np.cos(2.0 * np.pi * u[n:])).reshape(shape)

    def integers(self, high: int, size=None):
        """Uniform integers in ``[0, high)``."""
        if high < 1:
            raise ConfigError(f"integers: high must be >= 1, got {high}")
        n = 1 if size is None else size
        out = np.minimum((self.uniform(n) * high).astype(np.int64), high - 1)
        return int(out[0]) if size is None else out

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uniform(n), kind="stable")


# --------------------------------------------------------------------------
# Tape
# --------------------------------------------------------------------------

class Var:
    """A matrix value, optionally tracked by a tape."""

    __slots__ = ("value", "grad", "tape", "name")

    def __init__(self, value, tape: "Tape | None" = None, name: str | None = None):
        value = np.asarray(value)
        if value.ndim != 2:
            raise ShapeError("Var", value.shape)
        self.value = value
        self.grad: np.ndarray | None = None
        self.tape = tape
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def __repr__(self) -> str:
        tag = f" {self.name}" if self.name else ""
        return f"<Var{tag} {self.shape[0]}x{self.shape[1]} {self.value.dtype}>"


class Tape:
    """Ordered record of primitive applications for one backward pass."""

    def __init__(self):
        self.ops: list[tuple[Var, tuple[Var, ...], Callable]] = []
        self._done = False

    def leaf(self, value, name: str | None = None) -> Var:
        return Var(value, self, name)

    def record(self, value: np.ndarray, inputs: tuple[Var, ...], vjp: Callable) -> Var:
        out = Var(value, self)
        self.ops.append((out, inputs, vjp))
        return out

    def backward(self, out: Var, seed: np.ndarray | None = None) -> None:
        """Propagate ``seed`` (default ones) from ``out`` back to every tracked Var.

        Each recorded op is visited once, newest first. A tape can only be
        replayed once.
        """
        if self._done:
            raise RuntimeError("tape already replayed")
        if out.tape is not self:
            raise ValueError("output was not recorded on this tape")
        self._done = True
        out.grad = np.ones_like(out.value) if seed is None else np.asarray(seed, out.value.dtype)
        for node, inputs, vjp in reversed(self.ops):
            if node.grad is None:
                continue
            grads = vjp(node.grad)
            for var, g in zip(inputs, grads):
                if g is None or var.tape is not self:
                    continue
                var.grad = g if var.grad is None else var.grad + g


def _tape_of(*vs: Var) -> Tape | None:
    for v in vs:
        if v.tape is not None:
            return v.tape
    return None


def _emit(value: np.ndarray, inputs: tuple[Var, ...], vjp: Callable) -> Var:
    tape = _tape_of(*inputs)
    if tape is None:
        return Var(value)
    return tape.record(value, inputs, vjp)


def _same_shape(op: str, a: Var, b: Var) -> None:
    if a.shape != b.shape:
        raise ShapeError(op, a.shape, b.shape)


# --------------------------------------------------------------------------
# Primitives
# --------------------------------------------------------------------------

def matmul(a: Var, b: Var) -> Var:
    if a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    av, bv = a.value, b.value
    return _emit(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def transpose(a: Var) -> Var:
    return _emit(a.value.T.copy(), (a,), lambda g: (g.T,))


def add(a: Var, b: Var) -> Var:
    _same_shape("add", a, b)
    return _emit(a.value + b.value, (a, b), lambda g: (g, g))


def scale(a: Var, c: float) -> Var:
    c = a.value.dtype.type(c)
    return _emit(a.value * c, (a,), lambda g: (g * c,))


def mul(a: Var, b: Var) -> Var:
    """Elementwise (Hadamard) product."""
    _same_shape("mul", a, b)
    av, bv = a.value, b.value
    return _emit(av * bv, (a, b), lambda g: (g * bv, g * av))


def row_mean_pair(a: Var, b: Var) -> Var:
    _same_shape("row_mean_pair", a, b)
    half = a.value.dtype.type(0.5)
    return _emit(half * (a.value + b.value), (a, b), lambda g: (half * g, half * g))


def relu(a: Var) -> Var:
    mask = a.value > 0  # gradient at exactly 0 is 0
    return _emit(np.where(mask, a.value, 0).astype(a.value.dtype), (a,), lambda g: (g * mask,))


def leaky_relu(a: Var, slope: float = 0.01) -> Var:
    if not 0.0 < slope < 1.0:
        raise ConfigError(f"leaky_relu slope must lie in (0, 1), got {slope}")
    s = a.value.dtype.type(slope)
    factor = np.where(a.value > 0, a.value.dtype.type(1), s)
    out = np.where(a.value >= 0, a.value, s * a.value)
    return _emit(out, (a,), lambda g: (g * factor,))


def tanh(a: Var) -> Var:
    y = np.tanh(a.value)
    return _emit(y, (a,), lambda g: (g * (1 - y * y),))


def sigmoid(a: Var) -> Var:
    x = a.value
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1 / (1 + e), e / (1 + e)).astype(x.dtype)
    return _emit(y, (a,), lambda g: (g * y * (1 - y),))


def softmax_rows(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - x.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def row_softmax(a: Var) -> Var:
    y = softmax_rows(a.value)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return _emit(y, (a,), vjp)


def softmax_cross_entropy(logits: Var, label: int) -> Var:
    """Fused ``-ln softmax(logits)[label]`` for a single 1xC row.

    The probability is floored at 1e-12 before the log; the gradient is
    always ``softmax - onehot``.
    """
    if logits.shape[0] != 1:
        raise ShapeError("softmax_cross_entropy", logits.shape, (1, "C"))
    C = logits.shape[1]
    if not 0 <= label < C:
        raise ConfigError(f"label {label} outside [0, {C})")
    p = softmax_rows(logits.value)
    loss = -np.log(np.maximum(p[0, label], PROB_FLOOR))
    target = np.zeros_like(p)
    target[0, label] = 1

    def vjp(g):
        return (g[0, 0] * (p - target),)

    return _emit(np.array([[loss]], dtype=logits.value.dtype), (logits,), vjp)


def cross_entropy(probs: np.ndarray, label: int) -> float:
    probs = np.asarray(probs)
    if not 0 <= label < probs.shape[-1]:
        raise ConfigError(f"label {label} outside [0, {probs.shape[-1]})")
    return float(-np.log(max(float(probs.reshape(-1)[label]), PROB_FLOOR)))


# --------------------------------------------------------------------------
# Gumbel noise
# --------------------------------------------------------------------------

def gumbel_from_uniform(u: np.ndarray) -> np.ndarray:
    u = np.clip(np.asarray(u, dtype=np.float64), GUMBEL_EPS, 1 - GUMBEL_EPS)
    return -np.log(-np.log(u))


def gumbel_sample(rng: Rng, rows: int, cols: int) -> np.ndarray:
    """Standard Gumbel(0, 1) draws, float64. Used as constants (no gradient)."""
    if rows < 1 or cols < 1:
        raise ConfigError(f"gumbel_sample needs rows, cols >= 1, got {rows}x{cols}")
    u = GUMBEL_EPS + (1 - 2 * GUMBEL_EPS) * rng.uniform((rows, cols))
    return gumbel_from_uniform(u)


# --------------------------------------------------------------------------
# Finite-difference gradient check
# --------------------------------------------------------------------------

def relative_error(a, n) -> np.ndarray:
    a, n = np.asarray(a, dtype=np.float64), np.asarray(n, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)


def grad_check(
    f: Callable[[Mapping[str, np.ndarray]], tuple[float, Mapping[str, np.ndarray]]],
    params: Mapping[str, np.ndarray],
    step: float = 1e-5,
    names: Iterable[str] | None = None,
) -> float:
    """Max relative error between ``f``'s analytic gradient and central differences.

    ``f(params)`` returns ``(loss, grads)`` with ``grads`` keyed like
    ``params``. Every coordinate of every named tensor is probed.
    """
    if step <= 0:
        raise ConfigError(f"step must be positive, got {step}")
    base = {k: np.array(v, dtype=CHECK_DTYPE) for k, v in params.items()}
    _, grads = f(base)
    worst = 0.0
    for name in names if names is not None else base:
        theta = base[name]
        analytic = np.asarray(grads[name], dtype=CHECK_DTYPE)
        numeric = np.empty_like(theta)
        for idx in np.ndindex(theta.shape):
            orig = theta[idx]
            theta[idx] = orig + step
            hi = float(f(base)[0])
            theta[idx] = orig - step
            lo = float(f(base)[0])
            theta[idx] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise GradCheckError(name, idx, hi if not np.isfinite(hi) else lo)
            numeric[idx] = (hi - lo) / (2 * step)
        if theta.size:
            worst = max(worst, float(relative_error(analytic, numeric).max()))
    return worst
