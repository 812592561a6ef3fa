"""DyHG forward pass, loss, initialization and Adam.

Pipeline for one bag X (N x d)::

    logits  = ReLU(X W1)                         (N x H)
    A       = softmax((logits + gumbel) / tau)   (N x H, row-stochastic)
    E       = LeakyReLU(A^T X)                   (H x d)
    X'      = LeakyReLU(A E)                     (N x d)
    Z       = (X + X') / 2
    s_n     = w (tanh(V z_n) * sigmoid(U z_n))
    a       = softmax over the N scores
    h       = sum_n a_n z_n                      (1 x d)
    y_hat   = softmax(h W)                       (1 x C)

No bias terms and no degree normalization anywhere.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .dhcm import DhcmConfig, Incidence, Variant, build_logits, sample_assignment
from .errors import ConfigError, EmptyBagError, ShapeError
from .numerics import Rng, Tape, Var

PARAM_NAMES = ("W1", "V", "U", "w", "W")


@dataclass(frozen=True)
class ModelConfig:
    d: int
    num_classes: int
    hidden: int = 256
    leaky_slope: float = 0.01
    dhcm: DhcmConfig = field(default_factory=DhcmConfig)

    def __post_init__(self):
        for name in ("d", "num_classes", "hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ConfigError(f"leaky_slope must lie in (0, 1), got {self.leaky_slope}")

    @property
    def num_hyperedges(self) -> int:
        return self.dhcm.num_hyperedges

    def shapes(self) -> dict[str, tuple[int, int]]:
        d, H, M, C = self.d, self.num_hyperedges, self.hidden, self.num_classes
        return {"W1": (d, H), "V": (M, d), "U": (M, d), "w": (1, M), "W": (d, C)}


@dataclass
class Param:
    value: np.ndarray
    grad: np.ndarray
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def of(cls, value: np.ndarray) -> "Param":
        z = np.zeros_like(value)
        return cls(value, z.copy(), z.copy(), z)


@dataclass
class ModelParams:
    tensors: dict[str, Param]
    step: int = 0

    def __getitem__(self, name: str) -> Param:
        return self.tensors[name]

    def values(self) -> dict[str, np.ndarray]:
        return {k: p.value for k, p in self.tensors.items()}

    def copy(self) -> "ModelParams":
        return ModelParams(
            {k: Param(p.value.copy(), p.grad.copy(), p.m.copy(), p.v.copy()) for k, p in self.tensors.items()},
            self.step,
        )

    def astype(self, dtype) -> "ModelParams":
        return ModelParams({k: Param.of(p.value.astype(dtype)) for k, p in self.tensors.items()}, self.step)

    @property
    def dtype(self):
        return self.tensors["W1"].value.dtype

    @classmethod
    def from_values(cls, values: dict[str, np.ndarray]) -> "ModelParams":
        missing = set(PARAM_NAMES) - set(values)
        if missing:
            raise ConfigError(f"missing parameter tensors: {sorted(missing)}")
        return cls({k: Param.of(np.asarray(values[k])) for k in PARAM_NAMES})


def init_params(cfg: ModelConfig, rng: Rng, dtype=nx.TRAIN_DTYPE) -> ModelParams:
    """Glorot-uniform weights, zeroed gradient and moment buffers."""
    tensors = {}
    for name, (r, c) in cfg.shapes().items():
        bound = np.sqrt(6.0 / (r + c))
        tensors[name] = Param.of(rng.spawn(PARAM_NAMES.index(name)).uniform((r, c), -bound, bound).astype(dtype))
    return ModelParams(tensors)


# --------------------------------------------------------------------------
# Layers
# --------------------------------------------------------------------------

def hyperedge_features(assignment: Var, x: Var, slope: float) -> Var:
    if assignment.shape[0] != x.shape[0]:
        raise ShapeError("hyperedge_features", assignment.shape, x.shape)
    return nx.leaky_relu(nx.matmul(nx.transpose(assignment), x), slope)


def node_update(assignment: Var, e: Var, slope: float) -> Var:
    if assignment.shape[1] != e.shape[0]:
        raise ShapeError("node_update", assignment.shape, e.shape)
    return nx.leaky_relu(nx.matmul(assignment, e), slope)


def residual_fuse(x: Var, x_new: Var) -> Var:
    return nx.row_mean_pair(x, x_new)


def attention_pool(x: Var, V: Var, U: Var, w: Var) -> tuple[Var, Var]:
    """Gated attention pooling. Returns ``(h, a)`` with h 1 x d and a N x 1."""
    if x.shape[0] == 0:
        raise EmptyBagError("attention_pool: bag has no patches")
    gate = nx.mul(nx.tanh(nx.matmul(x, nx.transpose(V))), nx.sigmoid(nx.matmul(x, nx.transpose(U))))
    scores = nx.matmul(w, nx.transpose(gate))  # 1 x N
    a_row = nx.row_softmax(scores)
    return nx.matmul(a_row, x), nx.transpose(a_row)


def classifier_logits(h: Var, W: Var) -> Var:
    if h.shape[1] != W.shape[0]:
        raise ShapeError("classify", h.shape, W.shape)
    return nx.matmul(h, W)


def classify(h: Var, W: Var) -> Var:
    return nx.row_softmax(classifier_logits(h, W))


# --------------------------------------------------------------------------
# Full pass
# --------------------------------------------------------------------------

@dataclass
class Prediction:
    probs: np.ndarray  # 1 x C
    attention: np.ndarray  # N x 1
    bag_embedding: np.ndarray  # 1 x d
    incidence: Incidence

    @property
    def label(self) -> int:
        return int(np.argmax(self.probs[0]))


@dataclass
class _Graph:
    logits: Var
    attention: Var
    h: Var
    incidence: Incidence


def _run(x: Var, p: dict[str, Var], cfg: ModelConfig, rng, training, noise) -> _Graph:
    if x.shape[0] < 1:
        raise EmptyBagError("bag has no patches")
    if x.shape[1] != cfg.d:
        raise ShapeError("forward", x.shape, (x.shape[0], cfg.d))
    inc = sample_assignment(build_logits(x, p["W1"]), cfg.dhcm, rng, training, noise)
    e = hyperedge_features(inc.values, x, cfg.leaky_slope)
    x_new = node_update(inc.values, e, cfg.leaky_slope)
    z = residual_fuse(x, x_new)
    h, a = attention_pool(z, p["V"], p["U"], p["w"])
    return _Graph(classifier_logits(h, p["W"]), a, h, inc)


def forward(
    features: np.ndarray,
    params: ModelParams,
    cfg: ModelConfig,
    rng: Rng | None = None,
    training: bool = False,
    noise: np.ndarray | None = None,
) -> Prediction:
    """Inference pass (no tape)."""
    dtype = params.dtype
    x = Var(np.asarray(features, dtype=dtype))
    g = _run(x, {k: Var(v) for k, v in params.values().items()}, cfg, rng, training, noise)
    return Prediction(nx.softmax_rows(g.logits.value), g.attention.value, g.h.value, g.incidence)


def loss_and_grads(
    features: np.ndarray,
    label: int,
    params: ModelParams,
    cfg: ModelConfig,
    rng: Rng | None = None,
    training: bool = True,
    noise: np.ndarray | None = None,
) -> tuple[float, Prediction]:
    """Forward with a fresh tape, backward from the cross-entropy loss.

    Writes gradients into ``params[name].grad`` and returns the loss.
    """
    tape = Tape()
    x = Var(np.asarray(features, dtype=params.dtype))
    leaves = {k: tape.leaf(v, k) for k, v in params.values().items()}
    g = _run(x, leaves, cfg, rng, training, noise)
    loss = nx.softmax_cross_entropy(g.logits, label)
    tape.backward(loss)
    for k, leaf in leaves.items():
        params[k].grad = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)
    pred = Prediction(nx.softmax_rows(g.logits.value), g.attention.value, g.h.value, g.incidence)
    return float(loss.value[0, 0]), pred


def adam_step(
    params: ModelParams,
    lr: float = 1e-4,
    weight_decay: float = 1e-5,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One Adam update with bias correction and coupled L2 decay (g += wd * theta)."""
    params.step += 1
    t = params.step
    c1 = 1 - beta1**t
    c2 = 1 - beta2**t
    for p in params.tensors.values():
        g = p.grad + weight_decay * p.value if weight_decay else p.grad
        p.m = beta1 * p.m + (1 - beta1) * g
        p.v = beta2 * p.v + (1 - beta2) * g * g
        update = lr * (p.m / c1) / (np.sqrt(p.v / c2) + eps)
        p.value = (p.value - update).astype(p.value.dtype)
        p.m = p.m.astype(p.value.dtype)
        p.v = p.v.astype(p.value.dtype)

