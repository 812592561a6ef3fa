"""Dynamic hypergraph construction.

Patch embeddings are projected to hyperedge logits, ``ReLU(X @ W1)``, and each
row is turned into a soft hyperedge assignment with a Gumbel-softmax at
temperature ``tau``. Three ablations switch off the noise, the temperature,
or the sampling step entirely.

The static k-NN and k-means constructors are baselines for the
construction-time comparison only; the model never uses them.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import numerics as nx
from .errors import ConfigError, ShapeError
from .numerics import Rng, Var


class Variant(str, Enum):
    FULL = "full"
    NO_GUMBEL = "no_gumbel"
    NO_GUMBEL_NO_TEMP = "no_gumbel_no_temp"
    NO_SAMPLING = "no_sampling"


VARIANTS = tuple(v.value for v in Variant)


@dataclass(frozen=True)
class DhcmConfig:
    num_hyperedges: int = 20
    temperature: float = 0.1
    variant: Variant = Variant.FULL
    eval_noise: bool = False

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.num_hyperedges < 1:
            raise ConfigError(f"num_hyperedges must be >= 1, got {self.num_hyperedges}")
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")

    @property
    def effective_temperature(self) -> float:
        if self.variant is Variant.NO_GUMBEL_NO_TEMP:
            return 1.0
        return self.temperature

    def uses_noise(self, training: bool) -> bool:
        return self.variant is Variant.FULL and (training or self.eval_noise)


@dataclass
class Incidence:
    """N x H patch-to-hyperedge matrix.

    ``form`` is ``"logits"`` for the rectified projection and
    ``"assignment"`` once rows have been softmax-normalized.
    """

    values: Var
    form: str

    @property
    def array(self) -> np.ndarray:
        return self.values.value


def build_logits(x: Var, w1: Var) -> Incidence:
    if x.shape[1] != w1.shape[0]:
        raise ShapeError("build_logits", x.shape, w1.shape)
    return Incidence(nx.relu(nx.matmul(x, w1)), "logits")


def sample_assignment(
    logits: Incidence,
    cfg: DhcmConfig,
    rng: Rng | None,
    training: bool,
    noise: np.ndarray | None = None,
) -> Incidence:
    """Turn rectified logits into per-patch hyperedge distributions.

    ``noise`` overrides the Gumbel draw (same shape as the logits); it is
    only consulted when the variant and mode call for noise. Noise enters
    as a constant, so gradients reach the logits through the softmax alone.
    """
    if not cfg.temperature > 0:
        raise ConfigError(f"temperature must be > 0, got {cfg.temperature}")
    h = logits.values
    if not np.all(np.isfinite(h.value)):
        raise ValueError("sample_assignment: non-finite logits")
    if cfg.variant is Variant.NO_SAMPLING:
        return logits
    if cfg.uses_noise(training):
        if noise is None:
            if rng is None:
                raise ConfigError("Gumbel noise requested but no Rng supplied")
            noise = nx.gumbel_sample(rng, *h.shape)
        noise = np.asarray(noise)
        if noise.shape != h.shape:
            raise ShapeError("sample_assignment noise", h.shape, noise.shape)
        h = nx.add(h, Var(noise.astype(h.value.dtype)))
    tau = cfg.effective_temperature
    if tau != 1.0:
        h = nx.scale(h, 1.0 / tau)
    return Incidence(nx.row_softmax(h), "assignment")


# --------------------------------------------------------------------------
# Static baselines
# --------------------------------------------------------------------------

def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * (a @ b.T)
    return np.maximum(d, 0.0)


def knn_hypergraph(x: np.ndarray, k: int, chunk: int = 1024) -> np.ndarray:
    """Binary N x N incidence; column i holds patch i plus its k nearest patches.

    Distances are exact brute force in float64. Among equidistant
    candidates the lower patch index wins.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k < n:
        raise ConfigError(f"knn_hypergraph needs 1 <= k < N, got k={k}, N={n}")
    inc = np.zeros((n, n), dtype=np.uint8)
    for start in range(0, n, chunk):
        block = _sq_dists(x[start:start + chunk], x)
        rows = np.arange(block.shape[0])
        block[rows, start + rows] = -1.0  # self always first
        kth = np.partition(block, k, axis=1)[:, k:k + 1]
        inside = block < kth
        for r in range(block.shape[0]):
            need = k + 1 - int(inside[r].sum())
            if need:
                ties = np.flatnonzero(block[r] == kth[r, 0])[:need]
                inside[r, ties] = True
        inc[:, start:start + block.shape[0]] = inside.T
    return inc


def kmeans_hypergraph(x: np.ndarray, k: int, iters: int, rng: Rng) -> np.ndarray:
    """Binary N x k membership from Lloyd's algorithm.

    Initial centers are k distinct points picked by ``rng``. A cluster that
    goes empty is re-seeded with the point farthest from its current center.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ConfigError(f"kmeans_hypergraph needs 1 <= k <= N, got k={k}, N={n}")
    centers = x[rng.permutation(n)[:k]].copy()
    labels = None
    for _ in range(max(iters, 1)):
        d = _sq_dists(x, centers)
        new = d.argmin(axis=1)
        counts = np.bincount(new, minlength=k)
        for c in np.flatnonzero(counts == 0):
            far = int(d[np.arange(n), new].argmax())
            new[far] = c
            d[far] = 0.0  # don't hand the same point to two empty clusters
            counts = np.bincount(new, minlength=k)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, x)
        centers = sums / np.bincount(labels, minlength=k)[:, None]
    inc = np.zeros((n, k), dtype=np.uint8)
    inc[np.arange(n), labels] = 1
    return inc


# --------------------------------------------------------------------------
# Timing
# --------------------------------------------------------------------------

METHODS = ("dhcm", "knn", "kmeans")


def _builder(method: str, n: int, d: int, hyperedges: int, knn_k: int, kmeans_iters: int, rng: Rng):
    x = rng.normal((n, d)).astype(np.float32)
    if method == "dhcm":
        bound = np.sqrt(6.0 / (d + hyperedges))
        w1 = Var(rng.uniform((d, hyperedges), -bound, bound).astype(np.float32))
        cfg = DhcmConfig(num_hyperedges=hyperedges, temperature=0.1)
        xv = Var(x)
        return lambda: sample_assignment(build_logits(xv, w1), cfg, rng, training=True)
    if method == "knn":
        return lambda: knn_hypergraph(x, knn_k)
    if method == "kmeans":
        return lambda: kmeans_hypergraph(x, hyperedges, kmeans_iters, rng)
    raise ConfigError(f"unknown construction method {method!r}; choose from {METHODS}")


def time_construction(
    method: str,
    n_list,
    d: int,
    reps: int,
    hyperedges: int = 20,
    knn_k: int = 8,
    kmeans_iters: int = 10,
    seed: int = 0,
) -> list[tuple[int, float]]:
    """Mean wall-clock seconds of graph construction per N (one warm-up run dropped)."""
    if reps < 3:
        raise ConfigError(f"reps must be >= 3, got {reps}")
    table = []
    for i, n in enumerate(n_list):
        build = _builder(method, int(n), d, hyperedges, knn_k, kmeans_iters, Rng(seed, (i,)))
        build()
        times = []
        for _ in range(reps):
            t0 = time.perf_counter()
            build()
            times.append(time.perf_counter() - t0)
        table.append((int(n), float(np.mean(times))))
    return table
