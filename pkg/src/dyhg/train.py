"""Training with validation-based model selection, evaluation, ablations and sweeps."""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from itertools import product
from pathlib import Path

import numpy as np

from . import checkpoint
from .data import FeatureBag, Manifest
from .dhcm import VARIANTS, DhcmConfig
from .errors import ConfigError, ManifestError, ShapeError
from .metrics import MetricsReport, compute_metrics
from .model import ModelConfig, ModelParams, adam_step, forward, init_params, loss_and_grads
from .numerics import Rng

log = logging.getLogger(__name__)

LOG_HEADER = ("epoch", "train_loss", "val_acc", "val_bal_acc")


@dataclass
class RunConfig:
    manifest: str
    out: str
    hyperedges: int = 20
    temperature: float = 0.1
    hidden: int = 256
    variant: str = "full"
    epochs: int = 50
    lr: float = 1e-4
    weight_decay: float = 1e-5
    seed: int = 0
    leaky_slope: float = 0.01
    eval_noise: bool = False

    def model_config(self, d: int, num_classes: int) -> ModelConfig:
        return ModelConfig(
            d=d,
            num_classes=num_classes,
            hidden=self.hidden,
            leaky_slope=self.leaky_slope,
            dhcm=DhcmConfig(self.hyperedges, self.temperature, self.variant, self.eval_noise),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls(**json.loads(Path(path).read_text()))


@dataclass
class TrainResult:
    cfg: ModelConfig
    params: ModelParams  # best-validation weights
    best_epoch: int
    log: list[dict]


def _check_dims(bags: list[FeatureBag], d: int, num_classes: int) -> None:
    for b in bags:
        if b.d != d:
            raise ShapeError(f"bag {b.id}", (b.n, b.d), ("N", d))
        if not 0 <= b.label < num_classes:
            raise ConfigError(f"bag {b.id}: label {b.label} outside [0, {num_classes})")


def evaluate(params: ModelParams, cfg: ModelConfig, bags: list[FeatureBag], seed: int = 0) -> MetricsReport:
    pairs = []
    for i, bag in enumerate(bags):
        rng = Rng(seed, (2, i)) if cfg.dhcm.eval_noise else None
        pairs.append((bag.label, forward(bag.features, params, cfg, rng, training=False).label))
    return compute_metrics(pairs, cfg.num_classes)


def fit(
    run: RunConfig,
    train_bags: list[FeatureBag],
    val_bags: list[FeatureBag],
    num_classes: int,
    log_path=None,
) -> TrainResult:
    if not train_bags or not val_bags:
        raise ManifestError("training needs non-empty train and val splits")
    if run.epochs < 1:
        raise ConfigError(f"epochs must be >= 1, got {run.epochs}")
    cfg = run.model_config(train_bags[0].d, num_classes)
    _check_dims(train_bags + val_bags, cfg.d, num_classes)
    params = init_params(cfg, Rng(run.seed, (1,)))
    best, best_score, best_epoch = params.copy(), -1.0, 0
    rows = []
    handle = open(log_path, "w", newline="") if log_path else None
    writer = csv.writer(handle) if handle else None
    if writer:
        writer.writerow(LOG_HEADER)
    try:
        for epoch in range(1, run.epochs + 1):
            order = Rng(run.seed, (3, epoch)).permutation(len(train_bags))
            losses = []
            for step, j in enumerate(order):
                bag = train_bags[j]
                loss, _ = loss_and_grads(
                    bag.features, bag.label, params, cfg, Rng(run.seed, (4, epoch, step)), training=True
                )
                adam_step(params, run.lr, run.weight_decay)
                losses.append(loss)
            report = evaluate(params, cfg, val_bags, run.seed)
            row = {
                "epoch": epoch,
                "train_loss": float(np.mean(losses)),
                "val_acc": report.accuracy,
                "val_bal_acc": report.balanced_accuracy,
            }
            rows.append(row)
            if writer:
                writer.writerow([epoch, f"{row['train_loss']:.8f}", f"{report.accuracy:.6f}",
                                 f"{report.balanced_accuracy:.6f}"])
                handle.flush()
            log.info("epoch %d loss %.4f val_acc %.4f val_bal_acc %.4f", epoch, row["train_loss"],
                     report.accuracy, report.balanced_accuracy)
            if report.balanced_accuracy > best_score:  # ties keep the earlier epoch
                best, best_score, best_epoch = params.copy(), report.balanced_accuracy, epoch
    finally:
        if handle:
            handle.close()
    return TrainResult(cfg, best, best_epoch, rows)


def train_run(run: RunConfig) -> TrainResult:
    """Train from a manifest; writes config.json, train_log.csv and best.ckpt to ``run.out``."""
    manifest = Manifest.read(run.manifest)
    out = Path(run.out)
    out.mkdir(parents=True, exist_ok=True)
    run.save(out / "config.json")
    result = fit(run, manifest.load("train"), manifest.load("val"), manifest.num_classes, out / "train_log.csv")
    checkpoint.save(out / "best.ckpt", result.cfg, result.params)
    (out / "best_epoch.txt").write_text(f"{result.best_epoch}\n")
    return result


def write_metrics_csv(path, report: MetricsReport, extra: dict | None = None) -> None:
    extra = extra or {}
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([*extra, *MetricsReport.FIELDS])
        w.writerow([*extra.values(), *(f"{v:.6f}" for v in report.row().values())])


def eval_checkpoint(ckpt_path, manifest_path, split: str, seed: int = 0) -> MetricsReport:
    cfg, params = checkpoint.load(ckpt_path)
    manifest = Manifest.read(manifest_path)
    bags = manifest.load(split)
    if not bags:
        raise ManifestError(f"split {split!r} is empty")
    _check_dims(bags, cfg.d, cfg.num_classes)
    return evaluate(params, cfg, bags, seed)


# --------------------------------------------------------------------------
# Ablation and sweep
# --------------------------------------------------------------------------

def ablate(run: RunConfig, variants=VARIANTS) -> list[tuple[str, MetricsReport]]:
    """Train every variant on identical data and seed, report test metrics."""
    manifest = Manifest.read(run.manifest)
    train, val, test = (manifest.load(s) for s in ("train", "val", "test"))
    rows = []
    for variant in variants:
        result = fit(replace(run, variant=variant), train, val, manifest.num_classes)
        rows.append((variant, evaluate(result.params, result.cfg, test, run.seed)))
    return rows


def cell_seed(base: int, index: int) -> int:
    return int(np.random.SeedSequence([base & 0xFFFFFFFF, index]).generate_state(1)[0])


def _sweep_cell(args) -> dict:
    run, index, H, tau, manifest_path = args
    manifest = Manifest.read(manifest_path)
    cell = replace(run, hyperedges=H, temperature=tau, seed=cell_seed(run.seed, index))
    result = fit(cell, manifest.load("train"), manifest.load("val"), manifest.num_classes)
    val = max(r["val_bal_acc"] for r in result.log)
    test = evaluate(result.params, result.cfg, manifest.load("test"), cell.seed)
    return {"H": H, "tau": tau, "seed": cell.seed, "best_epoch": result.best_epoch,
            "val_bal_acc": val, "test_bal_acc": test.balanced_accuracy}


def sweep(run: RunConfig, hs, taus, workers: int = 1) -> list[dict]:
    hs, taus = list(hs), list(taus)
    if not hs or not taus:
        raise ConfigError("sweep needs non-empty H and tau lists")
    jobs = [(run, i, H, tau, run.manifest) for i, (H, tau) in enumerate(product(hs, taus))]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_sweep_cell, jobs))
    return [_sweep_cell(j) for j in jobs]
