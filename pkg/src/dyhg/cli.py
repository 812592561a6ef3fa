"""Command-line entry point: ``dyhg <subcommand> ...`` or ``python -m dyhg``."""
from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import checkpoint
from .data import SyntheticSpec, generate_synthetic, read_bag
from .dhcm import METHODS, VARIANTS, time_construction
from .errors import DyHGError
from .metrics import MetricsReport
from .model import forward
from .train import RunConfig, ablate, eval_checkpoint, sweep, train_run, write_metrics_csv

log = logging.getLogger("dyhg")

SWEEP_H_GRID = (8, 12, 16, 20, 24, 28)
SWEEP_TAU_GRID = (0.01, 0.05, 0.1, 0.15, 0.2, 0.25)


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _add_run_flags(p: argparse.ArgumentParser, epochs: int = 50) -> None:
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--hyperedges", type=int, default=20)
    p.add_argument("--temperature", type=float, default=0.1)
    p.add_argument("--variant", choices=VARIANTS, default="full")
    p.add_argument("--hidden", type=int, default=256, help="attention hidden size M")
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--weight-decay", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eval-noise", action="store_true", help="keep Gumbel noise at evaluation")


def _run_config(args) -> RunConfig:
    return RunConfig(
        manifest=args.manifest, out=args.out, hyperedges=args.hyperedges,
        temperature=args.temperature, hidden=args.hidden, variant=args.variant,
        epochs=args.epochs, lr=args.lr, weight_decay=args.weight_decay,
        seed=args.seed, eval_noise=args.eval_noise,
    )


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------

def cmd_generate(args) -> int:
    spec = SyntheticSpec(
        classes=args.classes, bags_per_class=args.bags_per_class, n_min=args.n_min,
        n_max=args.n_max, d=args.dim, prototypes=args.prototypes, noise=args.noise, seed=args.seed,
    )
    manifest, certificate = generate_synthetic(spec, args.out)
    for c, name in enumerate(manifest.classes):
        counts = {s: sum(e.label == c for e in manifest.split(s)) for s in ("train", "val", "test")}
        print(f"{name}: {sum(counts.values())} bags (train {counts['train']}, val {counts['val']}, test {counts['test']})")
    digest = hashlib.sha256((Path(args.out) / "manifest.tsv").read_bytes()).hexdigest()
    print(f"total: {len(manifest.entries)} bags, {manifest.num_classes} classes")
    print(f"oracle decoder accuracy: {certificate:.4f}")
    print(f"manifest sha256: {digest}")
    return 0


def cmd_train(args) -> int:
    result = train_run(_run_config(args))
    best = result.log[result.best_epoch - 1]
    print(f"best epoch {result.best_epoch}: val_bal_acc {best['val_bal_acc']:.4f}")
    print(f"checkpoint: {Path(args.out) / 'best.ckpt'}")
    return 0


def _print_report(report: MetricsReport, prefix: str = "") -> None:
    print(prefix + "  ".join(f"{k}={v:.4f}" for k, v in report.row().items()))


def cmd_eval(args) -> int:
    report = eval_checkpoint(args.checkpoint, args.manifest, args.split, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out / f"metrics_{args.split}.csv", report, {"split": args.split})
    _print_report(report, f"{args.split}: ")
    print("confusion (rows=truth):")
    for row in report.confusion:
        print("  " + " ".join(f"{v:4d}" for v in row))
    return 0


def cmd_ablate(args) -> int:
    run = _run_config(args)
    rows = ablate(run)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "ablation.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["variant", *MetricsReport.FIELDS])
        for variant, report in rows:
            w.writerow([variant, *(f"{v:.6f}" for v in report.row().values())])
    for variant, report in rows:
        _print_report(report, f"{variant:>18}: ")
    bal = {v: r.balanced_accuracy for v, r in rows}
    ranking = sorted(bal, key=lambda v: -bal[v])
    print("ranking by balanced accuracy: " + " > ".join(ranking))
    above = bal["no_sampling"] > max(bal["no_gumbel"], bal["no_gumbel_no_temp"])
    print(f"no_sampling above both no_gumbel variants: {'yes' if above else 'no'}")
    return 0


def cmd_sweep(args) -> int:
    run = _run_config(args)
    rows = sweep(run, args.h_list, args.tau_list, args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    keys = list(rows[0])
    with open(out / "sweep.csv", "w", newline="") as f:
        w = csv.DictWriter(f, keys)
        w.writeheader()
        w.writerows(rows)
    top = max(rows, key=lambda r: (r["test_bal_acc"], -rows.index(r)))
    print(f"{len(rows)} cells written to {out / 'sweep.csv'}")
    print(f"best: H={top['H']} tau={top['tau']} test_bal_acc={top['test_bal_acc']:.4f}")
    return 0


def write_pgm(path, matrix: np.ndarray) -> None:
    """8-bit binary PGM, min-max normalized; a constant matrix renders black."""
    m = np.asarray(matrix, dtype=np.float64)
    lo, hi = m.min(), m.max()
    scaled = np.zeros_like(m) if hi <= lo else (m - lo) / (hi - lo)
    pixels = np.round(scaled * 255).astype(np.uint8)
    rows, cols = pixels.shape
    Path(path).write_bytes(f"P5\n{cols} {rows}\n255\n".encode() + pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    magic, dims, maxval, rest = blob.split(b"\n", 3)
    if magic != b"P5" or maxval != b"255":
        raise ValueError(f"{path}: unsupported PGM header")
    cols, rows = (int(t) for t in dims.split())
    return np.frombuffer(rest, np.uint8).reshape(rows, cols)


def cmd_export_heatmap(args) -> int:
    cfg, params = checkpoint.load(args.checkpoint)
    bag = read_bag(args.bag)
    pred = forward(bag.features, params, cfg, training=False)
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    inc = pred.incidence.array.astype(np.float64)
    att = pred.attention.astype(np.float64)
    np.savetxt(f"{prefix}_incidence.csv", inc, delimiter=",", fmt="%.8g",
               header=",".join(f"h{j}" for j in range(inc.shape[1])), comments="")
    np.savetxt(f"{prefix}_attention.csv", att, delimiter=",", fmt="%.8g", header="attention", comments="")
    write_pgm(f"{prefix}_incidence.pgm", inc)
    write_pgm(f"{prefix}_attention.pgm", att)
    written = ["incidence.csv", "attention.csv", "incidence.pgm", "attention.pgm"]
    if bag.coords is not None:
        with open(f"{prefix}_attention_map.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["row", "col", "score"])
            for (r, c), s in zip(bag.coords, att[:, 0]):
                w.writerow([int(r), int(c), f"{s:.8g}"])
        written.append("attention_map.csv")
    print(f"bag {bag.id}: predicted class {pred.label}, true class {bag.label}")
    print("wrote " + ", ".join(f"{prefix.name}_{w}" for w in written))
    return 0


def cmd_bench(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for method in args.methods:
        n_list = [n for n in args.n_list if method != "knn" or n <= args.knn_max_n]
        for n, sec in time_construction(method, n_list, args.dim, args.reps, seed=args.seed):
            rows.append((method, n, args.dim, args.reps, sec))
            print(f"{method},{n},{args.dim},{args.reps},{sec:.6g}", flush=True)
    with open(out / "construction_times.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["method", "N", "d", "reps", "mean_seconds"])
        w.writerows([m, n, d, r, f"{s:.6g}"] for m, n, d, r, s in rows)
    return 0


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dyhg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic motif-pair dataset")
    defaults = {f.name: f.default for f in fields(SyntheticSpec)}
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=defaults["classes"])
    p.add_argument("--bags-per-class", type=int, default=defaults["bags_per_class"])
    p.add_argument("--n-min", type=int, default=defaults["n_min"])
    p.add_argument("--n-max", type=int, default=defaults["n_max"])
    p.add_argument("--dim", type=int, default=defaults["d"])
    p.add_argument("--prototypes", type=int, default=defaults["prototypes"])
    p.add_argument("--noise", type=float, default=defaults["noise"])
    p.add_argument("--seed", type=int, default=defaults["seed"])
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train and keep the best-validation checkpoint")
    _add_run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train all four construction variants")
    _add_run_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="grid over hyperedge count and temperature")
    _add_run_flags(p, epochs=20)
    p.add_argument("--h-list", type=_int_list, default=list(SWEEP_H_GRID))
    p.add_argument("--tau-list", type=_float_list, default=list(SWEEP_TAU_GRID))
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-heatmap", help="dump incidence and attention for one bag")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--bag", required=True)
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=cmd_export_heatmap)

    p = sub.add_parser("bench-construction", help="time hypergraph construction")
    p.add_argument("--methods", type=lambda s: [m for m in s.split(",") if m], default=list(METHODS))
    p.add_argument("--n-list", type=_int_list, default=[1000, 2000, 4000, 8000, 16000])
    p.add_argument("--knn-max-n", type=int, default=8000, help="skip k-NN above this N")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "bench-construction":
        unknown = set(args.methods) - set(METHODS)
        if unknown:
            print(f"error: ConfigError: unknown methods {sorted(unknown)}", file=sys.stderr)
            return 2
    threads = os.environ.get("DYHG_THREADS")
    try:
        if threads:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(int(threads)):
                return args.func(args)
        return args.func(args)
    except (DyHGError, OSError, ValueError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
