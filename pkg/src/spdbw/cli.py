"""Command-line surface: diagnose | verify | generate | train.

Reports are deterministic under a fixed seed (no timestamps anywhere), so
two identical invocations produce byte-identical files. Exit codes:
0 success, 1 verification failure, 2 usage error, 3 numerical/domain error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .batchnorm import GbwbnState, gbwbn_forward
from .errors import (
    DomainError,
    NumericalError,
    OptimizerError,
    TrainingDivergenceError,
)
from .linalg import SpdMatrix, condition_number
from .matrix_io import load_batch, load_dataset, save_dataset
from .network import TrainConfig, make_classification_model, train
from .synthetic import SyntheticSpec, make_dataset, prepare_batch
from .verification import run_suite

THRESHOLDS = (1e3, 1e4, 1e5)
STAGES = ("without_bn", "before_bn", "after_bn")


@dataclass
class DiagnosticsReport:
    """Condition-number counts per stage and threshold."""

    lam: float
    epoch: int
    size: int
    counts: dict  # stage -> {threshold: count}

    def percentages(self) -> dict:
        return {
            stage: {
                thr: (100.0 * cnt / self.size if self.size else 0.0)
                for thr, cnt in row.items()
            }
            for stage, row in self.counts.items()
        }

    def to_dict(self) -> dict:
        pct = self.percentages()
        return {
            "lambda": self.lam,
            "epoch": self.epoch,
            "size": self.size,
            "stages": {
                stage: {
                    f"{thr:g}": {"count": self.counts[stage][thr], "percent": pct[stage][thr]}
                    for thr in THRESHOLDS
                }
                for stage in STAGES
            },
        }

    def to_csv(self) -> str:
        pct = self.percentages()
        lines = ["lambda,epoch,stage,threshold,count,percent"]
        for stage in STAGES:
            for thr in THRESHOLDS:
                lines.append(
                    f"{self.lam:g},{self.epoch},{stage},{thr:g},"
                    f"{self.counts[stage][thr]},{pct[stage][thr]:.4g}"
                )
        return "\n".join(lines) + "\n"


def _count_kappas(batch) -> dict:
    kappas = [condition_number(x) for x in batch]
    return {thr: int(sum(k > thr for k in kappas)) for thr in THRESHOLDS}


def diagnose_batch(batch, state: GbwbnState, lam: float, epoch: int = 0) -> DiagnosticsReport:
    """Three-stage condition-number statistics around one BN pass."""
    theta = state.theta
    w = state.m.inv_sqrt().array

    def pre_map(x: SpdMatrix) -> SpdMatrix:
        y = x if theta == 1.0 else x.power(theta)
        return SpdMatrix(w @ y.array @ w)

    before = [pre_map(x) for x in batch]
    after = gbwbn_forward(batch, state)
    counts = {
        "without_bn": _count_kappas(batch),
        "before_bn": _count_kappas(before),
        "after_bn": _count_kappas(after),
    }
    return DiagnosticsReport(lam=lam, epoch=epoch, size=len(batch), counts=counts)


# ---------------------------------------------------------------------------
# subcommands


def _load_input_batch(args) -> list[SpdMatrix]:
    if args.input:
        arrays, _ = load_batch(args.input)
        try:
            return prepare_batch(arrays, args.lam)
        except DomainError as exc:
            raise DomainError(f"input batch is not SPD after regularization: {exc}") from exc
    spec = SyntheticSpec(
        dim=args.dim,
        count_per_class=args.count,
        num_classes=1,
        kappa_min=args.kappa_min,
        kappa_max=args.kappa_max,
        seed=args.seed,
    )
    mats, _ = make_dataset(spec)
    if args.lam > 0:
        mats = prepare_batch([m.array for m in mats], args.lam)
    return mats


def cmd_diagnose(args) -> int:
    batch = _load_input_batch(args)
    state = GbwbnState.create(batch[0].dim, theta=args.theta, scale=args.scale)
    report = diagnose_batch(batch, state, lam=args.lam)
    payload = json.dumps(report.to_dict(), indent=2) + "\n"
    csv_text = report.to_csv()
    if args.out:
        Path(args.out + ".json").write_text(payload)
        Path(args.out + ".csv").write_text(csv_text)
    sys.stdout.write(payload if args.format == "json" else csv_text)
    return 0


def cmd_verify(args) -> int:
    dims = [int(v) for v in args.dim.split(",")] if args.dim else None
    checks = run_suite(args.suite, seed=args.seed, dims=dims)
    for check in checks:
        status = "PASS" if check.passed else "FAIL"
        sys.stdout.write(
            f"{status} {check.name}: residual={check.residual:.3e} "
            f"tolerance={check.tolerance:.3e}\n"
        )
    detail = [c.to_dict() for c in checks]
    failed = [c for c in checks if not c.passed]
    summary = {"suite": args.suite, "seed": args.seed, "checks": detail,
               "failed": len(failed), "total": len(checks)}
    if args.out:
        if args.format == "csv":
            lines = ["name,residual,tolerance,passed"]
            for c in checks:
                lines.append(f"{c.name},{c.residual:.17g},{c.tolerance:.17g},{c.passed}")
            Path(args.out).write_text("\n".join(lines) + "\n")
        else:
            Path(args.out).write_text(json.dumps(summary, indent=2) + "\n")
    sys.stdout.write(f"{len(checks) - len(failed)}/{len(checks)} checks passed\n")
    return 1 if failed else 0


def cmd_generate(args) -> int:
    spec = SyntheticSpec(
        dim=args.dim,
        count_per_class=args.count,
        num_classes=args.classes,
        kappa_min=args.kappa_min,
        kappa_max=args.kappa_max,
        seed=args.seed,
        separation=args.separation,
    )
    mats, labels = make_dataset(spec)
    path = save_dataset(args.out, mats, labels, spec.to_dict())
    sys.stdout.write(f"{path}\n")
    return 0


def _split_train_test(mats, labels, seed: int):
    """Deterministic stratified half/half split."""
    rng = np.random.default_rng(seed)
    labels = np.asarray(labels)
    train_idx, test_idx = [], []
    for c in sorted(set(int(v) for v in labels)):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        half = len(idx) // 2
        train_idx.extend(idx[:half])
        test_idx.extend(idx[half:])
    tr = ([mats[i] for i in train_idx], labels[list(train_idx)])
    te = ([mats[i] for i in test_idx], labels[list(test_idx)])
    return tr, te


def _run_grid_point(arrays, labels, dim, args, theta: float, lam: float, with_bn: bool):
    mats = prepare_batch(arrays, lam)
    train_data, test_data = _split_train_test(mats, labels, args.seed)
    num_classes = len(set(int(v) for v in labels))
    model = make_classification_model(
        dim, args.hidden_dim, num_classes=num_classes, with_bn=with_bn,
        theta=theta, seed=args.seed,
    )
    cfg = TrainConfig(
        lr=args.lr, epochs=args.epochs, batch_size=args.batch_size,
        seed=args.seed, lambda_reg=lam,
    )
    history = train(model, train_data, test_data, cfg)
    return model, history


def cmd_train(args) -> int:
    if args.data:
        arrays, labels, _ = load_dataset(args.data)
        dim = arrays[0].shape[0]
    else:
        spec = SyntheticSpec(
            dim=args.dim,
            count_per_class=args.count,
            num_classes=args.classes,
            kappa_min=args.kappa_min,
            kappa_max=args.kappa_max,
            seed=args.seed,
            separation=args.separation,
        )
        mats, labels = make_dataset(spec)
        arrays = [m.array for m in mats]
        dim = spec.dim
    thetas = [float(v) for v in args.theta.split(",")]
    lams = [float(v) for v in args.lam.split(",")]
    bn_options = [True, False] if args.compare_no_bn else [True]
    grid = [
        (theta, lam, with_bn)
        for theta in thetas
        for lam in lams
        for with_bn in bn_options
    ]

    max_workers = min(len(grid), max(1, int(os.environ.get("SPD_GBW_THREADS", "1"))))

    def worker(point):
        theta, lam, with_bn = point
        try:
            model, history = _run_grid_point(arrays, labels, dim, args, theta, lam, with_bn)
            return point, model, history, "ok"
        except TrainingDivergenceError as exc:
            return point, None, [], f"diverged at epoch {exc.epoch}"

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(worker, grid))
    else:
        results = [worker(point) for point in grid]

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    metric_lines = ["config,theta,lambda,with_bn,epoch,train_loss,train_acc,test_acc"]
    summary_lines = ["config,theta,lambda,with_bn,status,final_train_acc,final_test_acc"]
    for idx, (point, model, history, status) in enumerate(results):
        theta, lam, with_bn = point
        cfg_name = f"cfg{idx}"
        for row in history:
            metric_lines.append(
                f"{cfg_name},{theta:g},{lam:g},{int(with_bn)},{row['epoch']},"
                f"{row['train_loss']:.17g},{row['train_acc']:.17g},{row['test_acc']:.17g}"
            )
        if history:
            final = history[-1]
            summary_lines.append(
                f"{cfg_name},{theta:g},{lam:g},{int(with_bn)},{status},"
                f"{final['train_acc']:.17g},{final['test_acc']:.17g}"
            )
        else:
            summary_lines.append(f"{cfg_name},{theta:g},{lam:g},{int(with_bn)},{status},nan,nan")
        if model is not None:
            (out_dir / f"checkpoint_{cfg_name}.json").write_text(model.to_json() + "\n")
    (out_dir / "metrics.csv").write_text("\n".join(metric_lines) + "\n")
    (out_dir / "summary.csv").write_text("\n".join(summary_lines) + "\n")
    sys.stdout.write("\n".join(summary_lines) + "\n")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_synthetic_flags(p, count_default: int):
    p.add_argument("--dim", type=int, default=16, help="matrix dimension")
    p.add_argument("--count", type=int, default=count_default, help="samples per class")
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--kappa-min", type=float, default=1e3)
    p.add_argument("--kappa-max", type=float, default=1e6)
    p.add_argument("--separation", type=float, default=0.6)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spdbw",
        description="SPD Bures-Wasserstein geometry: diagnostics, verification, "
        "synthetic data, and training runs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("diagnose", help="condition-number statistics around one BN pass")
    p.add_argument("--input", help="batch manifest.json (defaults to synthetic data)")
    _add_synthetic_flags(p, count_default=500)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="report path prefix (writes .csv and .json)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("verify", help="run a check suite")
    p.add_argument("--suite", default="all",
                   choices=("operators", "gradients", "propositions", "batchnorm", "all"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", help="comma-separated dimensions for randomized checks")
    p.add_argument("--out", help="report file path")
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("generate", help="write a synthetic SPD dataset")
    _add_synthetic_flags(p, count_default=150)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train the backbone on a dataset or synthetic data")
    p.add_argument("--data", help="dataset.json (defaults to synthetic data)")
    _add_synthetic_flags(p, count_default=300)
    p.add_argument("--hidden-dim", type=int, default=12)
    p.add_argument("--theta", default="1", help="comma-separated theta grid")
    p.add_argument("--lambda", dest="lam", default="0", help="comma-separated lambda grid")
    p.add_argument("--compare-no-bn", action="store_true",
                   help="also train the same model without the BN layer")
    p.add_argument("--lr", type=float, default=2.5e-3)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DomainError, NumericalError, OptimizerError, TrainingDivergenceError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
