"""``l2d`` command line: train, eval, mi-bench, ablate."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiment, mibench
from .checkpoint import CheckpointError
from .config import ConfigError, ExperimentConfig, load, parse
from .data import IDXError
from .trainer import TrainingDivergedError
from .utils import atomic_write_text

log = logging.getLogger("l2d")


def _config(args) -> ExperimentConfig:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.config is None:
        return parse("", "<defaults>", overrides)
    return load(args.config, overrides)


def cmd_train(args) -> int:
    cfg = _config(args)
    experiment.run_train(cfg)
    print(f"wrote {Path(cfg.out_dir) / experiment.CHECKPOINT_NAME}")
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    ckpt = args.checkpoint or Path(cfg.out_dir) / experiment.CHECKPOINT_NAME
    rows = experiment.run_eval(cfg, ckpt)
    for name, n, acc in rows:
        print(f"{name:>14} {n:6d} {acc:.4f}")
    return 0


def cmd_mi_bench(args) -> int:
    seed = 0 if args.seed is None else args.seed
    out = Path(args.out or ".")
    rows = mibench.run(seed)
    estimates = [r.estimate for r in rows]
    atomic_write_text(out / "mi_bench.csv", mibench.to_csv(rows))
    for r in rows:
        print(f"rho={r.rho:.1f} analytic={r.analytic_mi:.4f} estimate={r.estimate:.4f}")
    if not all(a < b for a, b in zip(estimates, estimates[1:])):
        log.error("estimates are not increasing in rho")
        return 1
    return 0


def cmd_ablate(args) -> int:
    cfg = _config(args)
    table = experiment.run_ablation(cfg)
    for variant, rows in table:
        print(f"{variant:>10} {rows[-1][2]:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="l2d", description="Style-diversified single-domain generalization.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="key=value experiment configuration")
        p.add_argument("--out", help="output directory (overrides out_dir)")
        p.add_argument("--seed", type=int, help="run seed (overrides seed)")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        return p

    common(sub.add_parser("train", help="train a model and write checkpoint, metrics and config snapshot")).set_defaults(
        func=cmd_train
    )
    p = common(sub.add_parser("eval", help="score a checkpoint on the source and shifted domains"))
    p.add_argument("--checkpoint", help="checkpoint path (default: <out>/model.l2d)")
    p.set_defaults(func=cmd_eval)
    common(sub.add_parser("mi-bench", help="CLUB estimates on correlated Gaussians"), config=False).set_defaults(
        func=cmd_mi_bench
    )
    common(sub.add_parser("ablate", help="train and evaluate every ablation variant")).set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, IDXError, FileNotFoundError, TrainingDivergedError, ValueError) as exc:
        print(f"l2d {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
