"""End-to-end experiment pipeline shared by the command line and the tests."""

from __future__ import annotations

import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .data import EVAL_SUITE, LabeledDataset, apply_shift, load_idx, make_eval_suite, split
from .model import TaskModel
from .trainer import ABLATIONS, RunMetrics, evaluate, train
from .utils import atomic_write_text

log = logging.getLogger(__name__)

CHECKPOINT_NAME = "model.l2d"
METRICS_NAME = "metrics.csv"
CONFIG_NAME = "config.txt"
RESULTS_NAME = "results.csv"
ABLATION_NAME = "ablation.csv"


def load_source(cfg: ExperimentConfig) -> tuple[LabeledDataset, LabeledDataset]:
    """Train split and held-out source split, both drawn from the configured IDX pair."""
    for path in (cfg.train_images, cfg.train_labels):
        if not Path(path).is_file():
            raise FileNotFoundError(f"data file not found: {path}")
    data = load_idx(cfg.train_images, cfg.train_labels)
    return split(data, cfg.n_train, cfg.n_eval, cfg.train.seed)


def target_domains(cfg: ExperimentConfig, source: LabeledDataset) -> list[LabeledDataset]:
    """The fixed shifted suite plus the configured shift when it is not already part of it."""
    suite = make_eval_suite(source, cfg.train.seed)
    spec = cfg.shift
    if spec.kind != "invert" and spec.label not in EVAL_SUITE and spec.severity > 0:
        extra = apply_shift(source, spec, cfg.train.seed)
        extra.name = spec.label
        suite.append(extra)
    return suite


def results_rows(scores: dict[str, tuple[int, float]], source_name: str = "source") -> list[tuple[str, int, float]]:
    """Per-domain rows followed by the unweighted mean over shifted domains."""
    rows = [(name, n, acc) for name, (n, acc) in scores.items()]
    shifted = [acc for name, _, acc in rows if name != source_name]
    if not shifted:
        raise ValueError("no shifted domains to average")
    n_total = sum(n for name, n, _ in rows if name != source_name)
    rows.append(("average", n_total, float(np.mean(shifted))))
    return rows


def results_csv(rows) -> str:
    lines = ["domain,n,accuracy"] + [f"{name},{n},{acc!r}" for name, n, acc in rows]
    return "\n".join(lines) + "\n"


def run_train(cfg: ExperimentConfig, out_dir=None) -> tuple[TaskModel, RunMetrics]:
    out = Path(out_dir or cfg.out_dir)
    train_set, _ = load_source(cfg)
    log.info("training %s on %d images for %d epochs", cfg.train.ablation, len(train_set), cfg.train.epochs)
    model, metrics = train(cfg.train, train_set)
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / CHECKPOINT_NAME)
    atomic_write_text(out / METRICS_NAME, metrics.to_csv())
    atomic_write_text(out / CONFIG_NAME, cfg.dumps())
    return model, metrics


def run_eval(cfg: ExperimentConfig, checkpoint_path, out_dir=None) -> list[tuple[str, int, float]]:
    model = TaskModel.load(checkpoint_path)
    _, source = load_source(cfg)
    scores = evaluate(model, [source] + target_domains(cfg, source))
    rows = results_rows(scores)
    atomic_write_text(Path(out_dir or cfg.out_dir) / RESULTS_NAME, results_csv(rows))
    return rows


def run_ablation(cfg: ExperimentConfig, out_dir=None, variants=ABLATIONS) -> list[tuple[str, list]]:
    """Train and evaluate each variant under ``out/<variant>/``; write a wide comparison table."""
    out = Path(out_dir or cfg.out_dir)
    table = []
    for variant in variants:
        sub = replace(cfg, train=replace(cfg.train, ablation=variant), out_dir=str(out / variant))
        run_train(sub)
        rows = run_eval(sub, Path(sub.out_dir) / CHECKPOINT_NAME)
        table.append((variant, rows))
        log.info("%s: average %.4f", variant, rows[-1][2])
    domains = [name for name, _, _ in table[0][1]]
    lines = ["variant," + ",".join(domains)]
    lines += [variant + "," + ",".join(repr(acc) for _, _, acc in rows) for variant, rows in table]
    atomic_write_text(out / ABLATION_NAME, "\n".join(lines) + "\n")
    return table


__all__ = [
    "CHECKPOINT_NAME",
    "METRICS_NAME",
    "CONFIG_NAME",
    "RESULTS_NAME",
    "ABLATION_NAME",
    "load_source",
    "target_domains",
    "results_rows",
    "results_csv",
    "run_train",
    "run_eval",
    "run_ablation",
]
