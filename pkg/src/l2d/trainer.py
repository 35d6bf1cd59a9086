"""Alternating min-max training of the style generator and the task model.

Per mini-batch the generator's random kernels are redrawn, one step on the
style parameters minimizes ``club + beta * const`` with the task side frozen,
then one step on the feature extractor, classifier and variational head
minimizes ``task + alpha1 * supcon + alpha2 * likelihood`` on the source batch
and a freshly generated batch.
"""

from __future__ import annotations

import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import functional as F
from .data import LabeledDataset
from .model import LATENT_DIM, TaskModel
from .objectives import (
    ContrastiveConfig,
    MMDConfig,
    VariationalGaussianHead,
    class_conditional_mmd,
    club_estimate,
    cross_entropy,
    cross_entropy_task,
    likelihood_loss,
    supcon_loss,
)
from .optim import SGD, Adam, cosine_lr
from .style import MixWeights, StyleComplementModule, export_pnm
from .tensor import Tensor, backward, concat, frozen, no_grad
from .utils import substream, thread_cap

log = logging.getLogger(__name__)

ABLATIONS = ("full", "no_style", "no_mod", "no_min_mi", "no_max_mi")


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    alpha1: float = 1.0
    alpha2: float = 1.0
    beta: float = 1.0
    tau: float = 0.1
    supcon_reduction: str = "mean"
    k: int = 6
    batch_size: int = 32
    epochs: int = 5
    lr_task: float = 1e-2
    lr_generator: float = 1e-3
    lr_q: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 5e-4
    nesterov: bool = False
    cosine: bool = False
    seed: int = 0
    ablation: str = "full"
    mmd_kernel: str = "rbf"
    mix_guard: float = 0.1
    export_dir: str = ""

    def __post_init__(self):
        if min(self.alpha1, self.alpha2, self.beta) < 0:
            raise ValueError("alpha1, alpha2 and beta must be non-negative")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}; expected one of {ABLATIONS}")
        MMDConfig(self.mmd_kernel)
        ContrastiveConfig(self.tau, self.supcon_reduction)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunMetrics:
    """Long-format metric log: one ``(epoch, split, metric, value)`` row each."""

    rows: list = field(default_factory=list)

    def add(self, epoch: int, split: str, metric: str, value: float) -> None:
        value = float(value)
        if not math.isfinite(value):
            raise TrainingDivergedError(f"non-finite {split}/{metric} at epoch {epoch}: {value}")
        self.rows.append((int(epoch), split, metric, value))

    def series(self, metric: str, split: str = "train") -> list[float]:
        return [v for (_, s, m, v) in self.rows if m == metric and s == split]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("epoch,split,metric,value\n")
        for epoch, split, metric, value in self.rows:
            buf.write(f"{epoch},{split},{metric},{value!r}\n")
        return buf.getvalue()


def _finite(name: str, value: Tensor) -> None:
    if not np.all(np.isfinite(value.data)):
        raise TrainingDivergedError(f"{name} became non-finite ({value.data!r})")


class L2DTrainer:
    """Owns the task model, variational head, generator and both optimizers."""

    def __init__(self, config: TrainConfig, n_classes: int = 10, image_shape=(3, 32, 32)):
        self.config = cfg = config
        init_rng = substream(cfg.seed, "init")
        self.model = TaskModel(n_classes, rng=init_rng)
        self.q = VariationalGaussianHead(LATENT_DIM, rng=init_rng)
        self.generator = StyleComplementModule(
            cfg.k, image_shape, mix_guard=cfg.mix_guard, modulate=cfg.ablation != "no_mod"
        )
        self.kernel_rng = substream(cfg.seed, "generator")
        self.mix_rng = substream(cfg.seed, "mix-weights")
        self.batch_rng = substream(cfg.seed, "data:batches")
        self.task_opt = SGD(
            self.model.parameters(), cfg.lr_task, cfg.momentum, cfg.weight_decay, cfg.nesterov
        )
        # the head's precision can reach exp(10); Adam's scale invariance keeps its updates bounded
        self.q_opt = Adam(self.q.parameters(), cfg.lr_q)
        # no weight decay: it would drag var_shift toward the degenerate all-zero map
        self.gen_opt = SGD(self.generator.parameters(), cfg.lr_generator, cfg.momentum)
        self.contrastive = ContrastiveConfig(cfg.tau, cfg.supcon_reduction)
        self.mmd = MMDConfig(cfg.mmd_kernel)
        self.metrics = RunMetrics()
        self._step = 0
        self._last_x_plus = None

    # -- parameter groups ----------------------------------------------------
    def task_parameters(self) -> list[Tensor]:
        return self.model.parameters() + self.q.parameters()

    @property
    def uses_generator(self) -> bool:
        return self.config.ablation != "no_style"

    # -- losses ------------------------------------------------------------
    def task_losses(self, x: np.ndarray, y: np.ndarray, x_plus: np.ndarray | None) -> dict[str, Tensor]:
        cfg = self.config
        alpha1 = 0.0 if cfg.ablation == "no_max_mi" else cfg.alpha1
        n = len(y)
        if x_plus is None:
            z = self.model.embed(Tensor(x))
            log_p = F.log_softmax(self.model.classify(z), axis=1)
            ce = cross_entropy(log_p, y)
            supcon = supcon_loss(F.l2_normalize(z), y, self.contrastive)
            likeli = likelihood_loss(z.detach(), z.detach(), self.q)
        else:
            z_all = self.model.embed(Tensor(np.concatenate([x, x_plus])))
            z, z_plus = z_all[:n], z_all[n:]
            log_p = F.log_softmax(self.model.classify(z_all), axis=1)
            ce = cross_entropy_task(log_p[:n], log_p[n:], y)
            supcon = supcon_loss(F.l2_normalize(z_all), np.concatenate([y, y]), self.contrastive)
            # the likelihood term trains the variational head only
            likeli = likelihood_loss(z.detach(), z_plus.detach(), self.q)
        total = ce + supcon * alpha1 + likeli * cfg.alpha2
        accuracy = float(np.mean(log_p.data[:n].argmax(axis=1) == y))
        return {"total": total, "ce": ce, "supcon": supcon, "likelihood": likeli, "accuracy": Tensor(accuracy)}

    def generator_losses(self, x: np.ndarray, y: np.ndarray, weights: MixWeights) -> dict[str, Tensor]:
        cfg = self.config
        with no_grad():
            z = self.model.embed(Tensor(x))
        x_plus, _ = self.generator.generate(Tensor(x), weights=weights)
        z_plus = self.model.embed(x_plus)
        club = club_estimate(z, z_plus, self.q)
        const = class_conditional_mmd(z, z_plus, y, y, self.mmd)
        total = const * cfg.beta if cfg.ablation == "no_min_mi" else club + const * cfg.beta
        return {"total": total, "club": club, "const": const}

    # -- steps -------------------------------------------------------------
    def generator_step(self, x: np.ndarray, y: np.ndarray) -> tuple[MixWeights | None, dict]:
        """Redraw kernels and mixing weights, then update the style parameters."""
        if not self.uses_generator:
            return None, {}
        self.generator.reinit(self.kernel_rng)
        weights = self.generator.draw_weights(self.mix_rng)
        with frozen(self.task_parameters()):
            if self.config.ablation == "no_mod":
                with no_grad():
                    losses = self.generator_losses(x, y, weights)
            else:
                self.gen_opt.zero_grad()
                losses = self.generator_losses(x, y, weights)
                _finite("generator loss", losses["total"])
                backward(losses["total"])
                self.gen_opt.step()
        return weights, {"generator_loss": losses["total"].item(), "club": losses["club"].item(),
                         "const": losses["const"].item()}

    def task_step(self, x: np.ndarray, y: np.ndarray, weights: MixWeights | None) -> dict:
        """One update of the task model and variational head on source plus generated images."""
        x_plus = None
        if weights is not None:
            with no_grad():
                x_plus = self.generator.generate(Tensor(x), weights=weights)[0].data
        self.task_opt.zero_grad()
        self.q_opt.zero_grad()
        with frozen(self.generator.parameters()):
            losses = self.task_losses(x, y, x_plus)
        _finite("task loss", losses["total"])
        backward(losses["total"])
        self.task_opt.step()
        self.q_opt.step()
        self._last_x_plus = x_plus
        return {
            "task_loss": losses["total"].item(),
            "ce": losses["ce"].item(),
            "supcon": losses["supcon"].item(),
            "likelihood": losses["likelihood"].item(),
            "train_accuracy": losses["accuracy"].item(),
        }

    def step(self, x: np.ndarray, y: np.ndarray) -> dict:
        weights, gen_metrics = self.generator_step(x, y)
        task_metrics = self.task_step(x, y, weights)
        self._step += 1
        return {**gen_metrics, **task_metrics}

    # -- loop ----------------------------------------------------------------
    def batches(self, n: int):
        order = self.batch_rng.permutation(n)
        bs = self.config.batch_size
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            if len(idx) >= 2:
                yield idx

    def fit(self, dataset: LabeledDataset) -> RunMetrics:
        if len(dataset) < 2:
            raise ValueError("training needs a dataset with at least two images")
        cfg = self.config
        per_epoch = sum(1 for _ in range(0, len(dataset), cfg.batch_size))
        total_steps = cfg.epochs * per_epoch
        for epoch in range(1, cfg.epochs + 1):
            sums: dict[str, float] = {}
            count = 0
            for i, idx in enumerate(self.batches(len(dataset))):
                if cfg.cosine:
                    self.task_opt.lr = cosine_lr(cfg.lr_task, self._step, total_steps)
                try:
                    values = self.step(dataset.images[idx], dataset.labels[idx])
                except TrainingDivergedError as exc:
                    raise TrainingDivergedError(f"epoch {epoch}, batch {i}: {exc}") from exc
                for key, val in values.items():
                    sums[key] = sums.get(key, 0.0) + val
                count += 1
                if i == 0 and cfg.export_dir and self._last_x_plus is not None:
                    export_pnm(self._last_x_plus[:8], cfg.export_dir, prefix=f"epoch{epoch:03d}")
            for key in sorted(sums):
                self.metrics.add(epoch, "train", key, sums[key] / count)
            log.info("epoch %d: %s", epoch, ", ".join(f"{k}={sums[k] / count:.4f}" for k in sorted(sums)))
        return self.metrics


def train(config: TrainConfig, dataset: LabeledDataset) -> tuple[TaskModel, RunMetrics]:
    trainer = L2DTrainer(config, dataset.n_classes, dataset.images.shape[1:])
    metrics = trainer.fit(dataset)
    return trainer.model, metrics


def evaluate(model: TaskModel, domains: list[LabeledDataset]) -> dict[str, tuple[int, float]]:
    """Accuracy per domain, keyed by domain name, in input order."""
    for ds in domains:
        if tuple(ds.images.shape[1:]) != model.input_shape:
            raise ValueError(f"domain {ds.name!r} has image shape {ds.images.shape[1:]}, model expects "
                             f"{model.input_shape}")

    def one(ds):
        return ds.name, (len(ds), float(np.mean(model.predict(ds.images) == ds.labels)))

    with ThreadPoolExecutor(max_workers=thread_cap()) as pool:
        return dict(pool.map(one, domains))
