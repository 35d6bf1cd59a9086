"""Scalar training objectives over latent batches.

``z`` are source embeddings and ``z_plus`` embeddings of generated images,
both (N, D). Every loss returns a scalar :class:`~l2d.tensor.Tensor` so it can
be differentiated with respect to whichever parameters are live.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import functional as F
from .optim import Adam
from .tensor import Tensor, _as_tensor, backward, parameter

LOG_2PI = math.log(2.0 * math.pi)
LOG_VAR_BOUNDS = (-10.0, 10.0)


class VariationalGaussianHead:
    """Diagonal Gaussian ``q(z_plus | z)`` from a two-layer tanh perceptron.

    The hidden layer has ``2 * dim`` units; the output layer emits the mean and
    the log-variance (clamped to ``[-10, 10]``) side by side.
    """

    def __init__(self, dim: int, hidden: int | None = None, rng=None):
        rng = np.random.default_rng(rng)
        hidden = 2 * dim if hidden is None else hidden
        self.dim = dim
        self.hidden = hidden
        b1, b2 = 1.0 / math.sqrt(dim), 1.0 / math.sqrt(hidden)
        self.w1 = parameter(rng.uniform(-b1, b1, (hidden, dim)))
        self.b1 = parameter(rng.uniform(-b1, b1, hidden))
        self.w2 = parameter(rng.uniform(-b2, b2, (2 * dim, hidden)))
        self.b2 = parameter(rng.uniform(-b2, b2, 2 * dim))

    def parameters(self) -> list[Tensor]:
        return [self.w1, self.b1, self.w2, self.b2]

    def named_parameters(self) -> dict[str, Tensor]:
        return {"q.w1": self.w1, "q.b1": self.b1, "q.w2": self.w2, "q.b2": self.b2}

    def __call__(self, z) -> tuple[Tensor, Tensor]:
        z = _as_tensor(z)
        if z.ndim != 2 or z.shape[1] != self.dim:
            raise ValueError(f"head expects (N, {self.dim}) inputs, got {z.shape}")
        h = F.linear(z, self.w1, self.b1).tanh()
        out = F.linear(h, self.w2, self.b2)
        mean = out[:, : self.dim]
        log_var = out[:, self.dim :].clip(*LOG_VAR_BOUNDS)
        return mean, log_var

    def log_prob(self, z, z_plus) -> Tensor:
        """Per-row ``log q(z_plus_i | z_i)``, shape (N,)."""
        mean, log_var = self(z)
        return gaussian_log_prob(_as_tensor(z_plus), mean, log_var)

    def fit(self, z, z_plus, steps: int = 500, lr: float = 1e-2, batch_size: int | None = None, rng=None) -> list:
        """Maximize the conditional likelihood with Adam; returns the loss trace."""
        z, z_plus = np.asarray(z, dtype=float), np.asarray(z_plus, dtype=float)
        rng = np.random.default_rng(rng)
        opt = Adam(self.parameters(), lr=lr)
        trace = []
        n = len(z)
        for _ in range(steps):
            if batch_size is None or batch_size >= n:
                zb, pb = z, z_plus
            else:
                idx = rng.choice(n, batch_size, replace=False)
                zb, pb = z[idx], z_plus[idx]
            opt.zero_grad()
            loss = likelihood_loss(zb, pb, self)
            backward(loss)
            opt.step()
            trace.append(loss.item())
        return trace


def gaussian_log_prob(x: Tensor, mean: Tensor, log_var: Tensor) -> Tensor:
    sq = (x - mean) * (x - mean)
    per_dim = (log_var + sq / log_var.exp()) * -0.5 - 0.5 * LOG_2PI
    return per_dim.sum(axis=1)


@dataclass(frozen=True)
class MMDConfig:
    """Kernel for class-conditional MMD: ``rbf`` or ``linear``.

    The rbf bandwidth defaults to the per-batch median heuristic; pass a
    positive ``bandwidth`` to fix it.
    """

    kernel: str = "rbf"
    bandwidth: float | None = None

    def __post_init__(self):
        if self.kernel not in ("rbf", "linear"):
            raise ValueError(f"unknown MMD kernel {self.kernel!r}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")


@dataclass(frozen=True)
class ContrastiveConfig:
    """Temperature and anchor reduction (``sum`` over anchors, or ``mean`` over anchors with positives)."""

    temperature: float = 0.1
    reduction: str = "sum"

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.reduction not in ("sum", "mean"):
            raise ValueError(f"unknown reduction {self.reduction!r}")


def _check_pairs(z: Tensor, z_plus: Tensor) -> None:
    if z.ndim != 2 or z.shape != z_plus.shape:
        raise ValueError(f"paired latent batches must share shape (N, D), got {z.shape} and {z_plus.shape}")


def club_estimate(z, z_plus, q) -> Tensor:
    """Sampled contrastive log-ratio upper bound on I(z; z_plus).

    ``mean_i [log q(z+_i | z_i) - mean_j log q(z+_j | z_i)]``. The inner mean is
    evaluated in closed form as ``var_j(z+) + (mean_j(z+) - mu_i)^2`` per
    dimension, so memory stays O(N D) rather than O(N^2 D).

    ``q`` is any callable mapping ``z`` to ``(mean, log_var)``.
    """
    z, z_plus = _as_tensor(z), _as_tensor(z_plus)
    _check_pairs(z, z_plus)
    if z.shape[0] < 2:
        raise ValueError("club_estimate needs at least two pairs")
    mean, log_var = q(z)
    inv_var = (-log_var).exp()
    pos = (z_plus - mean) * (z_plus - mean)
    col_mean = z_plus.mean(axis=0, keepdims=True)
    col_var = ((z_plus - col_mean) * (z_plus - col_mean)).mean(axis=0, keepdims=True)
    neg = col_var + (col_mean - mean) * (col_mean - mean)
    return ((neg - pos) * inv_var * 0.5).sum(axis=1).mean()


def likelihood_loss(z, z_plus, q) -> Tensor:
    """Mean negative conditional log-likelihood ``-mean_i log q(z+_i | z_i)``."""
    z, z_plus = _as_tensor(z), _as_tensor(z_plus)
    _check_pairs(z, z_plus)
    mean, log_var = q(z)
    return -gaussian_log_prob(z_plus, mean, log_var).mean()


def supcon_loss(embeddings, labels, cfg: ContrastiveConfig = ContrastiveConfig()) -> Tensor:
    """Supervised contrastive loss.

    For anchor ``i`` the denominator runs over every other row; positives are
    the other rows sharing its label. Anchors without positives contribute 0
    (and are not counted by the ``mean`` reduction). ``embeddings`` should
    already be L2-normalized.
    """
    e = _as_tensor(embeddings)
    labels = np.asarray(labels)
    n = e.shape[0]
    if e.ndim != 2 or n < 2 or labels.shape != (n,):
        raise ValueError(f"supcon_loss needs (N>=2, D) embeddings with N labels, got {e.shape} / {labels.shape}")
    eye = np.eye(n, dtype=bool)
    positives = (labels[:, None] == labels[None, :]) & ~eye
    counts = positives.sum(axis=1)
    if not counts.any():
        warnings.warn("supcon_loss: no anchor has a positive; returning 0", RuntimeWarning, stacklevel=2)
        return Tensor(0.0)
    logits = (e @ e.T) * (1.0 / cfg.temperature) + np.where(eye, -1e9, 0.0)
    log_prob = F.log_softmax(logits, axis=1)
    weights = np.where(positives, 1.0 / np.maximum(counts, 1)[:, None], 0.0)
    if cfg.reduction == "mean":
        weights = weights / np.count_nonzero(counts)
    return -(log_prob * weights).sum()


def median_bandwidth(points: np.ndarray) -> float:
    """Median of the nonzero pairwise squared distances (1.0 if all coincide)."""
    sq = (points**2).sum(axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * points @ points.T
    iu = np.triu_indices(len(points), k=1)
    vals = np.maximum(d[iu], 0.0)
    vals = vals[vals > 0]
    return float(np.median(vals)) if vals.size else 1.0


def class_conditional_mmd(z, z_plus, labels, labels_plus=None, cfg: MMDConfig = MMDConfig()) -> Tensor:
    """Mean over classes present on both sides of the squared mean-embedding distance.

    The rbf kernel is ``exp(-|a - b|^2 / h)`` with ``h`` the median pairwise
    squared distance over the pooled batch, held constant for differentiation.
    """
    z, z_plus = _as_tensor(z), _as_tensor(z_plus)
    labels = np.asarray(labels)
    labels_plus = labels if labels_plus is None else np.asarray(labels_plus)
    if z.ndim != 2 or z_plus.ndim != 2 or z.shape[1] != z_plus.shape[1]:
        raise ValueError(f"latent batches must be (N, D) with equal D, got {z.shape} and {z_plus.shape}")
    if labels.shape != (z.shape[0],) or labels_plus.shape != (z_plus.shape[0],):
        raise ValueError("one label per latent row is required")
    bandwidth = None
    if cfg.kernel == "rbf":
        bandwidth = cfg.bandwidth or median_bandwidth(np.concatenate([z.data, z_plus.data]))
    terms = []
    for m in np.unique(np.concatenate([labels, labels_plus])):
        src = np.flatnonzero(labels == m)
        gen = np.flatnonzero(labels_plus == m)
        if src.size == 0 or gen.size == 0:
            continue
        s, t = z[src], z_plus[gen]
        if cfg.kernel == "linear":
            diff = s.mean(axis=0) - t.mean(axis=0)
            terms.append((diff * diff).sum())
        else:
            k_ss = (F.pairwise_sq_dists(s, s) * (-1.0 / bandwidth)).exp().mean()
            k_st = (F.pairwise_sq_dists(s, t) * (-1.0 / bandwidth)).exp().mean()
            k_tt = (F.pairwise_sq_dists(t, t) * (-1.0 / bandwidth)).exp().mean()
            terms.append(k_ss - 2.0 * k_st + k_tt)
    if not terms:
        warnings.warn("class_conditional_mmd: no class present in both batches; returning 0", RuntimeWarning,
                      stacklevel=2)
        return Tensor(0.0)
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return total * (1.0 / len(terms))


def cross_entropy_task(log_probs, log_probs_plus, labels) -> Tensor:
    """``-(1/2N) [sum_i log p(y_i | x_i) + sum_j log p(y_j | x+_j)]``.

    Inputs are log-softmax outputs of shape (N, C); generated images share the
    source labels.
    """
    log_probs, log_probs_plus = _as_tensor(log_probs), _as_tensor(log_probs_plus)
    onehot = _onehot(labels, log_probs.shape)
    if log_probs_plus.shape != log_probs.shape:
        raise ValueError(f"prediction shapes differ: {log_probs.shape} vs {log_probs_plus.shape}")
    n = log_probs.shape[0]
    return -((log_probs * onehot).sum() + (log_probs_plus * onehot).sum()) * (1.0 / (2 * n))


def cross_entropy(log_probs, labels) -> Tensor:
    log_probs = _as_tensor(log_probs)
    onehot = _onehot(labels, log_probs.shape)
    return -(log_probs * onehot).sum() * (1.0 / log_probs.shape[0])


def _onehot(labels, shape) -> np.ndarray:
    labels = np.asarray(labels)
    n, c = shape
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= c or not np.issubdtype(labels.dtype, np.integer)):
        raise ValueError(f"labels must be integers in [0, {c}), got range [{labels.min()}, {labels.max()}]")
    onehot = np.zeros(shape)
    onehot[np.arange(n), labels] = 1.0
    return onehot


def infonce_estimate(z, z_plus, scale: float | None = None) -> Tensor:
    """InfoNCE lower bound with a scaled dot-product critic (diagnostic only).

    Returns ``log N + mean_i log softmax_j(f(z_i, z+_j))[i]``, which can never
    exceed ``log N``. The default critic scale is ``1 / sqrt(D)``.
    """
    z, z_plus = _as_tensor(z), _as_tensor(z_plus)
    _check_pairs(z, z_plus)
    n, d = z.shape
    if n < 2:
        raise ValueError("infonce_estimate needs at least two pairs")
    scale = 1.0 / math.sqrt(d) if scale is None else scale
    log_p = F.log_softmax((z @ z_plus.T) * scale, axis=1)
    diag = log_p[np.arange(n), np.arange(n)]
    return diag.mean() + math.log(n)
