"""LeNet feature extractor and linear classifier head."""

from __future__ import annotations

import math

import numpy as np

from . import checkpoint
from . import functional as F
from .tensor import Tensor, _as_tensor, no_grad, parameter

LATENT_DIM = 84


def _uniform(rng, fan_in, shape):
    b = 1.0 / math.sqrt(fan_in)
    return parameter(rng.uniform(-b, b, shape))


class TaskModel:
    """Classic tanh LeNet-5 on (B, 3, 32, 32) inputs.

    ``embed`` returns the 84-d penultimate activations (the latent ``z``);
    ``classify`` maps them to ``n_classes`` logits.
    """

    input_shape = (3, 32, 32)

    def __init__(self, n_classes: int = 10, rng=None):
        rng = np.random.default_rng(rng)
        self.n_classes = n_classes
        self.params: dict[str, Tensor] = {
            "F.conv1.weight": _uniform(rng, 3 * 25, (6, 3, 5, 5)),
            "F.conv1.bias": _uniform(rng, 3 * 25, (6,)),
            "F.conv2.weight": _uniform(rng, 6 * 25, (16, 6, 5, 5)),
            "F.conv2.bias": _uniform(rng, 6 * 25, (16,)),
            "F.fc1.weight": _uniform(rng, 400, (120, 400)),
            "F.fc1.bias": _uniform(rng, 400, (120,)),
            "F.fc2.weight": _uniform(rng, 120, (LATENT_DIM, 120)),
            "F.fc2.bias": _uniform(rng, 120, (LATENT_DIM,)),
            "H.weight": _uniform(rng, LATENT_DIM, (n_classes, LATENT_DIM)),
            "H.bias": _uniform(rng, LATENT_DIM, (n_classes,)),
        }

    def feature_parameters(self) -> list[Tensor]:
        return [p for k, p in self.params.items() if k.startswith("F.")]

    def head_parameters(self) -> list[Tensor]:
        return [p for k, p in self.params.items() if k.startswith("H.")]

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def embed(self, x) -> Tensor:
        x = _as_tensor(x)
        if x.ndim != 4 or tuple(x.shape[1:]) != self.input_shape:
            raise ValueError(f"embed expects (B, 3, 32, 32) images, got {x.shape}")
        p = self.params
        h = F.conv2d(x, p["F.conv1.weight"]) + p["F.conv1.bias"].reshape(1, 6, 1, 1)
        h = F.max_pool2d(h.tanh())
        h = F.conv2d(h, p["F.conv2.weight"]) + p["F.conv2.bias"].reshape(1, 16, 1, 1)
        h = F.max_pool2d(h.tanh())
        h = h.reshape(h.shape[0], -1)
        h = F.linear(h, p["F.fc1.weight"], p["F.fc1.bias"]).tanh()
        return F.linear(h, p["F.fc2.weight"], p["F.fc2.bias"])

    def classify(self, z) -> Tensor:
        return F.linear(z, self.params["H.weight"], self.params["H.bias"])

    def log_proba(self, x) -> Tensor:
        return F.log_softmax(self.classify(self.embed(x)), axis=1)

    def predict(self, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
        out = []
        with no_grad():
            for start in range(0, len(images), batch_size):
                logits = self.classify(self.embed(Tensor(images[start : start + batch_size])))
                out.append(logits.data.argmax(axis=1))
        return np.concatenate(out) if out else np.zeros(0, dtype=int)

    def transform(self, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
        with no_grad():
            parts = [self.embed(Tensor(images[s : s + batch_size])).data for s in range(0, len(images), batch_size)]
        return np.concatenate(parts) if parts else np.zeros((0, LATENT_DIM))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state_dict(self, state: dict) -> None:
        for k, p in self.params.items():
            if k not in state:
                raise checkpoint.CheckpointError(f"checkpoint is missing parameter {k!r}")
            if state[k].shape != p.shape:
                raise checkpoint.CheckpointError(f"parameter {k!r} has shape {state[k].shape}, expected {p.shape}")
            p.data = np.array(state[k], dtype=np.float64)

    @classmethod
    def from_state(cls, state: dict) -> "TaskModel":
        if "H.bias" not in state:
            raise checkpoint.CheckpointError("checkpoint has no classifier head")
        model = cls(n_classes=len(state["H.bias"]), rng=0)
        model.load_state_dict(state)
        return model

    def save(self, path, extra: dict | None = None) -> None:
        arrays = self.state_dict()
        arrays.update(extra or {})
        checkpoint.save(path, arrays)

    @classmethod
    def load(cls, path) -> "TaskModel":
        return cls.from_state(checkpoint.load(path))


def accuracy(model: TaskModel, images: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of argmax predictions equal to ``labels``."""
    if len(labels) == 0:
        raise ValueError("accuracy of an empty dataset is undefined")
    return float(np.mean(model.predict(images) == labels))
