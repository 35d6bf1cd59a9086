"""scikit-learn style wrapper around the trainer."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.preprocessing import LabelEncoder
from sklearn.utils.validation import check_array, check_is_fitted

from .data import IMAGE_SIZE, LabeledDataset, preprocess
from .model import TaskModel
from .tensor import Tensor, no_grad
from .trainer import L2DTrainer, TrainConfig


def check_images(X) -> np.ndarray:
    """Validate and normalize an image batch to (N, 3, 32, 32) floats in [-1, 1].

    Accepted inputs:
      * (N, 3, 32, 32) floats already in [-1, 1];
      * (N, H, W) grayscale, either uint8 / [0, 255] pixels or floats in [-1, 1].
        These are resized and triplicated the same way the IDX loader does.
    """
    raw = np.asarray(X)
    X = check_array(X, allow_nd=True, ensure_2d=False, dtype=np.float64, ensure_min_samples=1)
    if X.ndim == 3:
        if raw.dtype == np.uint8 or X.max() > 1.0:
            if X.min() < 0 or X.max() > 255:
                raise ValueError("grayscale pixel values must lie in [0, 255]")
            return preprocess(X)
        X = preprocess((X + 1.0) * 127.5)
    if X.ndim != 4 or X.shape[1:] != (3, IMAGE_SIZE, IMAGE_SIZE):
        raise ValueError(f"expected (N, 3, 32, 32) images or (N, H, W) grayscale, got shape {X.shape}")
    if X.min() < -1.0 or X.max() > 1.0:
        raise ValueError("image values must lie in [-1, 1]")
    return X


class L2DClassifier(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Digit classifier trained with style-complement augmentation.

    ``transform`` returns the 84-d latent features. Labels may be any
    hashable values; they are encoded internally and restored by ``predict``.
    """

    def __init__(
        self,
        alpha1=1.0,
        alpha2=1.0,
        beta=1.0,
        tau=0.1,
        k=6,
        batch_size=32,
        epochs=5,
        lr_task=1e-2,
        lr_generator=1e-3,
        lr_q=1e-3,
        momentum=0.9,
        weight_decay=5e-4,
        ablation="full",
        random_state=0,
    ):
        self.alpha1 = alpha1
        self.alpha2 = alpha2
        self.beta = beta
        self.tau = tau
        self.k = k
        self.batch_size = batch_size
        self.epochs = epochs
        self.lr_task = lr_task
        self.lr_generator = lr_generator
        self.lr_q = lr_q
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.ablation = ablation
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        params = self.get_params()
        seed = params.pop("random_state")
        if seed is None:
            seed = 0
        elif not isinstance(seed, (int, np.integer)):
            raise ValueError("random_state must be an int or None")
        return TrainConfig(seed=int(seed), **params)

    def fit(self, X, y):
        X = check_images(X)
        y = np.asarray(y)
        if y.ndim != 1 or len(y) != len(X):
            raise ValueError(f"y must be 1-D with {len(X)} labels, got shape {y.shape}")
        self._encoder = LabelEncoder().fit(y)
        self.classes_ = self._encoder.classes_
        config = self._train_config()
        data = LabeledDataset(X, self._encoder.transform(y), max(len(self.classes_), 2), "fit")
        trainer = L2DTrainer(config, data.n_classes)
        self.metrics_ = trainer.fit(data)
        self.model_ = trainer.model
        return self

    def _log_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = check_images(X)
        with no_grad():
            return np.concatenate([self.model_.log_proba(Tensor(X[s : s + 256])).data for s in range(0, len(X), 256)])

    def predict_proba(self, X) -> np.ndarray:
        return np.exp(self._log_proba(X))[:, : len(self.classes_)]

    def predict(self, X) -> np.ndarray:
        scores = self._log_proba(X)[:, : len(self.classes_)]
        return self.classes_[scores.argmax(axis=1)]

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        return self.model_.transform(check_images(X))

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y).transform(X)

    def save(self, path) -> None:
        check_is_fitted(self, "model_")
        self.model_.save(path)

    def load_model(self, path, classes=None) -> "L2DClassifier":
        """Attach a saved :class:`TaskModel`; ``classes`` defaults to ``0..C-1``."""
        self.model_ = TaskModel.load(path)
        self.classes_ = np.arange(self.model_.n_classes) if classes is None else np.asarray(classes)
        return self
