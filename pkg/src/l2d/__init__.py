"""Style-complement augmentation with mutual-information objectives for single-domain generalization."""

from .config import ConfigError, ExperimentConfig
from .data import EVAL_SUITE, LabeledDataset, ShiftSpec, apply_shift, load_idx, make_eval_suite, read_idx
from .estimator import L2DClassifier
from .model import LATENT_DIM, TaskModel, accuracy
from .objectives import (
    ContrastiveConfig,
    MMDConfig,
    VariationalGaussianHead,
    class_conditional_mmd,
    club_estimate,
    cross_entropy_task,
    infonce_estimate,
    likelihood_loss,
    supcon_loss,
)
from .style import StyleComplementModule, StyleTransformation
from .tensor import Tensor, backward, no_grad
from .trainer import ABLATIONS, L2DTrainer, RunMetrics, TrainConfig, evaluate, train

__version__ = "0.1.0"
