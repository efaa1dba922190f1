"""Semi-supervised training loop.

Each outer iteration: train on labeled data through the supervised head,
regenerate pseudo-labels for the unlabeled pool, train on pseudo-labels
through the unsupervised head, then score the validation set. Early stop on
validation Macro-F1 patience; the best-validation snapshot is returned.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .cum import CumConfig, reweight_uncertain
from .losses import class_weights_from_batch, one_hot
from .model import RBMLPModel
from .nn import Adam, NaNGradientError
from .rng import substream


@dataclass
class TrainConfig:
    batch_size: int = 2000
    max_outer_iters: int = 60
    patience: int = 15
    labeled_epochs: int = 3    # epochs over labeled data per outer iteration
    unlabeled_epochs: int = 1  # epochs over pseudo-labeled data per outer iteration
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    alpha_sup: float = 0.2
    alpha_unsup: float = 0.2
    use_class_weights: bool = True
    cum_enabled: bool = False
    cum: CumConfig = field(default_factory=CumConfig)
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass
class PseudoLabels:
    labels: np.ndarray      # argmax class per unlabeled row
    confidence: np.ndarray  # max probability per row


@dataclass
class EpochRecord:
    outer_iter: int
    sup_loss: float
    unsup_loss: float
    val_acc: float
    val_f1: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_iter: int = -1
    error: str | None = None

    def write_log(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("iter\tsup_loss\tunsup_loss\tval_acc\tval_f1\n")
            for r in self.records:
                fh.write(f"{r.outer_iter}\t{r.sup_loss:.6f}\t{r.unsup_loss:.6f}"
                         f"\t{r.val_acc:.6f}\t{r.val_f1:.6f}\n")


def predict_probs(model: RBMLPModel, x: np.ndarray, branch: str = "sup",
                  batch_size: int = 4096) -> np.ndarray:
    """Eval-mode class probabilities, batched."""
    if len(x) == 0:
        return np.zeros((0, model.config.num_classes), dtype=np.float32)
    chunks = []
    for lo in range(0, len(x), batch_size):
        p_sup, p_unsup, _ = model.forward(x[lo:lo + batch_size], train=False)
        chunks.append(p_sup if branch == "sup" else p_unsup)
    return np.concatenate(chunks, axis=0)


def predict(model: RBMLPModel, x: np.ndarray, branch: str = "sup") -> np.ndarray:
    return predict_probs(model, x, branch).argmax(axis=1)


def evaluate(model: RBMLPModel, x: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    cm = metrics.confusion(predict(model, x), labels, model.config.num_classes)
    return metrics.accuracy(cm), metrics.macro_f1(cm)


def _train_epochs(model, optimizer, x, labels, branch, alpha, epochs, config, rng):
    """Shuffled minibatch epochs through one head; returns the mean batch loss."""
    num_classes = model.config.num_classes
    losses = []
    for _ in range(epochs):
        order = rng.permutation(len(x))
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo:lo + config.batch_size]
            if len(idx) < 2:
                continue  # BN train mode needs at least two rows
            xb, yb = x[idx], labels[idx]
            if config.cum_enabled:
                probs = predict_probs(model, xb, branch)
                xb = reweight_uncertain(xb, probs, model.l1, config.cum)
            delta = class_weights_from_batch(yb, num_classes) \
                if config.use_class_weights else 1.0
            losses.append(model.train_step(
                xb, one_hot(yb, num_classes), branch, delta, alpha, optimizer))
    return float(np.mean(losses)) if losses else 0.0


def train_prototype(model: RBMLPModel, x: np.ndarray, labels: np.ndarray,
                    config: TrainConfig, optimizer: Adam, rng,
                    epochs: int | None = None) -> float:
    """Supervised-head training on the labeled set."""
    if len(x) == 0:
        raise ValueError("labeled set is empty")
    if len(np.unique(labels)) == 1:
        warnings.warn("labeled set has a single class; class weights are degenerate")
    n = config.labeled_epochs if epochs is None else epochs
    return _train_epochs(model, optimizer, x, labels, "sup",
                         config.alpha_sup, n, config, rng)


def generate_pseudo_labels(model: RBMLPModel, x: np.ndarray) -> PseudoLabels:
    probs = predict_probs(model, x, "sup")
    return PseudoLabels(labels=probs.argmax(axis=1), confidence=probs.max(axis=1))


def train_with_pseudo(model: RBMLPModel, x: np.ndarray, pseudo: PseudoLabels,
                      config: TrainConfig, optimizer: Adam, rng,
                      epochs: int | None = None) -> float:
    """Unsupervised-head training on the pseudo-labeled pool."""
    if len(pseudo.labels) != len(x):
        raise ValueError("pseudo labels do not cover the unlabeled set")
    n = config.unlabeled_epochs if epochs is None else epochs
    return _train_epochs(model, optimizer, x, pseudo.labels, "unsup",
                         config.alpha_unsup, n, config, rng)


def rpm_loop(model: RBMLPModel, labeled: tuple[np.ndarray, np.ndarray],
             unlabeled: np.ndarray, validation: tuple[np.ndarray, np.ndarray],
             config: TrainConfig) -> tuple[RBMLPModel, TrainHistory]:
    """Run the outer loop; returns the best-validation checkpoint and history."""
    x_lab, y_lab = labeled
    x_val, y_val = validation
    optimizer = model.make_optimizer(config.lr, config.beta1, config.beta2)
    rng = substream(config.seed, "shuffle")
    history = TrainHistory()
    best_f1 = -np.inf
    best_model = model.snapshot()
    stale = 0
    for outer in range(1, config.max_outer_iters + 1):
        try:
            sup_loss = train_prototype(model, x_lab, y_lab, config, optimizer, rng)
            if len(unlabeled):
                pseudo = generate_pseudo_labels(model, unlabeled)
                unsup_loss = train_with_pseudo(model, unlabeled, pseudo,
                                               config, optimizer, rng)
            else:
                unsup_loss = 0.0
        except NaNGradientError as exc:
            history.error = str(exc)
            break
        val_acc, val_f1 = evaluate(model, x_val, y_val)
        history.records.append(EpochRecord(outer, sup_loss, unsup_loss, val_acc, val_f1))
        if val_f1 > best_f1:
            best_f1 = val_f1
            best_model = model.snapshot()
            history.best_iter = outer
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return best_model, history
