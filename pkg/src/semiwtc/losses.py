"""Loss functions: weighted cross-entropy, MSE, their combination, per-batch
class weights, and the hinge-on-cosine-distance dilation loss."""

from __future__ import annotations

import numpy as np

LOG_CLAMP = 1e-12
WEIGHT_CLIP = (0.1, 10.0)


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), num_classes), dtype=np.float32)
    out[np.arange(len(labels)), labels] = 1.0
    return out


def cce(probs: np.ndarray, targets: np.ndarray, delta: np.ndarray | float = 1.0) -> float:
    """Class-weighted categorical cross-entropy, mean over samples."""
    p = np.maximum(probs, LOG_CLAMP)
    weighted = targets * np.asarray(delta) * np.log(p)
    return float(-weighted.sum() / len(probs))


def cce_grad(probs: np.ndarray, targets: np.ndarray,
             delta: np.ndarray | float = 1.0) -> np.ndarray:
    """Gradient of cce wrt the probability matrix."""
    p = np.maximum(probs, LOG_CLAMP)
    return (-(targets * np.asarray(delta) / p) / len(probs)).astype(probs.dtype)


def mse(probs: np.ndarray, targets: np.ndarray) -> float:
    """Mean over samples of the squared distance between target and prediction rows."""
    diff = targets - probs
    return float((diff * diff).sum() / len(probs))


def mse_grad(probs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    return (2.0 * (probs - targets) / len(probs)).astype(probs.dtype)


def wtc_loss(probs: np.ndarray, targets: np.ndarray, delta: np.ndarray | float,
             alpha: float) -> float:
    return cce(probs, targets, delta) + alpha * mse(probs, targets)


def wtc_grad(probs: np.ndarray, targets: np.ndarray, delta: np.ndarray | float,
             alpha: float) -> np.ndarray:
    return cce_grad(probs, targets, delta) + alpha * mse_grad(probs, targets)


def class_weights_from_batch(labels: np.ndarray, num_classes: int,
                             clip: tuple[float, float] = WEIGHT_CLIP) -> np.ndarray:
    """delta_j = N / (C * n_j) for classes present in the batch, clipped; 1 otherwise."""
    if len(labels) == 0:
        raise ValueError("empty batch")
    counts = np.bincount(labels, minlength=num_classes)
    delta = np.ones(num_classes, dtype=np.float32)
    present = counts > 0
    delta[present] = len(labels) / (num_classes * counts[present])
    return np.clip(delta, clip[0], clip[1])


def _cosines(feats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(feats, axis=1)
    if np.any(norms == 0):
        raise ValueError("zero-norm class feature vector; cosine undefined")
    unit = feats / norms[:, None]
    return unit @ unit.T, norms


def dilation_loss(class_feats: np.ndarray, margin: float = 1.0) -> float:
    """Sum over ordered class pairs of max(0, margin - (1 - cos(X_i, X_j)))."""
    feats = np.asarray(class_feats, dtype=np.float64)
    cos, _ = _cosines(feats)
    n = len(feats)
    hinge = np.maximum(0.0, margin - (1.0 - cos))
    np.fill_diagonal(hinge, 0.0)
    return float(hinge.sum())


def dilation_loss_grad(class_feats: np.ndarray, margin: float = 1.0) -> np.ndarray:
    """Gradient of dilation_loss wrt each class feature vector."""
    feats = np.asarray(class_feats, dtype=np.float64)
    cos, norms = _cosines(feats)
    unit = feats / norms[:, None]
    active = (margin - (1.0 - cos)) > 0
    np.fill_diagonal(active, False)
    # d cos(x_i, x_j) / d x_i = (u_j - cos * u_i) / |x_i|; each unordered pair
    # contributes twice (orderings (i,j) and (j,i)), hence the factor 2.
    grad = np.zeros_like(feats)
    for i in range(len(feats)):
        js = np.where(active[i])[0]
        if len(js) == 0:
            continue
        contrib = unit[js] - cos[i, js][:, None] * unit[i]
        grad[i] = 2.0 * contrib.sum(axis=0) / norms[i]
    return grad
