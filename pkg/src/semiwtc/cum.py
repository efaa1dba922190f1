"""Class Uncertainty Module: input-feature re-weighting for low-confidence samples.

Samples whose max predicted probability is at or below a threshold get each
input feature scaled by the L2 norm of the corresponding first-layer weight
column, suppressing features the network has learned to ignore.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import DenseLayer


@dataclass
class CumConfig:
    threshold: float = 0.75
    normalize_weights: bool = True

    def __post_init__(self):
        if not (0 < self.threshold < 1):
            raise ValueError("threshold must be in (0, 1)")


def uncertainty_mask(probs: np.ndarray, threshold: float = 0.75) -> np.ndarray:
    """True for rows whose max probability is no more than the threshold."""
    return probs.max(axis=1) <= threshold


def feature_weights(first_layer: DenseLayer, normalize: bool = True) -> np.ndarray:
    """Per-input-feature weight: L2 norm of the matching first-layer column."""
    w = np.linalg.norm(first_layer.W, axis=0)
    if normalize:
        mean = w.mean()
        if mean > 0:
            w = w / mean
    return w.astype(np.float32)


def apply_cum(x: np.ndarray, weights: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Scale the features of masked rows; unmasked rows pass through unchanged."""
    if len(weights) != x.shape[1]:
        raise ValueError("weights length must equal feature count")
    out = np.array(x, copy=True)
    out[mask] = out[mask] * weights
    return out


def reweight_uncertain(x: np.ndarray, probs: np.ndarray, first_layer: DenseLayer,
                       config: CumConfig) -> np.ndarray:
    """Convenience wrapper: mask by confidence, then re-weight masked rows."""
    mask = uncertainty_mask(probs, config.threshold)
    if not mask.any():
        return x
    return apply_cum(x, feature_weights(first_layer, config.normalize_weights), mask)
