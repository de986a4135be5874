"""Classification and reconstruction losses with analytic gradients."""

from __future__ import annotations

import numpy as np

from ..errors import LabelOutOfRange
from .layers import softmax_lastaxis


def cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean softmax cross-entropy, stabilized by max subtraction.

    Returns (loss, dlogits, probs); probs has shape (batch, C).
    """
    B, C = logits.shape
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= C:
        raise LabelOutOfRange(f"labels must lie in [0, {C})")
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsumexp - z[np.arange(B), labels]))
    probs = softmax_lastaxis(logits)
    dlogits = probs.copy()
    dlogits[np.arange(B), labels] -= 1.0
    dlogits /= logits.dtype.type(B)
    return loss, dlogits.astype(logits.dtype), probs


def mse(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over all elements. Returns (loss, dpred)."""
    diff = pred - target
    loss = float(np.mean(diff * diff))
    dpred = (2.0 / diff.size) * diff
    return loss, dpred.astype(pred.dtype)
