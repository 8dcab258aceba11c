"""Losses returning ``(mean loss, d loss / d logits)``."""

from __future__ import annotations

import numpy as np

from .layers import sigmoid, softmax


def _softplus(x):
    return np.logaddexp(0.0, x)


def bce_logits_loss(logits, targets, pos_weight=1.0):
    """Binary cross-entropy on raw logits with a positive-class weight.

    Targets may be soft (in [0, 1]); that is how distillation feeds teacher
    probabilities through the same code path.
    """
    z0 = np.asarray(logits)
    dtype = z0.dtype if np.issubdtype(z0.dtype, np.floating) else np.float64
    z = z0.reshape(-1).astype(np.float64)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if z.shape != y.shape:
        raise ValueError(f"logits {z0.shape} vs targets {np.shape(targets)}")
    n = len(z)
    # -log sigmoid(z) = softplus(-z); -log(1 - sigmoid(z)) = softplus(z)
    loss = np.sum(pos_weight * y * _softplus(-z) + (1 - y) * _softplus(z)) / n
    s = sigmoid(z)
    grad = (pos_weight * y * (s - 1) + (1 - y) * s) / n
    return float(loss), grad.reshape(z0.shape).astype(dtype)


def cross_entropy_loss(logits, targets):
    """Softmax cross-entropy; ``targets`` are class indices or (B, K) distributions."""
    z = np.asarray(logits)
    B, K = z.shape
    zmax = z.max(axis=1, keepdims=True)
    logp = z - zmax - np.log(np.sum(np.exp(z - zmax), axis=1, keepdims=True))
    t = np.asarray(targets)
    if t.ndim == 1:
        q = np.zeros_like(z)
        q[np.arange(B), t.astype(int)] = 1.0
    else:
        q = t.astype(z.dtype)
    loss = -np.sum(q * logp) / B
    grad = (softmax(z, axis=1) * q.sum(axis=1, keepdims=True) - q) / B
    return float(loss), grad
