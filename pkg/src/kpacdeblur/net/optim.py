"""Adam and the MAE training loss."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatchError
from .model import NetworkWeights

__all__ = ["adam_step", "mae_loss", "ADAM_DEFAULTS"]

ADAM_DEFAULTS = {"lr": 1e-4, "beta1": 0.9, "beta2": 0.99, "eps": 1e-8}


def adam_step(w: NetworkWeights, grads: dict, lr: float = 1e-4, beta1: float = 0.9,
              beta2: float = 0.99, eps: float = 1e-8) -> NetworkWeights:
    """One bias-corrected Adam update, applied in place to ``w``."""
    if set(grads) != set(w.params):
        missing = set(w.params) ^ set(grads)
        raise ShapeMismatchError(f"gradients do not match parameters: {sorted(missing)[:5]}")
    w.step += 1
    t = w.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in w.params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatchError(f"{name}: gradient {g.shape} vs parameter {p.shape}")
        m = w.m.get(name)
        if m is None:
            m = w.m[name] = np.zeros_like(p)
            w.v[name] = np.zeros_like(p)
        v = w.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return w


def mae_loss(pred, target) -> tuple[float, np.ndarray]:
    """Mean absolute error and its subgradient (``sign(pred - target) / count``, 0 at ties)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"prediction {pred.shape} vs target {target.shape}")
    diff = pred - target
    return float(np.mean(np.abs(diff))), np.sign(diff) / diff.size
