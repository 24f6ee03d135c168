"""Finite-difference verification of the analytic gradients."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from . import model as nn_model
from .model import CnnModel


def finite_difference(loss_fn, array: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of loss_fn() wrt an array it reads."""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    grad_flat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = loss_fn()
        flat[i] = orig - h
        down = loss_fn()
        flat[i] = orig
        grad_flat[i] = (up - down) / (2.0 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-3) -> float:
    """Max elementwise |a-b| / max(|a|, |b|, floor)."""
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def check_gradients(
    model: CnnModel,
    docs: Sequence,
    features,
    log_targets: np.ndarray,
    ordinal_targets,
    gamma: float,
    names: Optional[Sequence[str]] = None,
    h: float = 1e-5,
) -> dict[str, float]:
    """Compare analytic and numeric gradients; returns max relative error
    per parameter.  Mutates parameters transiently but restores them."""

    def loss_fn() -> float:
        traces = nn_model.forward_batch(model, docs, features=features)
        loss, _ = nn_model.joint_loss(traces, log_targets, ordinal_targets, gamma)
        return loss

    traces = nn_model.forward_batch(model, docs, features=features, want_cache=True)
    analytic = nn_model.backward(model, traces, log_targets, ordinal_targets, gamma)
    errors = {}
    for name in names if names is not None else sorted(model.params):
        numeric = finite_difference(loss_fn, model.params[name], h=h)
        if name == "emb":
            numeric[nn_model.PAD_INDEX, :] = 0.0
        errors[name] = relative_error(analytic[name], numeric)
    return errors
