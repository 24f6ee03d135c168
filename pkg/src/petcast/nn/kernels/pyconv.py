"""Pure NumPy convolution and pooling kernels (single document).

Semantics shared with the compiled backend: valid convolution of width-w
filters over the token axis, ReLU, then max over positions keeping the
first position that attains the maximum.  Gradients flow only through
filters whose pooled activation is positive.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv_forward(emb: np.ndarray, weights: np.ndarray, bias: np.ndarray):
    """Return (pooled, argmax) for one document.

    emb is (T, d); weights is (n_f, w*d) with the w windows flattened in
    position-major order; bias is (n_f,).  Requires T >= w.
    """
    t, d = emb.shape
    n_f, wd = weights.shape
    w = wd // d
    if w * d != wd:
        raise ValueError(f"filter width {wd} not a multiple of embedding dim {d}")
    if t - w + 1 < 1:
        raise ValueError(f"document of {t} tokens shorter than window {w}")
    windows = sliding_window_view(emb, (w, d)).reshape(t - w + 1, wd)
    act = windows @ weights.T + bias
    np.maximum(act, 0.0, out=act)
    argmax = np.argmax(act, axis=0).astype(np.int64)
    pooled = act[argmax, np.arange(n_f)]
    return pooled, argmax


def conv_backward(
    emb: np.ndarray,
    weights: np.ndarray,
    g: np.ndarray,
    pooled: np.ndarray,
    argmax: np.ndarray,
    d_emb: np.ndarray,
    d_weights: np.ndarray,
    d_bias: np.ndarray,
) -> None:
    """Accumulate gradients for one document in place.

    g is dLoss/dpooled.  Filters pooled at zero (ReLU floor) pass nothing.
    """
    d = emb.shape[1]
    n_f, wd = weights.shape
    w = wd // d
    active = pooled > 0.0
    if not np.any(active):
        return
    g_act = np.where(active, g, 0.0)
    rows = argmax[:, None] + np.arange(w)[None, :]
    windows = emb[rows].reshape(n_f, wd)
    d_bias += g_act
    d_weights += g_act[:, None] * windows
    contrib = (g_act[:, None] * weights).reshape(n_f * w, d)
    np.add.at(d_emb, rows.ravel(), contrib)
