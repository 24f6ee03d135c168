"""Convolutional regression model over token sequences.

A document is embedded, convolved at several window widths, max-pooled
per filter and squashed with tanh; hand features pass through their own
tanh layer; the concatenation feeds an ELU multilayer perceptron ending
in one scalar (the predicted log count).  Optional heads predict, per
count threshold, the probability that the final count reaches it.

Gradients are computed analytically in ``backward``; nothing here is
autodifferentiated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..errors import StateError, ValidationError
from ..text import PAD_INDEX
from . import kernels

PROB_EPS = 1e-7


@dataclass(frozen=True)
class ModelHyper:
    vocab_size: int
    embed_dim: int
    widths: tuple = (1, 2, 3)
    n_filters: int = 100
    feature_dim: int = 0
    feature_hidden: int = 16
    hidden_sizes: tuple = (64,)
    n_thresholds: int = 0
    use_features: bool = False
    use_ordinal: bool = False
    elu_alpha: float = 1.0

    def __post_init__(self):
        if self.vocab_size < 2 or self.embed_dim < 1:
            raise ValidationError("vocab_size >= 2 and embed_dim >= 1 required")
        if not self.widths or list(self.widths) != sorted(set(self.widths)):
            raise ValidationError("widths must be distinct and ascending")
        if min(self.widths) < 1:
            raise ValidationError("widths must be positive")
        if self.n_filters < 1 or not self.hidden_sizes:
            raise ValidationError("need filters and at least one hidden layer")
        if self.use_features and (self.feature_dim < 1 or self.feature_hidden < 1):
            raise ValidationError("feature path enabled but dimensions unset")
        if self.use_ordinal and self.n_thresholds < 1:
            raise ValidationError("ordinal heads enabled but no thresholds")
        if self.elu_alpha <= 0:
            raise ValidationError("elu_alpha must be positive")

    @property
    def text_dim(self) -> int:
        return self.n_filters * len(self.widths)

    @property
    def fused_dim(self) -> int:
        return self.text_dim + (self.feature_hidden if self.use_features else 0)


def param_shapes(hyper: ModelHyper) -> dict[str, tuple]:
    """Every parameter tensor the model owns, keyed by name."""
    shapes: dict[str, tuple] = {"emb": (hyper.vocab_size, hyper.embed_dim)}
    for w in hyper.widths:
        shapes[f"conv_w{w}"] = (hyper.n_filters, w * hyper.embed_dim)
        shapes[f"conv_b{w}"] = (hyper.n_filters,)
    if hyper.use_features:
        shapes["feat_V"] = (hyper.feature_hidden, hyper.feature_dim)
        shapes["feat_b"] = (hyper.feature_hidden,)
    in_dim = hyper.fused_dim
    for i, size in enumerate(hyper.hidden_sizes):
        shapes[f"dense_W{i}"] = (size, in_dim)
        shapes[f"dense_b{i}"] = (size,)
        in_dim = size
    shapes["out_w"] = (in_dim,)
    shapes["out_b"] = (1,)
    if hyper.use_ordinal:
        shapes["ord_U"] = (hyper.n_thresholds, hyper.fused_dim)
        shapes["ord_b"] = (hyper.n_thresholds,)
    return shapes


@dataclass
class CnnModel:
    hyper: ModelHyper
    params: dict = field(default_factory=dict)

    def validate(self) -> "CnnModel":
        expected = param_shapes(self.hyper)
        if set(self.params) != set(expected):
            raise ValidationError(
                f"parameter names {sorted(self.params)} != expected {sorted(expected)}"
            )
        for name, shape in expected.items():
            got = self.params[name].shape
            if got != shape:
                raise ValidationError(f"parameter {name} has shape {got}, expected {shape}")
        return self


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int, shape) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def create_model(
    hyper: ModelHyper, seed: int, embeddings: Optional[np.ndarray] = None
) -> CnnModel:
    """Initialize parameters; draw order is fixed so seeds reproduce."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    if embeddings is not None:
        emb = np.array(embeddings, dtype=np.float64)
        if emb.shape != (hyper.vocab_size, hyper.embed_dim):
            raise ValidationError(
                f"embedding shape {emb.shape} != {(hyper.vocab_size, hyper.embed_dim)}"
            )
    else:
        emb = rng.uniform(-0.05, 0.05, size=(hyper.vocab_size, hyper.embed_dim))
    emb[PAD_INDEX, :] = 0.0
    params["emb"] = emb
    for w in hyper.widths:
        fan_in = w * hyper.embed_dim
        params[f"conv_w{w}"] = _glorot(rng, hyper.n_filters, fan_in, (hyper.n_filters, fan_in))
        params[f"conv_b{w}"] = np.zeros(hyper.n_filters)
    if hyper.use_features:
        params["feat_V"] = _glorot(
            rng, hyper.feature_hidden, hyper.feature_dim,
            (hyper.feature_hidden, hyper.feature_dim),
        )
        params["feat_b"] = np.zeros(hyper.feature_hidden)
    in_dim = hyper.fused_dim
    for i, size in enumerate(hyper.hidden_sizes):
        params[f"dense_W{i}"] = _glorot(rng, size, in_dim, (size, in_dim))
        params[f"dense_b{i}"] = np.zeros(size)
        in_dim = size
    params["out_w"] = _glorot(rng, 1, in_dim, (in_dim,))
    params["out_b"] = np.zeros(1)
    if hyper.use_ordinal:
        params["ord_U"] = _glorot(
            rng, hyper.n_thresholds, hyper.fused_dim,
            (hyper.n_thresholds, hyper.fused_dim),
        )
        params["ord_b"] = np.zeros(hyper.n_thresholds)
    return CnnModel(hyper=hyper, params=params).validate()


def _elu(z: np.ndarray, alpha: float) -> np.ndarray:
    return np.where(z > 0.0, z, alpha * np.expm1(np.minimum(z, 0.0)))


def _elu_deriv_from_output(a: np.ndarray, alpha: float) -> np.ndarray:
    # elu is monotone with elu(0)=0, so the output sign recovers the input
    # sign and alpha*exp(z) = elu(z) + alpha on the negative side
    return np.where(a > 0.0, 1.0, a + alpha)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class ForwardTrace:
    y_hat: float
    ordinal_probs: Optional[np.ndarray]
    hidden: np.ndarray
    feature_hidden: Optional[np.ndarray]
    cache: Optional[dict] = None


def pad_ids(ids, min_len: int = 3, max_len: int = 400) -> np.ndarray:
    """Truncate to max_len, then right-pad with the pad index to min_len."""
    if min_len < 1 or max_len < min_len:
        raise ValidationError("need 1 <= min_len <= max_len")
    arr = np.asarray(ids, dtype=np.int64)[:max_len]
    if arr.size < min_len:
        arr = np.concatenate([arr, np.full(min_len - arr.size, PAD_INDEX, dtype=np.int64)])
    return arr


def forward(
    model: CnnModel,
    token_ids,
    features=None,
    want_cache: bool = False,
) -> ForwardTrace:
    hyper = model.hyper
    params = model.params
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim != 1 or ids.size < max(hyper.widths):
        raise ValidationError(
            f"need a 1-D id sequence of at least {max(hyper.widths)} tokens"
        )
    if ids.min() < 0 or ids.max() >= hyper.vocab_size:
        raise IndexError("token id out of vocabulary range")
    emb_seq = params["emb"][ids]

    pooled_by_width = {}
    segments = []
    for w in hyper.widths:
        pooled, argmax = kernels.conv_forward(
            emb_seq, params[f"conv_w{w}"], params[f"conv_b{w}"]
        )
        pooled_by_width[w] = (pooled, argmax)
        segments.append(pooled)
    h = np.tanh(np.concatenate(segments))

    c = None
    f = None
    if hyper.use_features:
        if features is None:
            raise ValidationError("model expects a feature vector")
        f = np.asarray(features, dtype=np.float64)
        if f.shape != (hyper.feature_dim,):
            raise ValidationError(
                f"feature vector shape {f.shape} != ({hyper.feature_dim},)"
            )
        if not np.all(np.isfinite(f)):
            raise ValidationError("feature vector contains non-finite values")
        c = np.tanh(params["feat_V"] @ f + params["feat_b"])
        x0 = np.concatenate([h, c])
    else:
        x0 = h

    acts = [x0]
    a = x0
    for i in range(len(hyper.hidden_sizes)):
        z = params[f"dense_W{i}"] @ a + params[f"dense_b{i}"]
        a = _elu(z, hyper.elu_alpha)
        acts.append(a)
    y_lin = float(params["out_w"] @ a + params["out_b"][0])
    y_hat = y_lin if y_lin > 0 else hyper.elu_alpha * math.expm1(y_lin)

    probs = None
    if hyper.use_ordinal:
        probs = _sigmoid(params["ord_U"] @ x0 + params["ord_b"])

    cache = None
    if want_cache:
        cache = {
            "ids": ids,
            "emb_seq": emb_seq,
            "pooled_by_width": pooled_by_width,
            "h": h,
            "c": c,
            "f": f,
            "acts": acts,
            "probs": probs,
        }
    return ForwardTrace(
        y_hat=y_hat, ordinal_probs=probs, hidden=h, feature_hidden=c, cache=cache
    )


def forward_batch(model, docs, features=None, want_cache=False) -> list:
    traces = []
    for i, ids in enumerate(docs):
        f = None if features is None else features[i]
        traces.append(forward(model, ids, features=f, want_cache=want_cache))
    return traces


def _bce(probs: np.ndarray, bits: np.ndarray) -> float:
    p = np.clip(probs, PROB_EPS, 1.0 - PROB_EPS)
    return float(-np.mean(bits * np.log(p) + (1.0 - bits) * np.log1p(-p)))


def joint_loss(
    traces: Sequence[ForwardTrace],
    log_targets: np.ndarray,
    ordinal_targets: Optional[np.ndarray],
    gamma: float,
) -> tuple[float, dict]:
    """Mean squared error on log counts plus gamma times the mean
    binary cross entropy over all threshold heads."""
    if gamma < 0:
        raise ValidationError("gamma must be non-negative")
    n = len(traces)
    y = np.asarray(log_targets, dtype=np.float64)
    if n == 0 or y.shape != (n,):
        raise ValidationError(f"need one target per trace, got {y.shape} for {n}")
    y_hat = np.array([t.y_hat for t in traces])
    reg = float(np.mean((y_hat - y) ** 2))
    aux = 0.0
    with_heads = traces[0].ordinal_probs is not None
    if gamma > 0 and with_heads:
        if ordinal_targets is None:
            raise ValidationError("ordinal targets required when gamma > 0")
        bits = np.asarray(ordinal_targets, dtype=np.float64)
        probs = np.stack([t.ordinal_probs for t in traces])
        if bits.shape != probs.shape:
            raise ValidationError(f"ordinal targets shape {bits.shape} != {probs.shape}")
        aux = _bce(probs, bits)
    return reg + gamma * aux, {"reg": reg, "aux": aux}


def backward(
    model: CnnModel,
    traces: Sequence[ForwardTrace],
    log_targets: np.ndarray,
    ordinal_targets: Optional[np.ndarray],
    gamma: float,
) -> dict:
    """Exact gradients of the joint loss for one mini-batch.

    Returns an array per parameter, emb included at full shape with the
    pad row forced to zero (that row never trains).
    """
    hyper = model.hyper
    params = model.params
    n = len(traces)
    y = np.asarray(log_targets, dtype=np.float64)
    if n == 0 or y.shape != (n,):
        raise ValidationError(f"need one target per trace, got {y.shape} for {n}")
    bits = None
    use_aux = gamma > 0 and hyper.use_ordinal
    if use_aux:
        if ordinal_targets is None:
            raise ValidationError("ordinal targets required when gamma > 0")
        bits = np.asarray(ordinal_targets, dtype=np.float64)
        if bits.shape != (n, hyper.n_thresholds):
            raise ValidationError(
                f"ordinal targets shape {bits.shape} != {(n, hyper.n_thresholds)}"
            )
    grads = {name: np.zeros_like(p) for name, p in params.items()}
    n_layers = len(hyper.hidden_sizes)

    for i, trace in enumerate(traces):
        cache = trace.cache
        if cache is None:
            raise StateError("backward needs traces computed with want_cache=True")
        acts = cache["acts"]

        d_y = 2.0 * (trace.y_hat - y[i]) / n
        d_out = d_y * (1.0 if trace.y_hat > 0 else trace.y_hat + hyper.elu_alpha)
        grads["out_w"] += d_out * acts[-1]
        grads["out_b"][0] += d_out
        d_a = d_out * params["out_w"]
        for layer in range(n_layers - 1, -1, -1):
            d_z = d_a * _elu_deriv_from_output(acts[layer + 1], hyper.elu_alpha)
            grads[f"dense_W{layer}"] += np.outer(d_z, acts[layer])
            grads[f"dense_b{layer}"] += d_z
            d_a = params[f"dense_W{layer}"].T @ d_z
        d_x0 = d_a

        if use_aux:
            probs = cache["probs"]
            live = (probs > PROB_EPS) & (probs < 1.0 - PROB_EPS)
            d_logit = np.where(live, probs - bits[i], 0.0) * (
                gamma / (n * hyper.n_thresholds)
            )
            grads["ord_U"] += np.outer(d_logit, acts[0])
            grads["ord_b"] += d_logit
            d_x0 = d_x0 + params["ord_U"].T @ d_logit

        h = cache["h"]
        d_h_pre = d_x0[: hyper.text_dim] * (1.0 - h * h)
        if hyper.use_features:
            c = cache["c"]
            d_c_pre = d_x0[hyper.text_dim :] * (1.0 - c * c)
            grads["feat_V"] += np.outer(d_c_pre, cache["f"])
            grads["feat_b"] += d_c_pre

        emb_seq = cache["emb_seq"]
        d_emb_seq = np.zeros_like(emb_seq)
        offset = 0
        for w in hyper.widths:
            pooled, argmax = cache["pooled_by_width"][w]
            kernels.conv_backward(
                emb_seq,
                params[f"conv_w{w}"],
                d_h_pre[offset : offset + hyper.n_filters],
                pooled,
                argmax,
                d_emb_seq,
                grads[f"conv_w{w}"],
                grads[f"conv_b{w}"],
            )
            offset += hyper.n_filters
        np.add.at(grads["emb"], cache["ids"], d_emb_seq)

    grads["emb"][PAD_INDEX, :] = 0.0
    return grads


def predict_count(
    model: CnnModel,
    token_ids,
    features=None,
    base: float = math.e,
    min_len: int = 3,
    max_len: int = 400,
) -> float:
    """Predicted signature count for one document.

    Runs the forward pass and maps the log-space output back to a count,
    floored at log-count zero so the result is always >= 1.
    """
    ids = pad_ids(token_ids, min_len=min_len, max_len=max_len)
    trace = forward(model, ids, features=features)
    return count_from_log(trace.y_hat, base=base)


def count_from_log(y_hat: float, base: float = math.e) -> float:
    """Log prediction back to a count; the floor keeps counts >= 1."""
    return float(base ** max(y_hat, 0.0))
