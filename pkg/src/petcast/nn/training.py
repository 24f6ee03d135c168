"""Mini-batch training with early stopping on development MAE.

Every source of randomness (parameter init, epoch shuffles) flows from
the config seed, so a rerun with the same config and data reproduces the
history exactly.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..errors import ValidationError
from ..text import EmbeddingTable, Vocabulary, tokenize
from . import model as nn_model
from .model import CnnModel, ModelHyper
from .optim import adam_step, init_adam

logger = logging.getLogger(__name__)

GAMMA_GRID = (0.1, 0.3, 1.0, 3.0)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    lr: float = 1e-3
    gamma: float = 0.3
    patience: int = 5
    seed: int = 0
    embed_dim: int = 100
    widths: tuple = (1, 2, 3)
    n_filters: int = 100
    feature_hidden: int = 16
    hidden_size: int = 64
    extra_hidden_layer: bool = False
    use_features: bool = True
    use_ordinal: bool = True
    elu_alpha: float = 1.0
    min_len: int = 3
    max_len: int = 400

    def __post_init__(self):
        if self.gamma < 0:
            raise ValidationError("gamma must be non-negative")
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValidationError("epochs, batch_size and patience must be positive")
        if self.min_len < max(self.widths):
            raise ValidationError("min_len must cover the widest filter")

    @property
    def hidden_sizes(self) -> tuple:
        n = 2 if self.extra_hidden_layer else 1
        return (self.hidden_size,) * n


@dataclass
class Dataset:
    """Row-aligned training arrays for one split."""

    docs: list
    log_targets: np.ndarray
    ordinal_bits: Optional[np.ndarray] = None
    features: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.docs)
        self.log_targets = np.asarray(self.log_targets, dtype=np.float64)
        if n == 0 or self.log_targets.shape != (n,):
            raise ValidationError(f"need one target per document, got {n} docs")
        if self.ordinal_bits is not None:
            self.ordinal_bits = np.asarray(self.ordinal_bits, dtype=np.float64)
            if self.ordinal_bits.shape[0] != n:
                raise ValidationError("ordinal bit rows do not match documents")
        if self.features is not None:
            self.features = np.asarray(self.features, dtype=np.float64)
            if self.features.shape[0] != n:
                raise ValidationError("feature rows do not match documents")

    def __len__(self) -> int:
        return len(self.docs)


def build_hyper(
    config: TrainConfig, vocab_size: int, n_thresholds: int, feature_dim: int = 0
) -> ModelHyper:
    return ModelHyper(
        vocab_size=vocab_size,
        embed_dim=config.embed_dim,
        widths=tuple(config.widths),
        n_filters=config.n_filters,
        feature_dim=feature_dim,
        feature_hidden=config.feature_hidden,
        hidden_sizes=config.hidden_sizes,
        n_thresholds=n_thresholds if config.use_ordinal else 0,
        use_features=config.use_features,
        use_ordinal=config.use_ordinal,
        elu_alpha=config.elu_alpha,
    )


def dev_mae(model: CnnModel, data: Dataset) -> float:
    """Mean absolute error in log space, predictions floored at zero."""
    errors = []
    for i, ids in enumerate(data.docs):
        f = None if data.features is None else data.features[i]
        trace = nn_model.forward(model, ids, features=f)
        errors.append(abs(max(trace.y_hat, 0.0) - data.log_targets[i]))
    return float(np.mean(errors))


def fit_arrays(
    config: TrainConfig,
    train_data: Dataset,
    dev_data: Dataset,
    embeddings: Optional[np.ndarray] = None,
    vocab_size: Optional[int] = None,
) -> tuple[CnnModel, list]:
    """Fit on pre-encoded arrays; return the best-on-dev snapshot and history.

    Documents are padded/truncated here, once.  Early stopping keeps the
    parameters from the epoch with the lowest dev MAE and stops after
    ``patience`` epochs without improvement.
    """
    if config.use_features and train_data.features is None:
        raise ValidationError("config requests features but the dataset has none")
    if config.use_ordinal and config.gamma > 0 and train_data.ordinal_bits is None:
        raise ValidationError("config requests ordinal heads but the dataset has no bits")
    if embeddings is not None:
        vocab_size = embeddings.shape[0]
    if vocab_size is None:
        raise ValidationError("need embeddings or an explicit vocab_size")

    n_thresholds = 0
    if train_data.ordinal_bits is not None:
        n_thresholds = train_data.ordinal_bits.shape[1]
    feature_dim = train_data.features.shape[1] if config.use_features else 0
    hyper = build_hyper(config, vocab_size, n_thresholds, feature_dim)
    model = nn_model.create_model(hyper, seed=config.seed, embeddings=embeddings)

    docs_tr = [nn_model.pad_ids(d, config.min_len, config.max_len) for d in train_data.docs]
    docs_dev = [nn_model.pad_ids(d, config.min_len, config.max_len) for d in dev_data.docs]
    train_padded = Dataset(
        docs=docs_tr,
        log_targets=train_data.log_targets,
        ordinal_bits=train_data.ordinal_bits,
        features=train_data.features,
    )
    dev_padded = Dataset(
        docs=docs_dev,
        log_targets=dev_data.log_targets,
        ordinal_bits=dev_data.ordinal_bits,
        features=dev_data.features,
    )

    gamma = config.gamma if config.use_ordinal else 0.0
    state = init_adam(model.params, lr=config.lr)
    rng = np.random.default_rng(config.seed)
    n = len(train_padded)
    history = []
    best_mae = math.inf
    best_params = None
    stale = 0

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = reg_total = aux_total = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            docs = [train_padded.docs[j] for j in batch]
            feats = None if train_padded.features is None else train_padded.features[batch]
            y = train_padded.log_targets[batch]
            bits = (
                None
                if train_padded.ordinal_bits is None
                else train_padded.ordinal_bits[batch]
            )
            traces = nn_model.forward_batch(model, docs, features=feats, want_cache=True)
            loss, parts = nn_model.joint_loss(traces, y, bits, gamma)
            grads = nn_model.backward(model, traces, y, bits, gamma)
            adam_step(model.params, grads, state)
            total += loss * len(batch)
            reg_total += parts["reg"] * len(batch)
            aux_total += parts["aux"] * len(batch)
        mae = dev_mae(model, dev_padded)
        history.append(
            {
                "epoch": epoch,
                "train_loss": total / n,
                "train_reg": reg_total / n,
                "train_aux": aux_total / n,
                "dev_mae": mae,
            }
        )
        if mae < best_mae - 1e-12:
            best_mae = mae
            best_params = copy.deepcopy(model.params)
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                logger.info("early stop at epoch %d (best dev MAE %.4f)", epoch, best_mae)
                break

    if best_params is not None:
        model.params = best_params
    return model, history


def _feature_row(features: dict, petition_id: str) -> np.ndarray:
    try:
        row = features[petition_id]
    except (KeyError, TypeError):
        raise ValidationError(f"no feature vector for petition {petition_id}") from None
    if hasattr(row, "as_array"):
        row = row.as_array()
    return np.asarray(row, dtype=np.float64)


def _examples_to_dataset(
    examples, vocab: Vocabulary, config: TrainConfig, features: Optional[dict]
) -> Dataset:
    if not examples:
        raise ValidationError("split has no examples")
    docs = [vocab.encode(tokenize(ex.text)) for ex in examples]
    targets = np.array([ex.log_count for ex in examples], dtype=np.float64)
    bits = None
    if config.use_ordinal:
        bits = np.array([ex.ordinal_bits for ex in examples], dtype=np.float64)
        if bits.size == 0:
            bits = bits.reshape(len(examples), 0)
    feats = None
    if config.use_features:
        if features is None:
            raise ValidationError("config requests features but none were supplied")
        feats = np.stack([_feature_row(features, ex.petition_id) for ex in examples])
    return Dataset(docs=docs, log_targets=targets, ordinal_bits=bits, features=feats)


def _embedding_matrix(embeddings) -> Optional[np.ndarray]:
    if embeddings is None:
        return None
    if isinstance(embeddings, EmbeddingTable):
        return embeddings.matrix
    return np.asarray(embeddings, dtype=np.float64)


def train(
    config: TrainConfig,
    data,
    vocab: Vocabulary,
    embeddings=None,
    features: Optional[dict] = None,
) -> tuple[CnnModel, list]:
    """Fit a model from a labeled split.

    ``data`` carries train/dev/test example lists; only train and dev are read
    here.  ``features`` maps petition id to an (already standardized) feature
    vector and is required when the config enables the feature path.
    """
    train_arr = _examples_to_dataset(data.train, vocab, config, features)
    dev_arr = _examples_to_dataset(data.dev, vocab, config, features)
    matrix = _embedding_matrix(embeddings)
    return fit_arrays(config, train_arr, dev_arr, embeddings=matrix, vocab_size=len(vocab))


def select_gamma(
    config: TrainConfig,
    data,
    vocab: Vocabulary,
    embeddings=None,
    features: Optional[dict] = None,
    grid: tuple = GAMMA_GRID,
) -> tuple[float, dict]:
    """Train once per gamma in the grid, keep the best dev MAE."""
    if not config.use_ordinal:
        raise ValidationError("gamma selection only applies with ordinal heads")
    train_arr = _examples_to_dataset(data.train, vocab, config, features)
    dev_arr = _examples_to_dataset(data.dev, vocab, config, features)
    matrix = _embedding_matrix(embeddings)
    scores = {}
    best = None
    for gamma in grid:
        model, history = fit_arrays(
            replace(config, gamma=gamma),
            train_arr,
            dev_arr,
            embeddings=matrix,
            vocab_size=len(vocab),
        )
        score = min(h["dev_mae"] for h in history)
        scores[gamma] = score
        logger.info("gamma=%g dev MAE %.4f", gamma, score)
        if best is None or score < best[0]:
            best = (score, gamma)
    return best[1], scores
