from .model import (
    CnnModel,
    ForwardTrace,
    ModelHyper,
    backward,
    create_model,
    forward,
    forward_batch,
    count_from_log,
    joint_loss,
    pad_ids,
    param_shapes,
    predict_count,
)
from .optim import AdamState, adam_step, init_adam
from .training import Dataset, TrainConfig, fit_arrays, select_gamma, train

__all__ = [
    "AdamState",
    "CnnModel",
    "Dataset",
    "ForwardTrace",
    "ModelHyper",
    "TrainConfig",
    "adam_step",
    "backward",
    "count_from_log",
    "create_model",
    "forward",
    "fit_arrays",
    "forward_batch",
    "init_adam",
    "joint_loss",
    "pad_ids",
    "param_shapes",
    "predict_count",
    "select_gamma",
    "train",
]
