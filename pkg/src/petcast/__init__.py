"""Predicting end-of-life signature counts of e-petitions from their text.

A convolutional regressor over token sequences (with optional threshold
heads and hand-feature fusion), classical reference predictors, and the
matching evaluation and significance-testing toolkit.
"""

from .corpus import (
    UK_SCHEME,
    UK_THRESHOLDS,
    US_MIN_SIGNATURES,
    US_SCHEME,
    US_THRESHOLDS,
    LabeledExample,
    OrdinalScheme,
    Petition,
    SplitDataset,
    chronological_split,
    encode_ordinal,
    load_petitions,
    log_target,
    make_example,
)
from .errors import (
    FormatError,
    NumericError,
    PetcastError,
    StateError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "FormatError",
    "LabeledExample",
    "NumericError",
    "OrdinalScheme",
    "Petition",
    "PetcastError",
    "SplitDataset",
    "StateError",
    "UK_SCHEME",
    "UK_THRESHOLDS",
    "US_MIN_SIGNATURES",
    "US_SCHEME",
    "US_THRESHOLDS",
    "ValidationError",
    "chronological_split",
    "encode_ordinal",
    "load_petitions",
    "log_target",
    "make_example",
    "__version__",
]
