"""Convolution kernel backend selection.

The compiled extension is used when it imported cleanly; the NumPy
implementation is the fallback.  PETCAST_KERNEL=python or =compiled
forces a choice ("auto" and unset mean prefer compiled).
"""

from __future__ import annotations

import os

from ...errors import ValidationError
from . import pyconv

try:
    from . import _cconv
except ImportError:
    _cconv = None


def _select_backend(choice: str):
    choice = choice.strip().lower()
    if choice in ("", "auto"):
        return _cconv if _cconv is not None else pyconv
    if choice in ("python", "py", "numpy"):
        return pyconv
    if choice in ("compiled", "c", "cython"):
        if _cconv is None:
            raise ValidationError(
                "PETCAST_KERNEL=compiled but the extension is not built"
            )
        return _cconv
    raise ValidationError(f"unknown PETCAST_KERNEL value: {choice!r}")


_impl = _select_backend(os.environ.get("PETCAST_KERNEL", "auto"))

conv_forward = _impl.conv_forward
conv_backward = _impl.conv_backward


def backend_name() -> str:
    return "python" if _impl is pyconv else "compiled"


def compiled_available() -> bool:
    return _cconv is not None
