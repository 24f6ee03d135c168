"""Binary model checkpoints.

Layout: 4-byte magic, u32 format version, u32-length JSON manifest,
u32 tensor count, then per tensor a u16-length name, u8 rank, u64 dims
and raw little-endian float64 data in C order.  The manifest carries the
hyperparameters, the vocabulary content hash, the count thresholds, the
training gamma, the log base and the feature scaler.
"""

from __future__ import annotations

import json
import struct
from typing import Optional

import numpy as np

from ..errors import FormatError, ValidationError
from .model import CnnModel, ModelHyper, param_shapes

MAGIC = b"PETC"
FORMAT_VERSION = 1


def _hyper_to_dict(hyper: ModelHyper) -> dict:
    return {
        "vocab_size": hyper.vocab_size,
        "embed_dim": hyper.embed_dim,
        "widths": list(hyper.widths),
        "n_filters": hyper.n_filters,
        "feature_dim": hyper.feature_dim,
        "feature_hidden": hyper.feature_hidden,
        "hidden_sizes": list(hyper.hidden_sizes),
        "n_thresholds": hyper.n_thresholds,
        "use_features": hyper.use_features,
        "use_ordinal": hyper.use_ordinal,
        "elu_alpha": hyper.elu_alpha,
    }


def _hyper_from_dict(d: dict) -> ModelHyper:
    try:
        return ModelHyper(
            vocab_size=int(d["vocab_size"]),
            embed_dim=int(d["embed_dim"]),
            widths=tuple(d["widths"]),
            n_filters=int(d["n_filters"]),
            feature_dim=int(d["feature_dim"]),
            feature_hidden=int(d["feature_hidden"]),
            hidden_sizes=tuple(d["hidden_sizes"]),
            n_thresholds=int(d["n_thresholds"]),
            use_features=bool(d["use_features"]),
            use_ordinal=bool(d["use_ordinal"]),
            elu_alpha=float(d["elu_alpha"]),
        )
    except KeyError as exc:
        raise FormatError(f"manifest missing hyperparameter {exc}") from exc


def save_checkpoint(
    path,
    model: CnnModel,
    vocab_sha256: str,
    thresholds,
    gamma: float,
    log_base: float,
    variant: str,
    scaler: Optional[dict] = None,
    extra: Optional[dict] = None,
) -> None:
    model.validate()
    manifest = {
        "format_version": FORMAT_VERSION,
        "variant": variant,
        "hyper": _hyper_to_dict(model.hyper),
        "vocab_sha256": vocab_sha256,
        "thresholds": [int(t) for t in thresholds],
        "gamma": float(gamma),
        "log_base": float(log_base),
        "scaler": scaler,
        "extra": extra or {},
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        names = sorted(model.params)
        fh.write(struct.pack("<I", len(names)))
        for name in names:
            tensor = np.ascontiguousarray(model.params[name], dtype="<f8")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}Q", *tensor.shape))
            fh.write(tensor.tobytes(order="C"))


def _read_exact(fh, size: int) -> bytes:
    data = fh.read(size)
    if len(data) != size:
        raise FormatError("checkpoint truncated")
    return data


def load_checkpoint(path) -> tuple[CnnModel, dict]:
    """Read a checkpoint, verifying version and every tensor shape."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != MAGIC:
            raise FormatError("not a model checkpoint (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != FORMAT_VERSION:
            raise FormatError(
                f"unsupported checkpoint version {version}, expected {FORMAT_VERSION}"
            )
        (manifest_len,) = struct.unpack("<I", _read_exact(fh, 4))
        try:
            manifest = json.loads(_read_exact(fh, manifest_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"bad checkpoint manifest: {exc}") from exc
        hyper = _hyper_from_dict(manifest.get("hyper", {}))
        expected = param_shapes(hyper)
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        if count != len(expected):
            raise FormatError(
                f"checkpoint has {count} tensors, model needs {len(expected)}"
            )
        params = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2))
            name = _read_exact(fh, name_len).decode("utf-8")
            if name not in expected:
                raise FormatError(f"unexpected tensor {name!r}")
            if name in params:
                raise FormatError(f"duplicate tensor {name!r}")
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1))
            shape = struct.unpack(f"<{ndim}Q", _read_exact(fh, 8 * ndim))
            if shape != expected[name]:
                raise FormatError(
                    f"tensor {name!r} has shape {shape}, expected {expected[name]}"
                )
            n_items = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            data = np.frombuffer(_read_exact(fh, 8 * n_items), dtype="<f8")
            params[name] = data.astype(np.float64).reshape(shape)
        if fh.read(1):
            raise FormatError("trailing bytes after last tensor")
    model = CnnModel(hyper=hyper, params=params).validate()
    return model, manifest


def checkpoint_matches_vocab(manifest: dict, vocab_sha256: str) -> bool:
    return manifest.get("vocab_sha256") == vocab_sha256
