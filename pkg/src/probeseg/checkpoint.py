"""
Binary checkpoint format.

All integers and reals are little-endian::

    magic      4 bytes   b"SSIA"
    version    uint32
    step       uint64
    config     uint32 length + UTF-8 JSON
    count      uint32
    tensors    count x (uint16 name length, UTF-8 name, uint8 ndim,
                        ndim x uint32 dims, float32 data in C order)

Model parameters and buffers are stored under their state-dict names; Adam state under
``optim/<parameter name>/<key>``.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import torch
from numpy.typing import NDArray

from probeseg.exceptions import CheckpointError, CheckpointVersionError
from probeseg.predictor import ModelConfig, Predictor, build_model
from probeseg.store import atomic_write_bytes

logger = logging.getLogger(__name__)

MAGIC = b"SSIA"
VERSION = 1
OPTIM_PREFIX = "optim/"


@dataclass
class Checkpoint:
    step: int
    config: dict[str, Any]
    tensors: dict[str, NDArray[np.float32]] = field(default_factory=dict)

    @property
    def model_config(self) -> ModelConfig:
        return ModelConfig.from_dict(self.config.get("model", {}))


def encode(ckpt: Checkpoint) -> bytes:
    config = json.dumps(ckpt.config, sort_keys=True).encode("utf-8")
    parts = [
        MAGIC,
        struct.pack("<IQI", VERSION, ckpt.step, len(config)),
        config,
        struct.pack("<I", len(ckpt.tensors)),
    ]
    for name, value in ckpt.tensors.items():
        raw = name.encode("utf-8")
        array = np.ascontiguousarray(value, dtype="<f4")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack(f"<B{array.ndim}I", array.ndim, *array.shape))
        parts.append(array.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes, source: str) -> None:
        self.data = data
        self.offset = 0
        self.source = source

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise CheckpointError(
                f"Checkpoint {self.source} is truncated",
                details=f"needed {n} bytes at offset {self.offset}, file has {len(self.data)}",
            )
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt: str) -> tuple[Any, ...]:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode(data: bytes, source: str = "<bytes>") -> Checkpoint:
    reader = _Reader(data, source)
    if reader.take(4) != MAGIC:
        raise CheckpointError(f"{source} is not a probeseg checkpoint", details="bad magic")
    (version,) = reader.unpack("<I")
    if version != VERSION:
        raise CheckpointVersionError(
            f"Unsupported checkpoint version {version} in {source}",
            details=f"this build reads version {VERSION}",
        )
    step, config_len = reader.unpack("<QI")
    try:
        config = json.loads(reader.take(config_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"Corrupt config block in {source}", details=str(e))

    (count,) = reader.unpack("<I")
    tensors: dict[str, NDArray[np.float32]] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8", errors="replace")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I") if ndim else ()
        size = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(reader.take(4 * size), dtype="<f4").reshape(shape)
        tensors[name] = values.astype(np.float32)
    if reader.offset != len(data):
        logger.warning(f"{len(data) - reader.offset} trailing bytes ignored in {source}")
    return Checkpoint(step=int(step), config=config, tensors=tensors)


def capture(
    model: Predictor,
    optimizer: torch.optim.Optimizer | None,
    step: int,
    config: dict[str, Any] | None = None,
) -> Checkpoint:
    """Snapshot model (and optimizer) state into a checkpoint."""
    tensors = {
        name: value.detach().cpu().float().numpy().copy()
        for name, value in model.state_dict().items()
    }
    if optimizer is not None:
        names = {id(p): name for name, p in model.named_parameters()}
        for group in optimizer.param_groups:
            for p in group["params"]:
                for key, value in optimizer.state.get(p, {}).items():
                    tensors[f"{OPTIM_PREFIX}{names[id(p)]}/{key}"] = (
                        torch.as_tensor(value).detach().cpu().float().numpy().copy()
                    )
    echo = {"model": model.config.to_dict()}
    echo.update(config or {})
    return Checkpoint(step=step, config=echo, tensors=tensors)


def restore(
    ckpt: Checkpoint, model: Predictor, optimizer: torch.optim.Optimizer | None = None
) -> None:
    """Load parameters, buffers and (if given) Adam state in place."""
    current = model.state_dict()
    missing = [name for name in current if name not in ckpt.tensors]
    if missing:
        raise CheckpointError(
            "Checkpoint does not match the model", details=f"missing {', '.join(missing[:5])}"
        )
    model.load_state_dict(
        {name: torch.from_numpy(ckpt.tensors[name].copy()) for name in current}
    )
    if optimizer is None:
        return

    index = {name: i for i, (name, _) in enumerate(model.named_parameters())}
    state: dict[int, dict[str, torch.Tensor]] = {}
    for key, value in ckpt.tensors.items():
        if not key.startswith(OPTIM_PREFIX):
            continue
        pname, _, slot = key[len(OPTIM_PREFIX) :].rpartition("/")
        if pname not in index:
            raise CheckpointError("Optimizer state names an unknown parameter", details=pname)
        state.setdefault(index[pname], {})[slot] = torch.from_numpy(value.copy())
    saved = optimizer.state_dict()
    optimizer.load_state_dict({"state": state, "param_groups": saved["param_groups"]})


def save_checkpoint(
    path: Path,
    model: Predictor,
    optimizer: torch.optim.Optimizer | None = None,
    step: int = 0,
    config: dict[str, Any] | None = None,
) -> Path:
    path = Path(path)
    atomic_write_bytes(path, encode(capture(model, optimizer, step, config)))
    logger.info(f"Saved checkpoint {path} (step {step})")
    return path


def load_checkpoint(path: Path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint file '{path}' does not exist")
    return decode(path.read_bytes(), source=str(path))


def load_model(path: Path) -> tuple[Predictor, Checkpoint]:
    """Rebuild the predictor recorded in a checkpoint file."""
    ckpt = load_checkpoint(path)
    model = build_model(ckpt.model_config)
    restore(ckpt, model)
    model.eval()
    return model, ckpt
