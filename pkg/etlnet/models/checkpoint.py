import struct
from io import BytesIO, StringIO
from logging import getLogger
from pathlib import Path
from typing import BinaryIO, Dict, Tuple, Union

import numpy as np
from dotenv import dotenv_values

from ..common import config_from_items, config_items
from ..errors import FormatError
from ..numcore import Rng
from .config import ModelConfig
from .etlnet import Model, build_model

__all__ = ["CHECKPOINT_MAGIC", "CHECKPOINT_VERSION", "save_checkpoint", "load_checkpoint", "read_checkpoint"]

logger = getLogger(__name__)

CHECKPOINT_MAGIC = b"ETLN"
CHECKPOINT_VERSION = 1
_FLOAT = np.dtype("<f4")


def _write_text(stream: BinaryIO, text: str):
    data = text.encode("utf-8")
    stream.write(struct.pack("<I", len(data)))
    stream.write(data)


def _read_exact(stream: BinaryIO, size: int) -> bytes:
    data = stream.read(size)
    if len(data) != size:
        raise FormatError(f"Truncated checkpoint: expected {size} bytes, got {len(data)}")
    return data


def _read_text(stream: BinaryIO) -> str:
    size, = struct.unpack("<I", _read_exact(stream, 4))
    return _read_exact(stream, size).decode("utf-8")


def save_checkpoint(model: Model, path: Union[str, Path]):
    """
    Layout: magic, format version, model config as "model.key=value" lines,
    then every parameter and buffer as (name, shape, little-endian float32 values).
    """
    items = config_items(model.config, "model")
    state = model.state_dict()
    stream = BytesIO()
    stream.write(CHECKPOINT_MAGIC)
    stream.write(struct.pack("<I", CHECKPOINT_VERSION))
    _write_text(stream, "".join(f"{key}={value}\n" for key, value in items.items()))
    stream.write(struct.pack("<I", len(state)))
    for name, tensor in state.items():
        _write_text(stream, name)
        stream.write(struct.pack("<I", tensor.ndim))
        stream.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        stream.write(np.ascontiguousarray(tensor, dtype=_FLOAT).tobytes())
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(stream.getvalue())
    logger.info(f"Saved checkpoint with {len(state)} tensors to {path}")


def read_checkpoint(path: Union[str, Path]) -> Tuple[ModelConfig, Dict[str, np.ndarray]]:
    stream = BytesIO(Path(path).read_bytes())
    magic = stream.read(4)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint (magic {magic!r})")
    version, = struct.unpack("<I", _read_exact(stream, 4))
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    items = dotenv_values(stream=StringIO(_read_text(stream)))
    config = config_from_items(ModelConfig, items, "model")
    count, = struct.unpack("<I", _read_exact(stream, 4))
    state = {}
    for _ in range(count):
        name = _read_text(stream)
        ndim, = struct.unpack("<I", _read_exact(stream, 4))
        shape = struct.unpack(f"<{ndim}I", _read_exact(stream, 4 * ndim))
        size = int(np.prod(shape, dtype=np.int64))
        state[name] = np.frombuffer(_read_exact(stream, size * _FLOAT.itemsize), dtype=_FLOAT).reshape(shape)
    return config, state


def load_checkpoint(path: Union[str, Path]) -> Model:
    config, state = read_checkpoint(path)
    model = build_model(config, Rng(0))
    model.load_state_dict(state)
    return model
