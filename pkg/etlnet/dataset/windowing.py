import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from io import BytesIO
from logging import getLogger
from pathlib import Path
from typing import BinaryIO, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ArgumentError, DataError, DimensionError, FormatError
from ..numcore import Rng
from .records import FEATURE_NAMES, SampleRecord, group_by_trace, records_to_array

__all__ = ["WindowSet", "make_windows", "windows_by_trace", "balance_classes", "save_windowset", "load_windowset",
           "default_stride", "WINDOWSET_MAGIC"]

logger = getLogger(__name__)

WINDOWSET_MAGIC = b"ETLW"
_HEADER = struct.Struct("<4sIIdII")
_FLOAT = np.dtype("<f4")


@dataclass
class WindowSet:
    """
    x: (N, window, channels), y: (N,) of {0, 1}, provenance: (trace_id, start index) per window
    """
    x: np.ndarray
    y: np.ndarray
    window: int
    stride: int
    threshold: float
    provenance: List[Tuple[str, int]] = field(default_factory=list)
    feature_names: Tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        self.feature_names = tuple(self.feature_names)
        self.y = np.asarray(self.y, dtype=np.uint8)
        if self.x.ndim != 3 or self.x.shape[1] != self.window or self.x.shape[2] != len(self.feature_names):
            raise DimensionError(f"Windows {self.x.shape} do not match (N, {self.window}, "
                                 f"{len(self.feature_names)})")
        if self.y.shape != (self.x.shape[0],) or len(self.provenance) != self.x.shape[0]:
            raise DimensionError(f"{self.x.shape[0]} windows but {self.y.shape[0]} labels and "
                                 f"{len(self.provenance)} provenance entries")
        if np.any(self.y > 1):
            raise DataError("Window labels must be 0 or 1")

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def channels(self) -> int:
        return self.x.shape[2]

    def class_counts(self) -> Tuple[int, int]:
        """
        :return: (negatives, positives)
        """
        positives = int(self.y.sum())
        return len(self) - positives, positives

    def is_balanced(self) -> bool:
        negatives, positives = self.class_counts()
        return negatives == positives

    def trace_ids(self) -> List[str]:
        return sorted({trace_id for trace_id, _ in self.provenance})

    def sample_rows(self) -> np.ndarray:
        """
        Overlapping windows share samples; every (trace_id, sample index) covered by a window appears once.
        :return: (samples, channels) in trace id then sample index order
        """
        if len(self) == 0:
            return np.zeros((0, self.channels), dtype=self.x.dtype)
        _, codes = np.unique([trace_id for trace_id, _ in self.provenance], return_inverse=True)
        starts = np.array([start for _, start in self.provenance], dtype=np.int64)
        positions = starts[:, None] + np.arange(self.window)
        span = int(positions.max()) + 1
        keys = (codes.astype(np.int64)[:, None] * span + positions).reshape(-1)
        _, first = np.unique(keys, return_index=True)
        return self.x.reshape(-1, self.channels)[first]

    def by_trace(self) -> "OrderedDict[str, WindowSet]":
        """
        :return: trace_id -> windows of that trace, in sorted trace id order
        """
        indices: Dict[str, List[int]] = {}
        for i, (trace_id, _) in enumerate(self.provenance):
            indices.setdefault(trace_id, []).append(i)
        return OrderedDict((trace_id, self.subset(indices[trace_id])) for trace_id in sorted(indices))

    def subset(self, indices: Sequence[int]) -> "WindowSet":
        indices = np.asarray(indices, dtype=np.int64)
        return WindowSet(x=self.x[indices], y=self.y[indices], window=self.window, stride=self.stride,
                         threshold=self.threshold, provenance=[self.provenance[i] for i in indices],
                         feature_names=self.feature_names)

    def with_x(self, x: np.ndarray) -> "WindowSet":
        return WindowSet(x=x, y=self.y, window=self.window, stride=self.stride, threshold=self.threshold,
                         provenance=list(self.provenance), feature_names=self.feature_names)

    def select_features(self, names: Sequence[str]) -> "WindowSet":
        missing = [name for name in names if name not in self.feature_names]
        if missing:
            raise ArgumentError(f"Features {missing} are not in {list(self.feature_names)}")
        columns = [self.feature_names.index(name) for name in names]
        return WindowSet(x=np.ascontiguousarray(self.x[:, :, columns]), y=self.y, window=self.window,
                         stride=self.stride, threshold=self.threshold, provenance=list(self.provenance),
                         feature_names=tuple(names))

    @staticmethod
    def empty(window: int, stride: int, threshold: float, feature_names: Sequence[str] = FEATURE_NAMES,
              dtype=np.float32) -> "WindowSet":
        return WindowSet(x=np.zeros((0, window, len(feature_names)), dtype), y=np.zeros(0, np.uint8), window=window,
                         stride=stride, threshold=threshold, provenance=[], feature_names=tuple(feature_names))

    @staticmethod
    def concat(sets: Sequence["WindowSet"]) -> "WindowSet":
        if len(sets) == 0:
            raise ArgumentError("Nothing to concatenate")
        first = sets[0]
        for ws in sets[1:]:
            if (ws.window, ws.stride, ws.feature_names) != (first.window, first.stride, first.feature_names):
                raise DimensionError(f"Cannot concatenate windows ({ws.window}, {ws.stride}, {ws.feature_names}) "
                                     f"with ({first.window}, {first.stride}, {first.feature_names})")
        return WindowSet(x=np.concatenate([ws.x for ws in sets], axis=0),
                         y=np.concatenate([ws.y for ws in sets], axis=0), window=first.window, stride=first.stride,
                         threshold=first.threshold, provenance=[p for ws in sets for p in ws.provenance],
                         feature_names=first.feature_names)


def default_stride(window: int) -> int:
    return max(1, window // 2)


def _check_window_args(window: int, stride: int, threshold: float):
    if window < 1 or stride < 1:
        raise ArgumentError(f"window and stride must be >= 1, got window={window}, stride={stride}")
    if not 0. <= threshold <= 1.:
        raise ArgumentError(f"Label threshold must be in [0, 1]: {threshold}")


def _trace_windows(trace_id: str, records: Sequence[SampleRecord], window: int, stride: int, threshold: float,
                   features: Sequence[str], dtype) -> WindowSet:
    if len(records) < window:
        return WindowSet.empty(window, stride, threshold, features, dtype)
    values = records_to_array(records, features).astype(dtype)
    starts = np.arange(0, len(records) - window + 1, stride)
    x = np.ascontiguousarray(sliding_window_view(values, window, axis=0)[starts].transpose(0, 2, 1))
    bumps = np.array([r.is_bump for r in records], dtype=np.int64)
    cumulative = np.concatenate([[0], np.cumsum(bumps)])
    counts = cumulative[starts + window] - cumulative[starts]
    if threshold > 0.:
        y = counts / window >= threshold
    else:
        y = counts >= 1
    return WindowSet(x=x, y=y.astype(np.uint8), window=window, stride=stride, threshold=threshold,
                     provenance=[(trace_id, int(s)) for s in starts], feature_names=tuple(features))


def windows_by_trace(records: Sequence[SampleRecord], window: int, stride: Optional[int] = None,
                     threshold: float = 0.15, features: Sequence[str] = FEATURE_NAMES,
                     dtype=np.float32) -> "OrderedDict[str, WindowSet]":
    """
    :return: trace_id -> windows of that trace, in sorted trace id order
    """
    stride = default_stride(window) if stride is None else stride
    _check_window_args(window, stride, threshold)
    return OrderedDict((trace_id, _trace_windows(trace_id, trace, window, stride, threshold, features, dtype))
                       for trace_id, trace in group_by_trace(records).items())


def make_windows(records: Sequence[SampleRecord], window: int, stride: Optional[int] = None,
                 threshold: float = 0.15, features: Sequence[str] = FEATURE_NAMES, dtype=np.float32) -> WindowSet:
    """
    Slides a window of `window` samples every `stride` samples over each trace; windows never span traces.
    A window is positive iff its bump fraction >= threshold (threshold > 0) or it holds any bump sample.
    """
    stride = default_stride(window) if stride is None else stride
    by_trace = windows_by_trace(records, window, stride, threshold, features, dtype)
    if len(by_trace) == 0:
        return WindowSet.empty(window, stride, threshold, features, dtype)
    result = WindowSet.concat(list(by_trace.values()))
    logger.debug(f"{len(result)} windows (W={window}, S={stride}) from {len(by_trace)} traces")
    return result


def balance_classes(ws: WindowSet, rng: Rng) -> WindowSet:
    """
    Random undersampling of the majority class to the minority count, result shuffled.
    """
    positives = np.flatnonzero(ws.y == 1)
    negatives = np.flatnonzero(ws.y == 0)
    if positives.size == 0 or negatives.size == 0:
        raise DataError(f"Cannot balance a single-class window set ({negatives.size} negative, "
                        f"{positives.size} positive)")
    count = min(positives.size, negatives.size)
    keep_pos = positives[np.sort(rng.choice(positives.size, count))]
    keep_neg = negatives[np.sort(rng.choice(negatives.size, count))]
    indices = np.concatenate([keep_pos, keep_neg])
    return ws.subset(indices[rng.permutation(indices.size)])


def _write_text(stream: BinaryIO, text: str):
    data = text.encode("utf-8")
    stream.write(struct.pack("<I", len(data)))
    stream.write(data)


def _read_exact(stream: BinaryIO, size: int, path) -> bytes:
    data = stream.read(size)
    if len(data) != size:
        raise FormatError(f"{path}: truncated window cache")
    return data


def save_windowset(ws: WindowSet, path: Union[str, Path]):
    """
    Layout: magic, W, S, threshold, C, N, x as little-endian float32, y as bytes,
    then feature names and provenance as length-prefixed utf-8 text.
    """
    stream = BytesIO()
    stream.write(_HEADER.pack(WINDOWSET_MAGIC, ws.window, ws.stride, ws.threshold, ws.channels, len(ws)))
    stream.write(np.ascontiguousarray(ws.x, dtype=_FLOAT).tobytes())
    stream.write(ws.y.astype(np.uint8).tobytes())
    _write_text(stream, ",".join(ws.feature_names))
    _write_text(stream, "\n".join(f"{trace_id}\t{start}" for trace_id, start in ws.provenance))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(stream.getvalue())


def load_windowset(path: Union[str, Path]) -> WindowSet:
    stream = BytesIO(Path(path).read_bytes())
    header = stream.read(_HEADER.size)
    if len(header) != _HEADER.size or header[:4] != WINDOWSET_MAGIC:
        raise FormatError(f"{path}: not a window cache (magic {header[:4]!r})")
    _, window, stride, threshold, channels, count = _HEADER.unpack(header)
    x = np.frombuffer(_read_exact(stream, count * window * channels * _FLOAT.itemsize, path), dtype=_FLOAT)
    y = np.frombuffer(_read_exact(stream, count, path), dtype=np.uint8)
    size, = struct.unpack("<I", _read_exact(stream, 4, path))
    names = _read_exact(stream, size, path).decode("utf-8")
    size, = struct.unpack("<I", _read_exact(stream, 4, path))
    lines = _read_exact(stream, size, path).decode("utf-8")
    provenance = []
    for line in lines.split("\n") if lines else []:
        trace_id, start = line.rsplit("\t", 1)
        provenance.append((trace_id, int(start)))
    return WindowSet(x=x.reshape(count, window, channels).copy(), y=y.copy(), window=window, stride=stride,
                     threshold=threshold, provenance=provenance, feature_names=tuple(names.split(",")))
