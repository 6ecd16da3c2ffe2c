from abc import ABCMeta, abstractmethod
from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from ...errors import ArgumentError, ContractViolationError
from ...numcore import Precision, Rng

__all__ = ["Mode", "LayerCache", "ParamStruct", "Layer", "glorot_uniform", "check_train_cache", "register_backward",
           "layer_bwd", "new_cache"]


class Mode(Enum):
    TRAIN = "train"
    EVAL = "eval"

    @staticmethod
    def from_val(val) -> "Mode":
        if isinstance(val, Mode):
            return val
        for mode in Mode:
            if mode.value == val:
                return mode
        raise ArgumentError(f"Invalid mode: {val}")


class ParamStruct:
    """
    Mixin for parameter dataclasses. version counts optimizer updates so that caches can detect staleness.
    """
    version: int = 0

    def mark_updated(self):
        self.version += 1

    def tensors(self) -> "OrderedDict[str, np.ndarray]":
        raise NotImplementedError


@dataclass
class LayerCache:
    """
    Forward intermediates of one (input, mode) invocation.
    owner is the id of the parameter structure the forward ran with, version its update counter at that time.
    """
    kind: str
    mode: Mode
    owner: int
    version: int
    values: Dict[str, Any] = field(default_factory=dict)

    def __getitem__(self, key: str):
        return self.values[key]


def new_cache(kind: str, mode: Mode, params: Optional[ParamStruct] = None, **values) -> LayerCache:
    owner = id(params) if params is not None else 0
    version = params.version if params is not None else 0
    return LayerCache(kind=kind, mode=mode, owner=owner, version=version, values=dict(values, params=params))


def check_train_cache(cache: LayerCache, kind: str, params: Optional[ParamStruct] = None):
    if not isinstance(cache, LayerCache) or cache.kind != kind:
        found = cache.kind if isinstance(cache, LayerCache) else type(cache).__name__
        raise ContractViolationError(f"Expected a {kind} cache, got {found}")
    if cache.mode is not Mode.TRAIN:
        raise ContractViolationError(f"{kind} backward requires a train-mode cache")
    if params is not None:
        if cache.owner != id(params):
            raise ContractViolationError(f"{kind} cache was produced with other parameters")
        if cache.version != params.version:
            raise ContractViolationError(f"Stale {kind} cache: parameters changed after forward")


_BACKWARD_REGISTRY: Dict[str, Callable] = {}


def register_backward(kind: str):
    def decorator(func: Callable):
        _BACKWARD_REGISTRY[kind] = func
        return func

    return decorator


def layer_bwd(dy: np.ndarray, cache: LayerCache) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """
    Backward of any functional forward.
    :return: dL/dx, dL/dparams keyed by parameter name
    """
    if not isinstance(cache, LayerCache):
        raise ContractViolationError(f"Not a layer cache: {type(cache).__name__}")
    backward = _BACKWARD_REGISTRY.get(cache.kind)
    if backward is None:
        raise ContractViolationError(f"No backward registered for {cache.kind}")
    return backward(dy, cache)


def glorot_uniform(rng: Rng, shape: Tuple[int, ...], fan_in: int, fan_out: int, precision: Precision) -> np.ndarray:
    limit = np.sqrt(6. / (fan_in + fan_out))
    return rng.uniform(shape, -limit, limit, precision)


class Layer(metaclass=ABCMeta):
    """
    forward
        input: (Batch size, time, channels) or (Batch size, channels)
        output: layer dependent
    Trainable tensors are exposed by params, non-trainable state (batch-norm running statistics) by buffers.
    Both return the live arrays, so in-place updates reach the layer.
    """

    def __init__(self, name: str):
        self.name = name

    def param_structs(self) -> List[ParamStruct]:
        return []

    @property
    def params(self) -> "OrderedDict[str, np.ndarray]":
        result = OrderedDict()
        structs = self.param_structs()
        for i, struct in enumerate(structs):
            prefix = self._struct_prefix(i, len(structs))
            for key, tensor in struct.tensors().items():
                result[f"{prefix}{key}"] = tensor
        return result

    @property
    def buffers(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict()

    def _struct_prefix(self, index: int, count: int) -> str:
        return "" if count == 1 else f"{index}."

    def mark_updated(self):
        for struct in self.param_structs():
            struct.mark_updated()

    @abstractmethod
    def forward(self, x: np.ndarray, mode: Mode, rng: Optional[Rng] = None) -> Tuple[np.ndarray, LayerCache]:
        pass

    @abstractmethod
    def backward(self, dy: np.ndarray, cache: LayerCache) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        """
        :return: dL/dx, gradients keyed like params
        """
        pass

    @abstractmethod
    def output_shape(self, in_shape: Tuple[int, ...]) -> Tuple[int, ...]:
        """
        :param in_shape: per-sample shape, (time, channels) or (channels,)
        """
        pass

    def param_count(self) -> Tuple[int, int]:
        """
        Closed-form parameter count.
        :return: trainable, total
        """
        return 0, 0

    def __repr__(self):
        return f"{self.__class__.__name__}({self.name})"
