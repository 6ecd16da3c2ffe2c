from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np

from ...errors import ArgumentError, DimensionError
from ...numcore import Precision, Rng, matmul, sigmoid
from .base import Layer, LayerCache, Mode, ParamStruct, check_train_cache, glorot_uniform, new_cache, \
    register_backward

__all__ = ["Activation", "DenseParams", "BatchNormState", "dense_fwd", "dense_bwd", "relu_fwd", "relu_bwd",
           "sigmoid_fwd", "sigmoid_bwd", "batchnorm_fwd", "batchnorm_bwd", "dropout_fwd", "dropout_bwd",
           "global_avg_pool_fwd", "global_avg_pool_bwd", "Dense", "BatchNorm", "Dropout", "GlobalAveragePooling"]


class Activation(Enum):
    NONE = "none"
    RELU = "relu"
    SIGMOID = "sigmoid"

    @staticmethod
    def from_val(val) -> "Activation":
        if isinstance(val, Activation):
            return val
        for activation in Activation:
            if activation.value == val:
                return activation
        raise ArgumentError(f"Invalid activation: {val}")


@dataclass(eq=False)
class DenseParams(ParamStruct):
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)

    def __post_init__(self):
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise DimensionError(f"Dense weight {self.weight.shape} and bias {self.bias.shape} are inconsistent")

    def tensors(self):
        return OrderedDict(weight=self.weight, bias=self.bias)


@dataclass(eq=False)
class BatchNormState(ParamStruct):
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    epsilon: float = 1e-5

    def __post_init__(self):
        if not 0. < self.momentum < 1.:
            raise ArgumentError(f"Batch norm momentum must be in (0, 1): {self.momentum}")
        if self.epsilon <= 0.:
            raise ArgumentError(f"Batch norm epsilon must be positive: {self.epsilon}")

    @staticmethod
    def create(channels: int, momentum: float = 0.1, epsilon: float = 1e-5,
               precision: Precision = Precision.STANDARD) -> "BatchNormState":
        dtype = precision.dtype
        return BatchNormState(gamma=np.ones(channels, dtype), beta=np.zeros(channels, dtype),
                              running_mean=np.zeros(channels, dtype), running_var=np.ones(channels, dtype),
                              momentum=momentum, epsilon=epsilon)

    def tensors(self):
        return OrderedDict(gamma=self.gamma, beta=self.beta)

    def buffer_tensors(self):
        return OrderedDict(running_mean=self.running_mean, running_var=self.running_var)


def relu_fwd(x: np.ndarray, mode: Mode = Mode.TRAIN) -> Tuple[np.ndarray, LayerCache]:
    return np.maximum(x, 0), new_cache("relu", mode, x=x)


@register_backward("relu")
def relu_bwd(dy: np.ndarray, cache: LayerCache) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    check_train_cache(cache, "relu")
    return dy * (cache["x"] > 0), {}


def sigmoid_fwd(x: np.ndarray, mode: Mode = Mode.TRAIN) -> Tuple[np.ndarray, LayerCache]:
    y = sigmoid(x)
    return y, new_cache("sigmoid", mode, y=y)


@register_backward("sigmoid")
def sigmoid_bwd(dy: np.ndarray, cache: LayerCache) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    check_train_cache(cache, "sigmoid")
    y = cache["y"]
    return dy * y * (1 - y), {}


def dense_fwd(x: np.ndarray, p: DenseParams, act=Activation.NONE,
              mode: Mode = Mode.TRAIN) -> Tuple[np.ndarray, LayerCache]:
    """
    y = act(x W^T + b)
    :param x: (Batch size, in)
    """
    act = Activation.from_val(act)
    if x.ndim != 2 or x.shape[1] != p.weight.shape[1]:
        raise DimensionError(f"Dense input {x.shape} does not match weight {p.weight.shape}")
    z = matmul(x, p.weight.T) + p.bias
    if act is Activation.RELU:
        y = np.maximum(z, 0)
    elif act is Activation.SIGMOID:
        y = sigmoid(z)
    else:
        y = z
    return y, new_cache("dense", mode, p, x=x, z=z, y=y, act=act)


@register_backward("dense")
def dense_bwd(dy: np.ndarray, cache: LayerCache) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    p: DenseParams = cache["params"]
    check_train_cache(cache, "dense", p)
    act = cache["act"]
    if act is Activation.RELU:
        dz = dy * (cache["z"] > 0)
    elif act is Activation.SIGMOID:
        y = cache["y"]
        dz = dy * y * (1 - y)
    else:
        dz = dy
    dx = matmul(dz, p.weight)
    return dx, {"weight": matmul(dz.T, cache["x"]), "bias": dz.sum(axis=0)}


def batchnorm_fwd(x: np.ndarray, s: BatchNormState, mode: Mode) -> Tuple[np.ndarray, LayerCache]:
    """
    Per-channel normalization over every batch and time position.
    Train mode also moves the running statistics towards the batch statistics.
    :param x: (Batch size, time, channels) or (Batch size, channels)
    """
    mode = Mode.from_val(mode)
    channels = s.gamma.shape[0]
    if x.shape[-1] != channels or x.ndim not in (2, 3):
        raise DimensionError(f"Batch norm input {x.shape} does not match {channels} channels")
    flat = x.reshape(-1, channels)
    if mode is Mode.TRAIN:
        n = flat.shape[0]
        if n < 2:
            raise ArgumentError(f"Batch norm in train mode needs at least 2 samples per channel, got {n}")
        mean = flat.mean(axis=0)
        var = flat.var(axis=0)
        s.running_mean *= (1 - s.momentum)
        s.running_mean += s.momentum * mean
        s.running_var *= (1 - s.momentum)
        s.running_var += s.momentum * var
    else:
        mean, var = s.running_mean, s.running_var
    inv_std = 1. / np.sqrt(var + s.epsilon)
    x_hat = (flat - mean) * inv_std
    y = (s.gamma * x_hat + s.beta).reshape(x.shape)
    return y, new_cache("batchnorm", mode, s, x_hat=x_hat, inv_std=inv_std, shape=x.shape)


@register_backward("batchnorm")
def batchnorm_bwd(dy: np.ndarray, cache: LayerCache) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    s: BatchNormState = cache["params"]
    check_train_cache(cache, "batchnorm", s)
    x_hat, inv_std = cache["x_hat"], cache["inv_std"]
    dy_flat = dy.reshape(-1, x_hat.shape[1])
    n = dy_flat.shape[0]
    dx_hat = dy_flat * s.gamma
    dx = inv_std / n * (n * dx_hat - dx_hat.sum(axis=0) - x_hat * (dx_hat * x_hat).sum(axis=0))
    return dx.reshape(cache["shape"]), {"gamma": (dy_flat * x_hat).sum(axis=0), "beta": dy_flat.sum(axis=0)}


def dropout_fwd(x: np.ndarray, rate: float, rng: Optional[Rng], mode: Mode) -> Tuple[np.ndarray, LayerCache]:
    """
    Inverted dropout: survivors are scaled by 1 / (1 - rate) so that eval mode is the identity.
    """
    mode = Mode.from_val(mode)
    if not 0. <= rate < 1.:
        raise ArgumentError(f"Dropout rate must be in [0, 1): {rate}")
    if mode is Mode.EVAL:
        return x, new_cache("dropout", mode, mask=None)
    if rate == 0.:
        mask = np.ones_like(x)
    else:
        if rng is None:
            raise ArgumentError("Dropout in train mode needs an rng")
        keep = rng.uniform(x.shape, 0., 1.) >= rate
        mask = keep.astype(x.dtype) / x.dtype.type(1. - rate)
    return x * mask, new_cache("dropout", mode, mask=mask)


@register_backward("dropout")
def dropout_bwd(dy: np.ndarray, cache: LayerCache) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    check_train_cache(cache, "dropout")
    return dy * cache["mask"], {}


def global_avg_pool_fwd(x: np.ndarray, mode: Mode = Mode.TRAIN) -> Tuple[np.ndarray, LayerCache]:
    """
    :param x: (Batch size, time, channels)
    :return: (Batch size, channels)
    """
    if x.ndim != 3:
        raise DimensionError(f"Global average pooling expects (batch, time, channels), got {x.shape}")
    return x.mean(axis=1), new_cache("global_avg_pool", mode, shape=x.shape)


@register_backward("global_avg_pool")
def global_avg_pool_bwd(dy: np.ndarray, cache: LayerCache) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    check_train_cache(cache, "global_avg_pool")
    batch, time, channels = cache["shape"]
    dx = np.broadcast_to(dy[:, None, :] / time, (batch, time, channels))
    return np.ascontiguousarray(dx), {}


class Dense(Layer):
    def __init__(self, name: str, in_features: int, out_features: int, activation=Activation.NONE,
                 rng: Optional[Rng] = None, precision: Precision = Precision.STANDARD):
        super().__init__(name)
        self.activation = Activation.from_val(activation)
        self.in_features, self.out_features = in_features, out_features
        if rng is None:
            weight = np.zeros((out_features, in_features), precision.dtype)
        else:
            weight = glorot_uniform(rng, (out_features, in_features), in_features, out_features, precision)
        self.p = DenseParams(weight=weight, bias=np.zeros(out_features, precision.dtype))

    def param_structs(self):
        return [self.p]

    def forward(self, x, mode, rng=None):
        return dense_fwd(x, self.p, self.activation, mode)

    def backward(self, dy, cache):
        return dense_bwd(dy, cache)

    def output_shape(self, in_shape):
        if in_shape != (self.in_features,):
            raise DimensionError(f"{self.name} expects ({self.in_features},), got {in_shape}")
        return self.out_features,

    def param_count(self):
        count = self.in_features * self.out_features + self.out_features
        return count, count


class BatchNorm(Layer):
    def __init__(self, name: str, channels: int, momentum: float = 0.1, epsilon: float = 1e-5,
                 precision: Precision = Precision.STANDARD):
        super().__init__(name)
        self.channels = channels
        self.state = BatchNormState.create(channels, momentum, epsilon, precision)

    def param_structs(self):
        return [self.state]

    @property
    def buffers(self):
        return self.state.buffer_tensors()

    def forward(self, x, mode, rng=None):
        return batchnorm_fwd(x, self.state, mode)

    def backward(self, dy, cache):
        return batchnorm_bwd(dy, cache)

    def output_shape(self, in_shape):
        if in_shape[-1] != self.channels:
            raise DimensionError(f"{self.name} expects {self.channels} channels, got {in_shape}")
        return in_shape

    def param_count(self):
        return 2 * self.channels, 4 * self.channels


class Dropout(Layer):
    def __init__(self, name: str, rate: float):
        super().__init__(name)
        if not 0. <= rate < 1.:
            raise ArgumentError(f"Dropout rate must be in [0, 1): {rate}")
        self.rate = rate

    def forward(self, x, mode, rng=None):
        return dropout_fwd(x, self.rate, rng, mode)

    def backward(self, dy, cache):
        return dropout_bwd(dy, cache)

    def output_shape(self, in_shape):
        return in_shape


class GlobalAveragePooling(Layer):
    def forward(self, x, mode, rng=None):
        return global_avg_pool_fwd(x, mode)

    def backward(self, dy, cache):
        return global_avg_pool_bwd(dy, cache)

    def output_shape(self, in_shape):
        if len(in_shape) != 2:
            raise DimensionError(f"{self.name} expects (time, channels), got {in_shape}")
        return in_shape[1],
