from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ...errors import ArgumentError, DimensionError
from ...numcore import Precision, Rng, matmul
from .base import Layer, LayerCache, Mode, ParamStruct, check_train_cache, glorot_uniform, new_cache, \
    register_backward
from .basic import relu_bwd, relu_fwd

__all__ = ["ConvParams", "causal_conv1d_fwd", "causal_conv1d_bwd", "TCNLayer"]


@dataclass(eq=False)
class ConvParams(ParamStruct):
    weight: np.ndarray  # (out, in, kernel)
    bias: np.ndarray  # (out,)
    dilation: int = 1

    def __post_init__(self):
        if self.dilation < 1:
            raise ArgumentError(f"Dilation must be >= 1: {self.dilation}")
        if self.weight.ndim != 3 or self.weight.shape[2] < 1:
            raise DimensionError(f"Conv weight must be (out, in, kernel), got {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise DimensionError(f"Conv weight {self.weight.shape} and bias {self.bias.shape} are inconsistent")

    @property
    def kernel(self) -> int:
        return self.weight.shape[2]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    def tensors(self):
        return OrderedDict(weight=self.weight, bias=self.bias)


def _tap_slices(p: ConvParams, time: int):
    pad = (p.kernel - 1) * p.dilation
    for j in range(p.kernel):
        start = pad - j * p.dilation
        yield j, slice(start, start + time)


def causal_conv1d_fwd(x: np.ndarray, p: ConvParams, mode: Mode = Mode.TRAIN) -> Tuple[np.ndarray, LayerCache]:
    """
    y[b, t, f] = bias[f] + sum_c sum_j w[f, c, j] * x[b, t - j * d, c], zero left padding.
    :param x: (Batch size, time, in channels)
    :return: (Batch size, time, out channels)
    """
    if x.ndim != 3 or x.shape[2] != p.in_channels:
        raise DimensionError(f"Conv input {x.shape} does not match weight {p.weight.shape}")
    batch, time, channels = x.shape
    pad = (p.kernel - 1) * p.dilation
    x_pad = np.pad(x, ((0, 0), (pad, 0), (0, 0)))
    y = np.zeros((batch * time, p.out_channels), dtype=np.result_type(x, p.weight))
    for j, window in _tap_slices(p, time):
        x_tap = x_pad[:, window, :].reshape(-1, channels)
        y += matmul(x_tap, p.weight[:, :, j].T)
    y += p.bias
    return y.reshape(batch, time, p.out_channels), new_cache("conv", mode, p, x_pad=x_pad, shape=x.shape)


@register_backward("conv")
def causal_conv1d_bwd(dy: np.ndarray, cache: LayerCache) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """
    :return: dL/dx, {"weight": dL/dw, "bias": dL/db}
    """
    p: ConvParams = cache["params"]
    check_train_cache(cache, "conv", p)
    batch, time, channels = cache["shape"]
    if dy.shape != (batch, time, p.out_channels):
        raise DimensionError(f"Conv output gradient {dy.shape} does not match output {(batch, time, p.out_channels)}")
    x_pad = cache["x_pad"]
    dy_flat = dy.reshape(-1, p.out_channels)
    dx_pad = np.zeros_like(x_pad, dtype=np.result_type(dy, p.weight))
    dw = np.zeros_like(p.weight, dtype=np.result_type(dy, p.weight))
    for j, window in _tap_slices(p, time):
        x_tap = x_pad[:, window, :].reshape(-1, channels)
        dw[:, :, j] = matmul(dy_flat.T, x_tap)
        dx_pad[:, window, :] += matmul(dy_flat, p.weight[:, :, j]).reshape(batch, time, channels)
    pad = x_pad.shape[1] - time
    return dx_pad[:, pad:, :], {"weight": dw, "bias": dy_flat.sum(axis=0)}


class TCNLayer(Layer):
    """
    Dilated causal convolutions, each followed by ReLU, one per dilation.
    The input is added to the output when in and out channel counts match.
    """

    def __init__(self, name: str, in_channels: int, filters: int, kernel: int, dilations: Sequence[int] = (1,),
                 rng: Optional[Rng] = None, precision: Precision = Precision.STANDARD):
        super().__init__(name)
        if kernel < 1:
            raise ArgumentError(f"Kernel must be >= 1: {kernel}")
        if len(dilations) == 0:
            raise ArgumentError("A TCN layer needs at least one dilation")
        self.in_channels, self.filters, self.kernel = in_channels, filters, kernel
        self.dilations = tuple(int(d) for d in dilations)
        self.residual = in_channels == filters
        self.convs: List[ConvParams] = []
        channels = in_channels
        for dilation in self.dilations:
            shape = (filters, channels, kernel)
            if rng is None:
                weight = np.zeros(shape, precision.dtype)
            else:
                weight = glorot_uniform(rng, shape, channels * kernel, filters * kernel, precision)
            self.convs.append(ConvParams(weight=weight, bias=np.zeros(filters, precision.dtype), dilation=dilation))
            channels = filters

    def param_structs(self):
        return list(self.convs)

    def forward(self, x, mode, rng=None):
        mode = Mode.from_val(mode)
        conv_caches, relu_caches = [], []
        h = x
        for p in self.convs:
            h, conv_cache = causal_conv1d_fwd(h, p, mode)
            h, relu_cache = relu_fwd(h, mode)
            conv_caches.append(conv_cache)
            relu_caches.append(relu_cache)
        if self.residual:
            h = h + x
        return h, new_cache("tcn", mode, conv_caches=conv_caches, relu_caches=relu_caches)

    def backward(self, dy, cache):
        check_train_cache(cache, "tcn")
        grads = OrderedDict()
        dh = dy
        count = len(self.convs)
        for i in reversed(range(count)):
            dh, _ = relu_bwd(dh, cache["relu_caches"][i])
            dh, conv_grads = causal_conv1d_bwd(dh, cache["conv_caches"][i])
            prefix = self._struct_prefix(i, count)
            grads[f"{prefix}weight"] = conv_grads["weight"]
            grads[f"{prefix}bias"] = conv_grads["bias"]
        if self.residual:
            dh = dh + dy
        ordered = OrderedDict((key, grads[key]) for key in self.params.keys())
        return dh, ordered

    def output_shape(self, in_shape):
        if len(in_shape) != 2 or in_shape[1] != self.in_channels:
            raise DimensionError(f"{self.name} expects (time, {self.in_channels}), got {in_shape}")
        return in_shape[0], self.filters

    def param_count(self):
        count = sum(p.in_channels * p.out_channels * p.kernel + p.out_channels for p in self.convs)
        return count, count
