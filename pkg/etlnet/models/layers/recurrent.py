from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from ...errors import DimensionError
from ...numcore import Precision, Rng, matmul, sigmoid
from .base import Layer, LayerCache, Mode, ParamStruct, check_train_cache, glorot_uniform, new_cache, \
    register_backward

__all__ = ["LstmParams", "lstm_fwd", "lstm_bwd", "bilstm_fwd", "bilstm_bwd", "LSTM", "BiLSTM"]

GATES = ("i", "f", "o", "g")


@dataclass(eq=False)
class LstmParams(ParamStruct):
    """
    Per-gate weights, gates ordered input, forget, output, candidate.
    w_*: (hidden, in), u_*: (hidden, hidden), b_*: (hidden,)
    """
    w_i: np.ndarray
    w_f: np.ndarray
    w_o: np.ndarray
    w_g: np.ndarray
    u_i: np.ndarray
    u_f: np.ndarray
    u_o: np.ndarray
    u_g: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_g: np.ndarray

    def __post_init__(self):
        hidden, in_features = self.w_i.shape
        for gate in GATES:
            w, u, b = getattr(self, f"w_{gate}"), getattr(self, f"u_{gate}"), getattr(self, f"b_{gate}")
            if w.shape != (hidden, in_features) or u.shape != (hidden, hidden) or b.shape != (hidden,):
                raise DimensionError(f"LSTM gate {gate} shapes {w.shape}, {u.shape}, {b.shape} "
                                     f"do not share hidden size {hidden}")

    @property
    def hidden(self) -> int:
        return self.w_i.shape[0]

    @property
    def in_features(self) -> int:
        return self.w_i.shape[1]

    @staticmethod
    def create(in_features: int, hidden: int, rng: Optional[Rng] = None, forget_bias: float = 1.,
               precision: Precision = Precision.STANDARD) -> "LstmParams":
        dtype = precision.dtype
        values = {}
        for gate in GATES:
            if rng is None:
                values[f"w_{gate}"] = np.zeros((hidden, in_features), dtype)
                values[f"u_{gate}"] = np.zeros((hidden, hidden), dtype)
            else:
                values[f"w_{gate}"] = glorot_uniform(rng, (hidden, in_features), in_features, hidden, precision)
                values[f"u_{gate}"] = glorot_uniform(rng, (hidden, hidden), hidden, hidden, precision)
            values[f"b_{gate}"] = np.zeros(hidden, dtype)
        values["b_f"][:] = forget_bias
        return LstmParams(**values)

    def stacked(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        :return: W (4H, in), U (4H, H), b (4H,) with gate blocks in i, f, o, g order
        """
        w = np.concatenate([getattr(self, f"w_{gate}") for gate in GATES], axis=0)
        u = np.concatenate([getattr(self, f"u_{gate}") for gate in GATES], axis=0)
        b = np.concatenate([getattr(self, f"b_{gate}") for gate in GATES], axis=0)
        return w, u, b

    def tensors(self):
        result = OrderedDict()
        for prefix in ("w", "u", "b"):
            for gate in GATES:
                key = f"{prefix}_{gate}"
                result[key] = getattr(self, key)
        return result

    def unstack_grads(self, dw: np.ndarray, du: np.ndarray, db: np.ndarray) -> "OrderedDict[str, np.ndarray]":
        hidden = self.hidden
        stacked = {"w": dw, "u": du, "b": db}
        result = OrderedDict()
        for prefix in ("w", "u", "b"):
            for k, gate in enumerate(GATES):
                result[f"{prefix}_{gate}"] = stacked[prefix][k * hidden:(k + 1) * hidden]
        return result


def lstm_fwd(x: np.ndarray, p: LstmParams, reverse: bool = False,
             mode: Mode = Mode.TRAIN) -> Tuple[np.ndarray, np.ndarray, LayerCache]:
    """
    :param x: (Batch size, time, in)
    :param reverse: process t = T-1 ... 0; h_last is then the state after index 0
    :return: h_seq (Batch size, time, hidden) indexed by input time, h_last (Batch size, hidden), cache
    """
    if x.ndim != 3 or x.shape[2] != p.in_features:
        raise DimensionError(f"LSTM input {x.shape} does not match {p.in_features} input features")
    batch, time, channels = x.shape
    hidden = p.hidden
    w, u, b = p.stacked()
    dtype = np.result_type(x, w)
    x_proj = (matmul(x.reshape(-1, channels), w.T) + b).reshape(batch, time, 4 * hidden)
    gates = np.zeros((batch, time, 4 * hidden), dtype)
    c_seq = np.zeros((batch, time, hidden), dtype)
    h_seq = np.zeros((batch, time, hidden), dtype)
    h_prev_seq = np.zeros((batch, time, hidden), dtype)
    c_prev_seq = np.zeros((batch, time, hidden), dtype)
    h = np.zeros((batch, hidden), dtype)
    c = np.zeros((batch, hidden), dtype)
    order = range(time - 1, -1, -1) if reverse else range(time)
    for t in order:
        h_prev_seq[:, t], c_prev_seq[:, t] = h, c
        z = x_proj[:, t] + matmul(h, u.T)
        i = sigmoid(z[:, :hidden])
        f = sigmoid(z[:, hidden:2 * hidden])
        o = sigmoid(z[:, 2 * hidden:3 * hidden])
        g = np.tanh(z[:, 3 * hidden:])
        c = f * c + i * g
        h = o * np.tanh(c)
        gates[:, t] = np.concatenate([i, f, o, g], axis=1)
        c_seq[:, t], h_seq[:, t] = c, h
    cache = new_cache("lstm", mode, p, x=x, gates=gates, c_seq=c_seq, h_prev_seq=h_prev_seq,
                      c_prev_seq=c_prev_seq, reverse=reverse)
    return h_seq, h, cache


def lstm_bwd(dh_seq: Optional[np.ndarray], dh_last: Optional[np.ndarray],
             cache: LayerCache) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """
    Backpropagation through time.
    :param dh_seq: dL/dh_seq or None
    :param dh_last: dL/dh_last or None
    """
    p: LstmParams = cache["params"]
    check_train_cache(cache, "lstm", p)
    x, gates, c_seq = cache["x"], cache["gates"], cache["c_seq"]
    batch, time, channels = x.shape
    hidden = p.hidden
    w, u, _ = p.stacked()
    dtype = gates.dtype
    if dh_seq is not None and dh_seq.shape != (batch, time, hidden):
        raise DimensionError(f"LSTM sequence gradient {dh_seq.shape} does not match {(batch, time, hidden)}")
    if dh_last is not None and dh_last.shape != (batch, hidden):
        raise DimensionError(f"LSTM final-state gradient {dh_last.shape} does not match {(batch, hidden)}")
    dh_next = np.zeros((batch, hidden), dtype) if dh_last is None else dh_last.astype(dtype)
    dc_next = np.zeros((batch, hidden), dtype)
    dz_seq = np.zeros((batch, time, 4 * hidden), dtype)
    du = np.zeros((4 * hidden, hidden), dtype)
    order = range(time) if cache["reverse"] else range(time - 1, -1, -1)
    for t in order:
        dh = dh_next if dh_seq is None else dh_next + dh_seq[:, t]
        i, f, o, g = (gates[:, t, k * hidden:(k + 1) * hidden] for k in range(4))
        tanh_c = np.tanh(c_seq[:, t])
        dc = dc_next + dh * o * (1 - tanh_c ** 2)
        dz = np.concatenate([dc * g * i * (1 - i),
                             dc * cache["c_prev_seq"][:, t] * f * (1 - f),
                             dh * tanh_c * o * (1 - o),
                             dc * i * (1 - g ** 2)], axis=1)
        dz_seq[:, t] = dz
        du += matmul(dz.T, cache["h_prev_seq"][:, t])
        dh_next = matmul(dz, u)
        dc_next = dc * f
    dz_flat = dz_seq.reshape(-1, 4 * hidden)
    dw = matmul(dz_flat.T, x.reshape(-1, channels))
    db = dz_flat.sum(axis=0)
    dx = matmul(dz_flat, w).reshape(batch, time, channels)
    return dx, p.unstack_grads(dw, du, db)


@register_backward("lstm")
def _lstm_layer_bwd(dy: np.ndarray, cache: LayerCache) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    if dy.ndim == 3:
        return lstm_bwd(dy, None, cache)
    return lstm_bwd(None, dy, cache)


def bilstm_fwd(x: np.ndarray, p_fwd: LstmParams, p_bwd: LstmParams, mode: Mode = Mode.TRAIN,
               return_sequences: bool = False) -> Tuple[np.ndarray, LayerCache]:
    """
    :return: concat(forward h_last, backward h_last) (Batch size, 2 * hidden),
             or with return_sequences the concatenated sequences (Batch size, time, 2 * hidden)
    """
    if p_fwd.hidden != p_bwd.hidden:
        raise DimensionError(f"BiLSTM hidden sizes differ: {p_fwd.hidden} vs {p_bwd.hidden}")
    h_seq_f, h_last_f, cache_f = lstm_fwd(x, p_fwd, reverse=False, mode=mode)
    h_seq_b, h_last_b, cache_b = lstm_fwd(x, p_bwd, reverse=True, mode=mode)
    if return_sequences:
        out = np.concatenate([h_seq_f, h_seq_b], axis=2)
    else:
        out = np.concatenate([h_last_f, h_last_b], axis=1)
    return out, new_cache("bilstm", mode, fwd=cache_f, bwd=cache_b, hidden=p_fwd.hidden,
                          return_sequences=return_sequences)


@register_backward("bilstm")
def bilstm_bwd(dy: np.ndarray, cache: LayerCache) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """
    :return: dL/dx, gradients keyed "fwd.<name>" and "bwd.<name>"
    """
    check_train_cache(cache, "bilstm")
    hidden = cache["hidden"]
    dy_f, dy_b = dy[..., :hidden], dy[..., hidden:]
    if cache["return_sequences"]:
        dx_f, grads_f = lstm_bwd(dy_f, None, cache["fwd"])
        dx_b, grads_b = lstm_bwd(dy_b, None, cache["bwd"])
    else:
        dx_f, grads_f = lstm_bwd(None, dy_f, cache["fwd"])
        dx_b, grads_b = lstm_bwd(None, dy_b, cache["bwd"])
    grads = OrderedDict()
    grads.update((f"fwd.{key}", value) for key, value in grads_f.items())
    grads.update((f"bwd.{key}", value) for key, value in grads_b.items())
    return dx_f + dx_b, grads


def _lstm_param_count(in_features: int, hidden: int) -> int:
    return 4 * (in_features * hidden + hidden * hidden + hidden)


class LSTM(Layer):
    def __init__(self, name: str, in_features: int, hidden: int, return_sequences: bool = False,
                 rng: Optional[Rng] = None, precision: Precision = Precision.STANDARD):
        super().__init__(name)
        self.in_features, self.hidden = in_features, hidden
        self.return_sequences = return_sequences
        self.p = LstmParams.create(in_features, hidden, rng, precision=precision)

    def param_structs(self):
        return [self.p]

    def forward(self, x, mode, rng=None):
        h_seq, h_last, cache = lstm_fwd(x, self.p, reverse=False, mode=mode)
        return (h_seq if self.return_sequences else h_last), cache

    def backward(self, dy, cache):
        if self.return_sequences:
            return lstm_bwd(dy, None, cache)
        return lstm_bwd(None, dy, cache)

    def output_shape(self, in_shape):
        if len(in_shape) != 2 or in_shape[1] != self.in_features:
            raise DimensionError(f"{self.name} expects (time, {self.in_features}), got {in_shape}")
        return (in_shape[0], self.hidden) if self.return_sequences else (self.hidden,)

    def param_count(self):
        count = _lstm_param_count(self.in_features, self.hidden)
        return count, count


class BiLSTM(Layer):
    def __init__(self, name: str, in_features: int, hidden: int, return_sequences: bool = False,
                 rng: Optional[Rng] = None, precision: Precision = Precision.STANDARD):
        super().__init__(name)
        self.in_features, self.hidden = in_features, hidden
        self.return_sequences = return_sequences
        self.p_fwd = LstmParams.create(in_features, hidden, rng, precision=precision)
        self.p_bwd = LstmParams.create(in_features, hidden, rng, precision=precision)

    def param_structs(self):
        return [self.p_fwd, self.p_bwd]

    def _struct_prefix(self, index, count):
        return ("fwd.", "bwd.")[index]

    def forward(self, x, mode, rng=None):
        return bilstm_fwd(x, self.p_fwd, self.p_bwd, mode, self.return_sequences)

    def backward(self, dy, cache):
        return bilstm_bwd(dy, cache)

    def output_shape(self, in_shape):
        if len(in_shape) != 2 or in_shape[1] != self.in_features:
            raise DimensionError(f"{self.name} expects (time, {self.in_features}), got {in_shape}")
        return (in_shape[0], 2 * self.hidden) if self.return_sequences else (2 * self.hidden,)

    def param_count(self):
        count = 2 * _lstm_param_count(self.in_features, self.hidden)
        return count, count
