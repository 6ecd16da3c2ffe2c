from collections import OrderedDict
from logging import getLogger
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import DimensionError
from ..numcore import Rng
from .config import ModelConfig, VariantName
from .layers import Activation, BatchNorm, BiLSTM, Dense, Dropout, GlobalAveragePooling, Layer, LayerCache, LSTM, \
    Mode, TCNLayer

__all__ = ["Model", "build_model", "forward", "backward", "count_params", "variant_catalog"]

logger = getLogger(__name__)

_VARIANT_DESCRIPTIONS = OrderedDict([
    (VariantName.ETLNET, "Base model: two TCN blocks, a BiLSTM block and the dense head"),
    (VariantName.BILSTM3, "Three BiLSTM blocks, each followed by batch normalization and dropout"),
    (VariantName.TCN3, "Three TCN blocks, global average pooling over time"),
    (VariantName.SINGLE_TCN, "One TCN block, no recurrent block"),
    (VariantName.DUAL_TCN, "Two TCN blocks, no recurrent block"),
    (VariantName.REDUCED_FEATURE, "Base model without the gyroscope channels"),
    (VariantName.LSTM_REPLACEMENT, "Three TCN blocks and a unidirectional LSTM block"),
    (VariantName.TRIPLE_TCN_BILSTM, "Three TCN blocks and a BiLSTM block"),
])


class Model:
    """
    forward
        input: (Batch size, window, in_features)
        output: (Batch size, 1) probability of a speed bump
    """

    def __init__(self, config: ModelConfig, layers: Sequence[Layer]):
        self.config = config
        self.layers: List[Layer] = list(layers)
        names = [layer.name for layer in self.layers]
        assert len(set(names)) == len(names), f"Layer names must be unique: {names}"

    def __len__(self):
        return len(self.layers)

    def generate_model_name(self, suffix: str = "") -> str:
        return f"{self.config.variant.value}_w{self.config.window}{suffix}"

    def layer_names(self) -> List[str]:
        return [layer.name for layer in self.layers]

    def parameters(self) -> "OrderedDict[str, np.ndarray]":
        """
        :return: "layer.param" -> live trainable array
        """
        result = OrderedDict()
        for layer in self.layers:
            for key, tensor in layer.params.items():
                result[f"{layer.name}.{key}"] = tensor
        return result

    def buffers(self) -> "OrderedDict[str, np.ndarray]":
        result = OrderedDict()
        for layer in self.layers:
            for key, tensor in layer.buffers.items():
                result[f"{layer.name}.{key}"] = tensor
        return result

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        result = self.parameters()
        result.update(self.buffers())
        return result

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        own = self.state_dict()
        missing = [key for key in own if key not in state]
        unexpected = [key for key in state if key not in own]
        if missing or unexpected:
            raise DimensionError(f"State mismatch. missing: {missing}, unexpected: {unexpected}")
        for key, tensor in own.items():
            if state[key].shape != tensor.shape:
                raise DimensionError(f"{key}: expected shape {tensor.shape}, got {state[key].shape}")
            tensor[...] = state[key]
        self.mark_updated()

    def mark_updated(self):
        for layer in self.layers:
            layer.mark_updated()

    def forward(self, x: np.ndarray, mode: Mode, rng: Optional[Rng] = None) -> Tuple[np.ndarray, List[LayerCache]]:
        expected = (self.config.window, self.config.in_features)
        if x.ndim != 3 or x.shape[1:] != expected:
            raise DimensionError(f"Model input {x.shape} does not match (batch, window, in_features) = "
                                 f"(batch, {expected[0]}, {expected[1]})")
        mode = Mode.from_val(mode)
        h = np.ascontiguousarray(x, dtype=self.config.precision.dtype)
        caches = []
        for layer in self.layers:
            h, cache = layer.forward(h, mode, rng)
            caches.append(cache)
        return h, caches

    def backward(self, dp: np.ndarray, caches: Sequence[LayerCache]) -> "OrderedDict[str, np.ndarray]":
        """
        :param dp: dL/dp, (Batch size, 1)
        :return: gradients keyed like parameters()
        """
        if len(caches) != len(self.layers):
            raise DimensionError(f"Expected {len(self.layers)} caches, got {len(caches)}")
        grads = {}
        dy = dp
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            dy, layer_grads = layer.backward(dy, cache)
            for key, grad in layer_grads.items():
                grads[f"{layer.name}.{key}"] = grad
        return OrderedDict((key, grads[key]) for key in self.parameters().keys())

    def count_params(self) -> Tuple[int, int]:
        trainable, total = 0, 0
        for layer in self.layers:
            layer_trainable, layer_total = layer.param_count()
            trainable += layer_trainable
            total += layer_total
        return trainable, total

    def summary(self) -> List[Tuple[str, str, Tuple[int, ...], int]]:
        """
        :return: (name, layer type, per-sample output shape, trainable params) per layer
        """
        shape: Tuple[int, ...] = (self.config.window, self.config.in_features)
        rows = []
        for layer in self.layers:
            shape = layer.output_shape(shape)
            rows.append((layer.name, layer.__class__.__name__, shape, layer.param_count()[0]))
        return rows


class _Builder:
    def __init__(self, config: ModelConfig, rng: Rng):
        self.config = config
        self.rng = rng
        self.layers: List[Layer] = []
        self.shape: Tuple[int, ...] = (config.window, config.in_features)

    def _add(self, layer: Layer):
        self.shape = layer.output_shape(self.shape)
        self.layers.append(layer)

    def _layer_rng(self) -> Rng:
        return self.rng.child(len(self.layers))

    def _regularize(self, index: int):
        cfg = self.config
        self._add(BatchNorm(f"bn{index}", self.shape[-1], cfg.bn_momentum, cfg.bn_epsilon, cfg.precision))
        self._add(Dropout(f"dropout{index}", cfg.dropout_rate))

    def tcn_block(self, index: int):
        cfg = self.config
        self._add(TCNLayer(f"tcn{index}", self.shape[-1], cfg.tcn_filters, cfg.kernel, cfg.dilations_per_tcn_layer,
                           self._layer_rng(), cfg.precision))
        self._regularize(index)

    def bilstm_block(self, index: int, return_sequences: bool = False):
        cfg = self.config
        self._add(BiLSTM(f"bilstm{index}", self.shape[-1], cfg.lstm_hidden, return_sequences, self._layer_rng(),
                         cfg.precision))
        self._regularize(index)

    def lstm_block(self, index: int):
        cfg = self.config
        self._add(LSTM(f"lstm{index}", self.shape[-1], cfg.lstm_hidden, False, self._layer_rng(), cfg.precision))
        self._regularize(index)

    def pool(self):
        self._add(GlobalAveragePooling("pool"))

    def head(self):
        cfg = self.config
        self._add(Dense("dense1", self.shape[-1], cfg.dense_hidden, Activation.RELU, self._layer_rng(),
                        cfg.precision))
        self._add(Dense("dense2", cfg.dense_hidden, 1, Activation.SIGMOID, self._layer_rng(), cfg.precision))


def build_model(config: ModelConfig, rng: Rng) -> Model:
    """
    Layer i is initialised from rng.child(i), so variants that share a prefix share its initial values.
    """
    builder = _Builder(config, rng)
    variant = config.variant
    if variant in (VariantName.ETLNET, VariantName.REDUCED_FEATURE):
        builder.tcn_block(1)
        builder.tcn_block(2)
        builder.bilstm_block(3)
    elif variant is VariantName.BILSTM3:
        builder.bilstm_block(1, return_sequences=True)
        builder.bilstm_block(2, return_sequences=True)
        builder.bilstm_block(3)
    elif variant in (VariantName.TCN3, VariantName.SINGLE_TCN, VariantName.DUAL_TCN):
        count = {VariantName.TCN3: 3, VariantName.SINGLE_TCN: 1, VariantName.DUAL_TCN: 2}[variant]
        for index in range(1, count + 1):
            builder.tcn_block(index)
        builder.pool()
    elif variant is VariantName.LSTM_REPLACEMENT:
        for index in range(1, 4):
            builder.tcn_block(index)
        builder.lstm_block(4)
    elif variant is VariantName.TRIPLE_TCN_BILSTM:
        for index in range(1, 4):
            builder.tcn_block(index)
        builder.bilstm_block(4)
    else:
        raise AssertionError(f"Unhandled variant {variant}")
    builder.head()
    model = Model(config, builder.layers)
    logger.debug(f"Built {variant.value} with {len(model)} layers, {model.count_params()[0]} trainable params")
    return model


def forward(model: Model, x: np.ndarray, mode: Mode, rng: Optional[Rng] = None) -> Tuple[np.ndarray, List[LayerCache]]:
    return model.forward(x, mode, rng)


def backward(model: Model, dp: np.ndarray, caches: Sequence[LayerCache]) -> "OrderedDict[str, np.ndarray]":
    return model.backward(dp, caches)


def count_params(model: Model) -> Tuple[int, int]:
    """
    Closed-form parameter count.
    :return: trainable, total (total adds the batch-norm running statistics)
    """
    return model.count_params()


def variant_catalog(window: int = 300) -> List[Tuple[VariantName, str, ModelConfig]]:
    return [(variant, description, ModelConfig(variant=variant, window=window))
            for variant, description in _VARIANT_DESCRIPTIONS.items()]
