from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

from ..common import optional, tuple_of
from ..dataset.records import FEATURE_NAMES, GYRO_FEATURES
from ..errors import ArgumentError
from ..numcore import Precision

__all__ = ["VariantName", "ModelConfig", "REDUCED_FEATURES"]

REDUCED_FEATURES = tuple(name for name in FEATURE_NAMES if name not in GYRO_FEATURES)


class VariantName(Enum):
    ETLNET = "etlnet"
    BILSTM3 = "bilstm3"
    TCN3 = "tcn3"
    SINGLE_TCN = "single_tcn"
    DUAL_TCN = "dual_tcn"
    REDUCED_FEATURE = "reduced_feature"
    LSTM_REPLACEMENT = "lstm_replacement"
    TRIPLE_TCN_BILSTM = "triple_tcn_bilstm"

    @staticmethod
    def from_val(val) -> "VariantName":
        if isinstance(val, VariantName):
            return val
        for variant in VariantName:
            if variant.value == val:
                return variant
        raise ArgumentError(f"Invalid variant: {val}. Expected {[v.value for v in VariantName]}")


@dataclass(frozen=True)
class ModelConfig:
    """
    features None means the variant's default feature set (all seven, gyroscope dropped for reduced_feature).
    """
    variant: VariantName = VariantName.ETLNET
    features: Optional[Tuple[str, ...]] = field(default=None, metadata={"parse": optional(tuple_of(str))})
    window: int = 300
    tcn_filters: int = 64
    kernel: int = 3
    dilations_per_tcn_layer: Tuple[int, ...] = (1,)
    lstm_hidden: int = 128
    dense_hidden: int = 64
    dropout_rate: float = 0.3
    bn_momentum: float = 0.1
    bn_epsilon: float = 1e-5
    precision: Precision = Precision.STANDARD

    def __post_init__(self):
        object.__setattr__(self, "variant", VariantName.from_val(self.variant))
        object.__setattr__(self, "precision", Precision.from_val(self.precision))
        if self.features is None:
            default = REDUCED_FEATURES if self.variant is VariantName.REDUCED_FEATURE else FEATURE_NAMES
            object.__setattr__(self, "features", default)
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "dilations_per_tcn_layer", tuple(int(d) for d in self.dilations_per_tcn_layer))
        self.validate()

    def validate(self):
        unknown = [name for name in self.features if name not in FEATURE_NAMES]
        if unknown or len(self.features) == 0 or len(set(self.features)) != len(self.features):
            raise ArgumentError(f"Invalid features {self.features}. Expected distinct names of {list(FEATURE_NAMES)}")
        for name in ("window", "tcn_filters", "kernel", "lstm_hidden", "dense_hidden"):
            if getattr(self, name) < 1:
                raise ArgumentError(f"{name} must be >= 1: {getattr(self, name)}")
        if len(self.dilations_per_tcn_layer) == 0 or min(self.dilations_per_tcn_layer) < 1:
            raise ArgumentError(f"Dilations must be a non-empty list of positive integers: "
                                f"{self.dilations_per_tcn_layer}")
        if self.window < self.kernel * max(self.dilations_per_tcn_layer):
            raise ArgumentError(f"window {self.window} is shorter than kernel * max dilation "
                                f"{self.kernel * max(self.dilations_per_tcn_layer)}")
        if not 0. <= self.dropout_rate < 1.:
            raise ArgumentError(f"dropout_rate must be in [0, 1): {self.dropout_rate}")
        if not 0. < self.bn_momentum < 1.:
            raise ArgumentError(f"bn_momentum must be in (0, 1): {self.bn_momentum}")
        if self.bn_epsilon <= 0.:
            raise ArgumentError(f"bn_epsilon must be positive: {self.bn_epsilon}")

    @property
    def in_features(self) -> int:
        return len(self.features)
