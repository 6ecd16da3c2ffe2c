from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Sequence, Union

import numpy as np
from sklearn.preprocessing import MinMaxScaler, StandardScaler

from ..errors import ArgumentError, DimensionError
from .records import FEATURE_NAMES, SampleRecord, records_to_array

__all__ = ["NormScheme", "NormStats", "fit_normalizer", "apply_normalizer", "fit_array_normalizer",
           "apply_array_normalizer"]


class NormScheme(Enum):
    MINMAX = "minmax"
    ZSCORE = "zscore"

    @staticmethod
    def from_val(val) -> "NormScheme":
        if isinstance(val, NormScheme):
            return val
        for scheme in NormScheme:
            if scheme.value == val:
                return scheme
        raise ArgumentError(f"Invalid normalization scheme: {val}. Expected {[s.value for s in NormScheme]}")


@dataclass(frozen=True)
class NormStats:
    """
    Fitted per-feature statistics. Degenerate features (max == min, or std == 0) normalize to 0.
    """
    scheme: NormScheme
    features: tuple
    scaler: Union[MinMaxScaler, StandardScaler]
    degenerate: np.ndarray
    fitted_on: str = "train"

    @property
    def minimum(self) -> np.ndarray:
        return self.scaler.data_min_

    @property
    def maximum(self) -> np.ndarray:
        return self.scaler.data_max_

    @property
    def mean(self) -> np.ndarray:
        return self.scaler.mean_

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.scaler.var_)

    def transform(self, values: np.ndarray) -> np.ndarray:
        """
        :param values: (N, len(features))
        """
        if values.ndim != 2 or values.shape[1] != len(self.features):
            raise DimensionError(f"Normalizer fitted on {len(self.features)} features, got {values.shape}")
        result = self.scaler.transform(values.astype(np.float64, copy=False))
        result[:, self.degenerate] = 0.
        return result


def _fit(values: np.ndarray, scheme, features: Sequence[str], fitted_on: str) -> NormStats:
    scheme = NormScheme.from_val(scheme)
    if values.shape[0] == 0:
        raise ArgumentError("Cannot fit a normalizer on no data")
    if scheme is NormScheme.ZSCORE and values.shape[0] < 2:
        raise ArgumentError(f"zscore needs at least 2 samples, got {values.shape[0]}")
    if scheme is NormScheme.MINMAX:
        scaler = MinMaxScaler().fit(values)
        degenerate = scaler.data_max_ == scaler.data_min_
    else:
        scaler = StandardScaler().fit(values)
        degenerate = scaler.var_ == 0.
    return NormStats(scheme=scheme, features=tuple(features), scaler=scaler, degenerate=degenerate,
                     fitted_on=fitted_on)


def fit_normalizer(records: Sequence[SampleRecord], scheme=NormScheme.MINMAX,
                   features: Sequence[str] = FEATURE_NAMES, fitted_on: str = "train") -> NormStats:
    return _fit(records_to_array(records, features), scheme, features, fitted_on)


def apply_normalizer(records: Sequence[SampleRecord], stats: NormStats) -> List[SampleRecord]:
    """
    No clipping: values outside the fitted range map outside [0, 1].
    """
    if len(records) == 0:
        return []
    normalized = stats.transform(records_to_array(records, stats.features))
    return [replace(record, **{name: float(value) for name, value in zip(stats.features, row)})
            for record, row in zip(records, normalized)]


def fit_array_normalizer(x: np.ndarray, scheme=NormScheme.MINMAX, features: Sequence[str] = FEATURE_NAMES,
                         fitted_on: str = "train") -> NormStats:
    """
    :param x: (N, window, channels) or (N, channels); statistics are taken over every sample position
    """
    if x.shape[-1] != len(features):
        raise DimensionError(f"Got {x.shape[-1]} channels for features {list(features)}")
    return _fit(x.reshape(-1, x.shape[-1]).astype(np.float64), scheme, features, fitted_on)


def apply_array_normalizer(x: np.ndarray, stats: NormStats) -> np.ndarray:
    if x.size == 0:
        return x.copy()
    return stats.transform(x.reshape(-1, x.shape[-1])).reshape(x.shape).astype(x.dtype)
