import warnings
from typing import Optional, Sequence, Tuple

warnings.simplefilter('ignore')
import numpy as np

from etlnet.dataset import FEATURE_NAMES, BumpLabel, SampleRecord, SensorPosition, Side, SynthConfig, WindowSet
from etlnet.models import ModelConfig, VariantName
from etlnet.numcore import Precision, Rng


def gen_random_tensor(shape: Tuple[int, ...], seed: int = 0, precision: Precision = Precision.EXTENDED):
    return Rng(seed).normal(shape).astype(precision.dtype)


def assert_tensor_shape(result_tensor: np.ndarray, expected_shape: Tuple, message: str = ""):
    assert result_tensor.shape == expected_shape, message or f"{result_tensor.shape} != {expected_shape}"


def make_records(trace_id: str, bumps: Sequence[int], values: Optional[np.ndarray] = None,
                 position=SensorPosition.DASHBOARD, side=Side.RIGHT, start_time: float = 0.):
    """
    One record per entry of bumps (1 = bump sample). values: (len(bumps), 7), defaults to the sample index.
    """
    n = len(bumps)
    if values is None:
        values = np.repeat(np.arange(n, dtype=np.float64)[:, None], len(FEATURE_NAMES), axis=1)
    return [SampleRecord(timestamp=start_time + i * 0.01, **{name: float(values[i, c])
                                                             for c, name in enumerate(FEATURE_NAMES)},
                         label=BumpLabel.BUMP if bumps[i] else BumpLabel.NO_BUMP, position=position, side=side,
                         trace_id=trace_id)
            for i in range(n)]


def make_windowset(labels: Sequence[int], trace_id: str = "PVS1", window: int = 4, seed: int = 0,
                   channels: int = len(FEATURE_NAMES)) -> WindowSet:
    x = Rng(seed).normal((len(labels), window, channels)).astype(np.float32)
    return WindowSet(x=x, y=np.asarray(labels, dtype=np.uint8), window=window, stride=window, threshold=0.15,
                     provenance=[(trace_id, i * window) for i in range(len(labels))],
                     feature_names=FEATURE_NAMES[:channels])


def tiny_model_config(variant=VariantName.ETLNET, window: int = 16, precision=Precision.STANDARD,
                      **kwargs) -> ModelConfig:
    values = dict(variant=variant, window=window, tcn_filters=4, lstm_hidden=3, dense_hidden=4,
                  precision=precision)
    values.update(kwargs)
    return ModelConfig(**values)


def small_synth_config(seed: int = 0, **kwargs) -> SynthConfig:
    values = dict(duration_samples=400, bump_count=3, bump_len_samples=20, seed=seed)
    values.update(kwargs)
    return SynthConfig(**values)
