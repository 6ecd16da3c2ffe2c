from dataclasses import replace
from logging import getLogger
from typing import Mapping, Optional, Sequence, Tuple

from ..callbacks import Callback
from ..dataset import DataConfig, DatasetSplitter, NormStats, SplitMode, SplitSpec, WindowSet
from ..errors import DataError
from ..models import Model, ModelConfig, build_model
from ..numcore import Rng, derive_seed
from .config import TrainConfig
from .trainer import TrainHistory, train

__all__ = ["split_traces", "fit_traces", "restrict_split"]

logger = getLogger(__name__)

# child streams of a run seed
_SPLIT_STREAM = 0
_INIT_STREAM = 1
_TRAIN_STREAM = 2


def restrict_split(spec: SplitSpec, trace_ids: Sequence[str]) -> SplitSpec:
    """
    Keeps the holdout traces that are present. Leave-one-out specs are returned as they are.
    """
    if spec.mode is not SplitMode.HOLDOUT_DISJOINT:
        return spec
    holdout = tuple(trace_id for trace_id in spec.holdout if trace_id in trace_ids)
    if len(holdout) == 0:
        raise DataError(f"None of the holdout traces {list(spec.holdout)} is among {list(trace_ids)}")
    return replace(spec, holdout=holdout)


def split_traces(by_trace: Mapping[str, WindowSet], data_cfg: DataConfig, split_spec: SplitSpec,
                 seed: int) -> Tuple[WindowSet, WindowSet, NormStats]:
    """
    Same seed, same windows and same split spec give the same train / validation sets,
    so a checkpoint can be evaluated on exactly the data it was validated on.
    """
    splitter = DatasetSplitter(data_cfg.scheme, data_cfg.balance)
    return splitter.split_train_val(by_trace, split_spec, Rng(seed).child(_SPLIT_STREAM))


def fit_traces(by_trace: Mapping[str, WindowSet], model_cfg: ModelConfig, data_cfg: DataConfig,
               split_spec: SplitSpec, train_cfg: TrainConfig, seed: int,
               callbacks: Optional[Sequence[Callback]] = None, progress: bool = False) \
        -> Tuple[Model, TrainHistory, WindowSet]:
    """
    split -> normalize -> balance -> build -> train, every random stream derived from seed.
    :return: trained model, history, validation windows
    """
    train_ws, val_ws, _ = split_traces(by_trace, data_cfg, split_spec, seed)
    model = build_model(model_cfg, Rng(seed).child(_INIT_STREAM))
    train_cfg = replace(train_cfg, seed=derive_seed(seed, _TRAIN_STREAM))
    _, history = train(model, train_ws, val_ws, train_cfg, callbacks, progress)
    return model, history, val_ws
