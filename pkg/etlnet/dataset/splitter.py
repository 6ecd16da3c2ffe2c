from dataclasses import dataclass, field
from enum import Enum
from logging import getLogger
from typing import Generator, List, Mapping, Optional, Tuple

import numpy as np
from sklearn.model_selection import LeaveOneGroupOut

from ..common import optional, tuple_of
from ..errors import ArgumentError, DataError
from ..numcore import Rng
from .normalizer import NormScheme, NormStats, apply_array_normalizer, fit_array_normalizer
from .windowing import WindowSet, balance_classes

__all__ = ["SplitMode", "SplitSpec", "DatasetSplitter", "split"]

logger = getLogger(__name__)


class SplitMode(Enum):
    HOLDOUT_DISJOINT = "holdout_disjoint"
    LEAVE_ONE_OUT = "leave_one_out"

    @staticmethod
    def from_val(val) -> "SplitMode":
        if isinstance(val, SplitMode):
            return val
        for mode in SplitMode:
            if mode.value == val:
                return mode
        raise ArgumentError(f"Invalid split mode: {val}. Expected {[m.value for m in SplitMode]}")


@dataclass(frozen=True)
class SplitSpec:
    """
    holdout_disjoint: the traces in holdout go to validation.
    leave_one_out: the loo_index-th trace in sorted trace id order goes to validation.
    """
    mode: SplitMode = SplitMode.LEAVE_ONE_OUT
    holdout: Tuple[str, ...] = field(default=(), metadata={"parse": tuple_of(str)})
    loo_index: Optional[int] = field(default=0, metadata={"parse": optional(int)})

    def __post_init__(self):
        object.__setattr__(self, "mode", SplitMode.from_val(self.mode))
        object.__setattr__(self, "holdout", tuple(self.holdout))
        if self.mode is SplitMode.HOLDOUT_DISJOINT and len(self.holdout) == 0:
            raise ArgumentError("holdout_disjoint needs at least one holdout trace id")
        if self.mode is SplitMode.LEAVE_ONE_OUT and (self.loo_index is None or self.loo_index < 0):
            raise ArgumentError(f"leave_one_out needs a non-negative loo_index, got {self.loo_index}")


class DatasetSplitter:
    def __init__(self, scheme=NormScheme.MINMAX, balance: bool = True):
        self.scheme = NormScheme.from_val(scheme)
        self.balance = balance

    def create_leave_one_out_generator(self, trace_ids: List[str]) -> \
            Generator[Tuple[List[str], List[str]], None, None]:
        """
        One fold per trace, folds in sorted trace id order.
        :return: (train trace ids, validation trace ids)
        """
        ids = np.array(sorted(trace_ids), dtype=object)
        for train_indices, val_indices in LeaveOneGroupOut().split(np.zeros((len(ids), 1)), groups=ids):
            yield list(ids[train_indices]), list(ids[val_indices])

    def resolve_trace_ids(self, trace_ids: List[str], spec: SplitSpec) -> Tuple[List[str], List[str]]:
        trace_ids = sorted(trace_ids)
        if spec.mode is SplitMode.HOLDOUT_DISJOINT:
            unknown = [t for t in spec.holdout if t not in trace_ids]
            if unknown:
                raise ArgumentError(f"Unknown holdout trace ids {unknown}. Known: {trace_ids}")
            return [t for t in trace_ids if t not in spec.holdout], [t for t in trace_ids if t in spec.holdout]
        if len(trace_ids) < 2:
            raise DataError(f"leave_one_out needs at least 2 traces, got {trace_ids}")
        if spec.loo_index >= len(trace_ids):
            raise ArgumentError(f"loo_index {spec.loo_index} is out of range for {len(trace_ids)} traces")
        folds = list(self.create_leave_one_out_generator(trace_ids))
        return folds[spec.loo_index]

    def split_train_val(self, by_trace: Mapping[str, WindowSet], spec: SplitSpec, rng: Optional[Rng] = None) \
            -> Tuple[WindowSet, WindowSet, NormStats]:
        """
        Normalization is fit on the distinct training samples and applied to both sides;
        balancing touches the training side only.
        :param rng: balancing rng, required when balancing
        """
        train_ids, val_ids = self.resolve_trace_ids(list(by_trace.keys()), spec)
        assert not set(train_ids) & set(val_ids)
        train = WindowSet.concat([by_trace[t] for t in train_ids]) if train_ids else None
        val = WindowSet.concat([by_trace[t] for t in val_ids]) if val_ids else None
        if train is None or len(train) == 0:
            raise DataError(f"Training side is empty (traces {train_ids})")
        if val is None or len(val) == 0:
            raise DataError(f"Validation side is empty (traces {val_ids})")
        # each sample counts once however many windows cover it
        stats = fit_array_normalizer(train.sample_rows(), self.scheme, train.feature_names,
                                     fitted_on=f"train:{','.join(train_ids)}")
        train = train.with_x(apply_array_normalizer(train.x, stats))
        val = val.with_x(apply_array_normalizer(val.x, stats))
        if self.balance:
            if rng is None:
                raise ArgumentError("Balancing needs an rng")
            train = balance_classes(train, rng)
        logger.info(f"Split {len(train)} train windows ({len(train_ids)} traces) / "
                    f"{len(val)} validation windows ({val_ids})")
        return train, val, stats


def split(by_trace: Mapping[str, WindowSet], spec: SplitSpec, rng: Optional[Rng] = None,
          scheme=NormScheme.MINMAX, balance: bool = True) -> Tuple[WindowSet, WindowSet]:
    train, val, _ = DatasetSplitter(scheme, balance).split_train_val(by_trace, spec, rng)
    return train, val
