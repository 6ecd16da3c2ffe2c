import warnings
from collections import OrderedDict
from dataclasses import dataclass
from logging import getLogger
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import tqdm

from ..callbacks import Callback, EarlyStopping
from ..dataset.windowing import WindowSet
from ..errors import ArgumentError, DimensionError
from ..metrics.classification import BinaryConfusionMetric, MetricsReport
from ..models.etlnet import Model
from ..models.layers import Mode
from ..numcore import Rng
from .config import TrainConfig
from .loss import bce_loss
from .optimizer import AdamState, adam_step

__all__ = ["EpochRecord", "TrainHistory", "Trainer", "train", "evaluate", "predict_proba", "batch_bounds",
           "HISTORY_COLUMNS"]

logger = getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "train_loss", "val_accuracy", "val_precision", "val_recall", "val_f1")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int  # 1-based
    train_loss: float
    val_report: MetricsReport

    def metrics(self) -> "OrderedDict[str, float]":
        result = OrderedDict(train_loss=self.train_loss)
        for name, value in self.val_report.metrics().items():
            result[f"val_{name}"] = value
        return result

    def as_dict(self) -> "OrderedDict[str, float]":
        result = OrderedDict(epoch=self.epoch)
        result.update(self.metrics())
        return result


class TrainHistory:
    def __init__(self):
        self.records: List[EpochRecord] = []

    def __len__(self):
        return len(self.records)

    def __getitem__(self, index: int) -> EpochRecord:
        return self.records[index]

    def append(self, record: EpochRecord):
        self.records.append(record)

    @property
    def losses(self) -> List[float]:
        return [record.train_loss for record in self.records]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([record.as_dict() for record in self.records], columns=list(HISTORY_COLUMNS))

    def write_csv(self, path: Union[str, Path]):
        self.to_frame().to_csv(path, index=False, lineterminator="\n")


def batch_bounds(count: int, batch_size: int) -> List[Tuple[int, int]]:
    """
    Consecutive (start, stop) pairs. A trailing batch of a single window joins the previous batch,
    since batch normalization of final recurrent states needs two samples.
    """
    bounds = [(start, min(start + batch_size, count)) for start in range(0, count, batch_size)]
    if len(bounds) > 1 and bounds[-1][1] - bounds[-1][0] == 1:
        last = bounds.pop()
        bounds[-1] = (bounds[-1][0], last[1])
    return bounds


def _check_compatible(model: Model, ws: WindowSet, role: str):
    cfg = model.config
    if ws.window != cfg.window:
        raise DimensionError(f"{role} window {ws.window} does not match model window {cfg.window}")
    if ws.feature_names != cfg.features:
        raise DimensionError(f"{role} features {list(ws.feature_names)} do not match model features "
                             f"{list(cfg.features)}")


def predict_proba(model: Model, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """
    Eval-mode probabilities.
    :param x: (N, window, in_features)
    :return: (N,)
    """
    result = []
    for start, stop in batch_bounds(x.shape[0], batch_size):
        p, _ = model.forward(x[start:stop], Mode.EVAL)
        result.append(p.reshape(-1))
    return np.concatenate(result) if result else np.zeros(0)


def evaluate(model: Model, ws: WindowSet, threshold: float = 0.5, batch_size: int = 256) -> MetricsReport:
    if len(ws) == 0:
        raise ArgumentError("Cannot evaluate an empty window set")
    _check_compatible(model, ws, "Evaluation")
    metric = BinaryConfusionMetric(threshold)
    metric.update(predict_proba(model, ws.x, batch_size), ws.y)
    return metric.compute()


class Trainer:
    """
    Epoch loop: seeded shuffling and dropout per epoch, Adam updates on train-mode batches,
    eval-mode validation after every epoch.
    Batch norm running statistics move only with an optimizer step: at learning_rate 0 an epoch leaves
    the model unchanged.
    """

    def __init__(self, cfg: TrainConfig, callbacks: Optional[Sequence[Callback]] = None, progress: bool = False):
        self.cfg = cfg
        self.callbacks: List[Callback] = list(callbacks or [])
        if cfg.early_stop_patience is not None:
            self.callbacks.append(EarlyStopping(cfg.early_stop_patience))
        self.progress = progress
        self.history = TrainHistory()
        self.current_epoch = 0
        self.should_stop = False
        self.model: Optional[Model] = None

    def _train_epoch(self, model: Model, ws: WindowSet, state: AdamState, epoch: int) -> float:
        base = Rng(self.cfg.seed)
        order = base.child(epoch, 0).permutation(len(ws)) if self.cfg.shuffle else np.arange(len(ws))
        dropout_rng = base.child(epoch, 1)
        frozen = {key: tensor.copy() for key, tensor in model.buffers().items()} \
            if self.cfg.learning_rate == 0. else None
        total_loss = 0.
        for start, stop in batch_bounds(len(ws), self.cfg.batch_size):
            indices = order[start:stop]
            p, caches = model.forward(ws.x[indices], Mode.TRAIN, dropout_rng)
            loss, dp = bce_loss(p, ws.y[indices])
            grads = model.backward(dp, caches)
            adam_step(model.parameters(), grads, state, self.cfg)
            model.mark_updated()
            total_loss += loss * (stop - start)
        if frozen is not None:
            for key, tensor in model.buffers().items():
                tensor[...] = frozen[key]
            model.mark_updated()
        return total_loss / len(ws)

    def fit(self, model: Model, train_ws: WindowSet, val_ws: WindowSet) -> TrainHistory:
        if len(train_ws) == 0:
            raise ArgumentError("Cannot train on an empty window set")
        _check_compatible(model, train_ws, "Training")
        _check_compatible(model, val_ws, "Validation")
        negatives, positives = train_ws.class_counts()
        if negatives != positives:
            warnings.warn(f"Training set is unbalanced: {negatives} negative / {positives} positive windows")
        self.model = model
        state = AdamState.create(model.parameters())
        epochs = tqdm.tqdm(range(self.cfg.epochs), desc=model.generate_model_name(), disable=not self.progress)
        for epoch in epochs:
            self.current_epoch = epoch
            train_loss = self._train_epoch(model, train_ws, state, epoch)
            report = evaluate(model, val_ws, self.cfg.threshold, self.cfg.batch_size)
            record = EpochRecord(epoch=epoch + 1, train_loss=train_loss, val_report=report)
            self.history.append(record)
            epochs.set_postfix(loss=f"{train_loss:.4f}", val_f1=f"{report.f1:.4f}")
            logger.debug(f"epoch {epoch + 1}: loss {train_loss:.6f}, val_f1 {report.f1:.4f}")
            for callback in self.callbacks:
                callback.on_epoch_end(self, record)
            if self.should_stop:
                break
        for callback in self.callbacks:
            callback.on_train_end(self)
        return self.history


def train(model: Model, train_ws: WindowSet, val_ws: WindowSet, cfg: TrainConfig,
          callbacks: Optional[Sequence[Callback]] = None, progress: bool = False) -> Tuple[Model, TrainHistory]:
    history = Trainer(cfg, callbacks, progress).fit(model, train_ws, val_ws)
    return model, history
