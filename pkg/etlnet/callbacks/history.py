from logging import getLogger
from pathlib import Path
from typing import Dict, Optional

from .common import Callback

__all__ = ["CSVHistoryCallback", "EarlyStopping", "MLFlowHistoryLogger"]

logger = getLogger(__name__)


class CSVHistoryCallback(Callback):
    def __init__(self, out_filepath: str, period: int = 1):
        self._out_filepath = out_filepath
        self._period = period
        Path(self._out_filepath).parent.mkdir(parents=True, exist_ok=True)

    def on_epoch_end(self, trainer, record):
        if (trainer.current_epoch + 1) % self._period != 0:
            return
        trainer.history.write_csv(self._out_filepath)

    def on_train_end(self, trainer):
        trainer.history.write_csv(self._out_filepath)


class EarlyStopping(Callback):
    """
    Stops when validation F1 has not improved for patience epochs.
    """

    def __init__(self, patience: int, min_delta: float = 0.):
        assert patience >= 1
        self._patience = patience
        self._min_delta = min_delta
        self._best: Optional[float] = None
        self._wait = 0

    def on_epoch_end(self, trainer, record):
        value = record.val_report.f1
        if self._best is None or value > self._best + self._min_delta:
            self._best = value
            self._wait = 0
            return
        self._wait += 1
        if self._wait >= self._patience:
            logger.info(f"Early stopping at epoch {trainer.current_epoch + 1}: best val_f1 {self._best:.4f}")
            trainer.should_stop = True


class MLFlowHistoryLogger(Callback):
    def __init__(self, experiment_name: str, params: Optional[Dict[str, str]] = None, run_name: str = None):
        import mlflow
        self._mlflow = mlflow
        mlflow.set_experiment(experiment_name)
        self._run = mlflow.start_run(run_name=run_name)
        if params:
            mlflow.log_params(params)

    def on_epoch_end(self, trainer, record):
        self._mlflow.log_metrics(record.metrics(), step=record.epoch)

    def on_train_end(self, trainer):
        self._mlflow.end_run()
