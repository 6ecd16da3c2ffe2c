import os
from collections import OrderedDict
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Mapping, Optional, Union

from dotenv import dotenv_values

from .common import config_from_items, config_items, optional
from .dataset import DataConfig, SplitSpec, SynthConfig
from .errors import ArgumentError, UsageError
from .experiments import ReportFormat, SweepOptions, SweepSpec
from .models import ModelConfig
from .train import TrainConfig

__all__ = ["LogType", "RunOptions", "RunConfig", "WORKERS_ENV"]

WORKERS_ENV = "ETLNET_WORKERS"


class LogType(Enum):
    NONE = "none"
    MLFLOW = "mlflow"

    @staticmethod
    def from_val(val) -> "LogType":
        if isinstance(val, LogType):
            return val
        for log_type in LogType:
            if log_type.value == val:
                return log_type
        raise ArgumentError(f"Invalid log type: {val}. Expected {[t.value for t in LogType]}")


@dataclass(frozen=True)
class RunOptions:
    """
    seed: root of every random stream of a run
    workers: parallel sweep cells, none means $ETLNET_WORKERS or 1
    """
    seed: int = 0
    workers: Optional[int] = field(default=None, metadata={"parse": optional(int)})
    log_type: LogType = LogType.NONE
    progress: bool = True
    out_dir: str = "out"
    experiment_name: str = "etlnet"
    report_format: ReportFormat = ReportFormat.MARKDOWN

    def __post_init__(self):
        object.__setattr__(self, "log_type", LogType.from_val(self.log_type))
        object.__setattr__(self, "report_format", ReportFormat.from_val(self.report_format))
        if self.workers is not None and self.workers < 1:
            raise ArgumentError(f"workers must be >= 1: {self.workers}")


@dataclass(frozen=True)
class RunConfig:
    """
    Every option of a run, one section per config class. Keys are "section.name".
    """
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()
    data: DataConfig = DataConfig()
    synth: SynthConfig = SynthConfig()
    split: SplitSpec = SplitSpec()
    sweep: SweepOptions = SweepOptions()
    run: RunOptions = RunOptions()

    @staticmethod
    def sections() -> "OrderedDict[str, type]":
        return OrderedDict((f.name, f.type) for f in fields(RunConfig))

    def items(self) -> "OrderedDict[str, str]":
        result = OrderedDict()
        for name in self.sections():
            result.update(config_items(getattr(self, name), name))
        return result

    @staticmethod
    def from_items(items: Mapping[str, str]) -> "RunConfig":
        """
        Defaults overridden by items. Keys must be "section.name" of a known section and field.
        """
        sections = RunConfig.sections()
        for key in items:
            section, sep, _ = key.partition(".")
            if not sep or section not in sections:
                raise UsageError(f"Unknown config key: {key}. Sections: {list(sections)}")
        return RunConfig(**{name: config_from_items(cls, items, name) for name, cls in sections.items()})

    @staticmethod
    def load(path: Optional[Union[str, Path]] = None, overrides: Optional[Mapping[str, str]] = None) -> "RunConfig":
        """
        Precedence: overrides (command-line flags) > file > defaults.
        """
        items: "OrderedDict[str, str]" = OrderedDict()
        if path is not None:
            if not Path(path).is_file():
                raise UsageError(f"Config file not found: {path}")
            items.update((key, value if value is not None else "") for key, value in dotenv_values(path).items())
        items.update(overrides or {})
        return RunConfig.from_items(items)

    def resolved_workers(self) -> int:
        if self.run.workers is not None:
            return self.run.workers
        text = os.environ.get(WORKERS_ENV)
        if not text:
            return 1
        try:
            workers = int(text)
        except ValueError:
            raise ArgumentError(f"{WORKERS_ENV} must be a positive integer, got {text!r}") from None
        if workers < 1:
            raise ArgumentError(f"{WORKERS_ENV} must be a positive integer, got {text!r}")
        return workers

    def synth_config(self) -> SynthConfig:
        return replace(self.synth, seed=self.run.seed)

    def sweep_spec(self) -> SweepSpec:
        return SweepSpec(options=self.sweep, data=self.data, synth=self.synth_config(), split=self.split,
                         train=self.train, model=self.model, seed=self.run.seed, workers=self.resolved_workers())
