import hashlib
import math
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from logging import getLogger
from typing import Dict, List, Optional, Sequence, Tuple

import tqdm
from joblib import Parallel, delayed

from ..common import tuple_of
from ..dataset import DataConfig, SampleRecord, SensorPosition, SplitSpec, SynthConfig, resolve_records, \
    windows_by_trace
from ..errors import ArgumentError, ConfigurationError, ContractViolationError, DataError, EtlnetError
from ..metrics import ConfusionMatrix, MetricsReport, METRIC_NAMES
from ..models import ModelConfig, VariantName
from ..models.model_service import ablation_variants, comparison_variants
from ..numcore import derive_seed
from ..train import TrainConfig, fit_traces, restrict_split

__all__ = ["SweepOptions", "SweepSpec", "SweepCell", "ResultRow", "FailedCell", "ResultTable", "AggregateKey",
           "run_sweep", "run_ablation", "run_comparison", "aggregate_by", "cell_seed", "POOLED", "AGGREGATED"]

logger = getLogger(__name__)

# car column of cells trained on every car at once
POOLED = "all"
# value of a collapsed key column
AGGREGATED = "mean"

DEFAULT_WINDOW_SIZES = (100, 200, 300, 400, 500)


class AggregateKey(Enum):
    CAR = "car"
    POSITION = "position"

    @staticmethod
    def from_val(val) -> "AggregateKey":
        if isinstance(val, AggregateKey):
            return val
        for key in AggregateKey:
            if key.value == val:
                return key
        raise ArgumentError(f"Invalid aggregation key: {val}. Expected {[k.value for k in AggregateKey]}")


@dataclass(frozen=True)
class SweepOptions:
    """
    per_car: one cell per car on that car's traces instead of one cell on every trace.
    """
    variants: Tuple[VariantName, ...] = field(default=(VariantName.ETLNET,),
                                              metadata={"parse": tuple_of(VariantName.from_val)})
    window_sizes: Tuple[int, ...] = DEFAULT_WINDOW_SIZES
    per_car: bool = False

    def __post_init__(self):
        object.__setattr__(self, "variants", tuple(VariantName.from_val(v) for v in self.variants))
        object.__setattr__(self, "window_sizes", tuple(int(w) for w in self.window_sizes))
        if len(self.variants) == 0 or len(self.window_sizes) == 0:
            raise ArgumentError(f"A sweep needs at least one variant and one window size, got {self.variants}, "
                                f"{self.window_sizes}")
        if min(self.window_sizes) < 1:
            raise ArgumentError(f"Window sizes must be positive: {self.window_sizes}")


@dataclass(frozen=True)
class SweepSpec:
    options: SweepOptions = SweepOptions()
    data: DataConfig = DataConfig()
    synth: SynthConfig = SynthConfig()
    split: SplitSpec = SplitSpec()
    train: TrainConfig = TrainConfig()
    model: ModelConfig = ModelConfig()
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.workers < 1:
            raise ArgumentError(f"workers must be >= 1: {self.workers}")

    def model_config(self, variant: VariantName, window: int) -> ModelConfig:
        """
        The base model config with the cell's variant and window, features reset to the variant's default.
        """
        return replace(self.model, variant=variant, window=window, features=None)


@dataclass(frozen=True)
class SweepCell:
    """
    position None: averaged over positions.
    """
    variant: VariantName
    window: int
    position: Optional[SensorPosition]
    car: str = POOLED

    @property
    def position_label(self) -> str:
        return self.position.value if self.position is not None else AGGREGATED

    @property
    def key(self) -> str:
        return f"{self.variant.value}/{self.window}/{self.position_label}/{self.car}"

    def sort_key(self) -> tuple:
        return self.variant.value, self.window, self.position_label, self.car


@dataclass(frozen=True)
class ResultRow:
    """
    seed is None for rows produced by aggregation.
    """
    cell: SweepCell
    report: MetricsReport
    trainable_params: int
    total_params: int
    in_features: int
    seed: Optional[int] = None


@dataclass(frozen=True)
class FailedCell:
    cell: SweepCell
    reason: str


@dataclass
class ResultTable:
    rows: List[ResultRow] = field(default_factory=list)
    failed: List[FailedCell] = field(default_factory=list)
    metadata: "OrderedDict[str, str]" = field(default_factory=OrderedDict, compare=False)

    def __len__(self):
        return len(self.rows)

    def cells(self) -> List[SweepCell]:
        return [row.cell for row in self.rows] + [failure.cell for failure in self.failed]

    def row(self, variant, window: int, position=SensorPosition.DASHBOARD, car: str = POOLED) -> ResultRow:
        position = SensorPosition.from_val(position) if position is not None else None
        cell = SweepCell(VariantName.from_val(variant), window, position, car)
        for row in self.rows:
            if row.cell == cell:
                return row
        raise KeyError(cell.key)


def cell_seed(seed: int, cell: SweepCell) -> int:
    """
    Seed of a cell, derived from the run seed and the cell's key, so adding or removing cells
    never changes the seed of another cell.
    """
    digest = hashlib.sha256(cell.key.encode("utf-8")).digest()
    return derive_seed(seed, int.from_bytes(digest[:8], "little"))


def _plan_cells(spec: SweepSpec, car_map: Dict[str, str]) -> List[SweepCell]:
    cars = sorted(set(car_map.values())) if spec.options.per_car else [POOLED]
    return [SweepCell(variant, window, position, car)
            for variant in spec.options.variants
            for window in spec.options.window_sizes
            for position in spec.data.positions
            for car in cars]


def _run_cell(spec: SweepSpec, cell: SweepCell, records: Sequence[SampleRecord], car_map: Dict[str, str]):
    seed = cell_seed(spec.seed, cell)
    try:
        model_cfg = spec.model_config(cell.variant, cell.window)
        by_trace = windows_by_trace(records, cell.window, spec.data.stride_for(cell.window),
                                    spec.data.label_threshold, model_cfg.features, dtype=model_cfg.precision.dtype)
        if cell.car != POOLED:
            by_trace = OrderedDict((t, ws) for t, ws in by_trace.items() if car_map.get(t) == cell.car)
        split_spec = restrict_split(spec.split, list(by_trace))
        model, history, _ = fit_traces(by_trace, model_cfg, spec.data, split_spec, spec.train, seed)
        trainable, total = model.count_params()
        logger.info(f"{cell.key}: val_f1 {history[-1].val_report.f1:.4f} after {len(history)} epochs")
        return ResultRow(cell=cell, report=history[-1].val_report, trainable_params=trainable, total_params=total,
                         in_features=model_cfg.in_features, seed=seed)
    except ContractViolationError:
        raise
    except EtlnetError as e:
        return FailedCell(cell=cell, reason=f"{type(e).__name__}: {e}")


def run_sweep(spec: SweepSpec, progress: bool = False) -> ResultTable:
    """
    Trains and evaluates every (variant, window, position, car) cell.
    Data is resolved before any training; a cell that fails is recorded with its reason and the others still run.
    """
    records_by_position, car_map = resolve_records(spec.data, spec.synth)
    if spec.options.per_car:
        traces = sorted({r.trace_id for records in records_by_position.values() for r in records})
        unmapped = [trace_id for trace_id in traces if trace_id not in car_map]
        if unmapped:
            raise ConfigurationError(f"Traces without a car in data.car_map: {unmapped}")
    cells = _plan_cells(spec, car_map)
    started = datetime.now(timezone.utc).isoformat()
    logger.info(f"Running {len(cells)} cells with {spec.workers} workers")
    results = Parallel(n_jobs=spec.workers)(
        delayed(_run_cell)(spec, cell, records_by_position[cell.position], car_map)
        for cell in tqdm.tqdm(cells, desc="sweep", disable=not progress))
    table = ResultTable()
    for result in results:
        if isinstance(result, FailedCell):
            warnings.warn(f"Cell {result.cell.key} failed: {result.reason}")
            table.failed.append(result)
        else:
            table.rows.append(result)
    table.metadata.update([("seed", str(spec.seed)), ("cells", str(len(cells))), ("failed", str(len(table.failed))),
                           ("started", started), ("finished", datetime.now(timezone.utc).isoformat())])
    return table


def run_ablation(spec: SweepSpec, windows: Optional[Sequence[int]] = None,
                 base_cfg: Optional[ModelConfig] = None, progress: bool = False) -> ResultTable:
    """
    The base model and its five ablated variants across the given windows.
    """
    options = replace(spec.options, variants=tuple(ablation_variants()),
                      window_sizes=tuple(windows) if windows is not None else spec.options.window_sizes)
    spec = replace(spec, options=options, model=base_cfg if base_cfg is not None else spec.model)
    return run_sweep(spec, progress)


def run_comparison(spec: SweepSpec, windows: Optional[Sequence[int]] = None, progress: bool = False) -> ResultTable:
    """
    The base model against the stacked BiLSTM and stacked TCN baselines.
    """
    options = replace(spec.options, variants=tuple(comparison_variants()),
                      window_sizes=tuple(windows) if windows is not None else spec.options.window_sizes)
    return run_sweep(replace(spec, options=options), progress)


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def _aggregate_rows(cell: SweepCell, rows: Sequence[ResultRow]) -> ResultRow:
    values = {name: _mean([getattr(row.report, name) for row in rows]) for name in METRIC_NAMES}
    confusion = ConfusionMatrix(**{name: sum(getattr(row.report.confusion, name) for row in rows)
                                   for name in ("tp", "fp", "tn", "fn")})
    first = rows[0]
    report = MetricsReport(confusion=confusion, threshold=first.report.threshold,
                           precision_undefined=any(row.report.precision_undefined for row in rows),
                           recall_undefined=any(row.report.recall_undefined for row in rows),
                           f1_undefined=any(row.report.f1_undefined for row in rows), **values)
    return ResultRow(cell=cell, report=report, trainable_params=first.trainable_params,
                     total_params=first.total_params, in_features=first.in_features, seed=None)


def aggregate_by(table: ResultTable, key) -> ResultTable:
    """
    Averages every metric over the collapsed key; the collapsed column reads "mean".
    Sums are exactly rounded, so the result does not depend on row order. Confusion counts are summed.
    """
    key = AggregateKey.from_val(key)
    if len(table.rows) == 0:
        raise DataError("Cannot aggregate a table without rows")
    groups: Dict[SweepCell, List[ResultRow]] = {}
    for row in table.rows:
        if key is AggregateKey.CAR:
            cell = replace(row.cell, car=AGGREGATED)
        else:
            cell = replace(row.cell, position=None)
        groups.setdefault(cell, []).append(row)
    result = ResultTable(metadata=OrderedDict(table.metadata))
    result.metadata["aggregated_by"] = key.value
    for cell in sorted(groups, key=SweepCell.sort_key):
        rows = sorted(groups[cell], key=lambda row: row.cell.sort_key())
        result.rows.append(_aggregate_rows(cell, rows))
    return result
