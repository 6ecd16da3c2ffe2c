from dataclasses import dataclass, field
from enum import Enum
from logging import getLogger
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from ..common import optional, tuple_of
from ..errors import ArgumentError, ConfigurationError, EtlnetError
from .records import SampleRecord, SensorPosition, Side, load_column_map, load_pvs_csv
from .synthetic import SynthConfig, fleet_car_map, generate_fleet
from .normalizer import NormScheme

__all__ = ["DataSource", "DataConfig", "resolve_records", "parse_car_map"]

logger = getLogger(__name__)


class DataSource(Enum):
    SYNTH = "synth"
    CSV = "csv"

    @staticmethod
    def from_val(val) -> "DataSource":
        if isinstance(val, DataSource):
            return val
        for source in DataSource:
            if source.value == val:
                return source
        raise ArgumentError(f"Invalid data source: {val}. Expected {[s.value for s in DataSource]}")


def parse_car_map(text: str) -> Tuple[Tuple[str, str], ...]:
    """
    "PVS1:car1,PVS2:car1" -> (("PVS1", "car1"), ("PVS2", "car1"))
    """
    pairs = []
    for item in tuple_of(str)(text):
        trace_id, sep, car = item.partition(":")
        if not sep or not trace_id or not car:
            raise ValueError(f"expected trace_id:car, got {item!r}")
        pairs.append((trace_id, car))
    return tuple(pairs)


def _format_car_map(pairs) -> str:
    return ",".join(f"{trace_id}:{car}" for trace_id, car in pairs)


@dataclass(frozen=True)
class DataConfig:
    """
    Where the sensor records come from and how they become windows.
    stride: None means half the window.
    car_map: trace_id -> car for csv data; synthetic fleets carry their own.
    """
    source: DataSource = DataSource.SYNTH
    csv_paths: Tuple[str, ...] = field(default=(), metadata={"parse": tuple_of(str)})
    column_map: Optional[str] = field(default=None, metadata={"parse": optional(str)})
    positions: Tuple[SensorPosition, ...] = field(default=(SensorPosition.DASHBOARD,),
                                                  metadata={"parse": tuple_of(SensorPosition.from_val)})
    side: Side = Side.RIGHT
    stride: Optional[int] = field(default=None, metadata={"parse": optional(int)})
    label_threshold: float = 0.15
    scheme: NormScheme = NormScheme.MINMAX
    balance: bool = True
    cars: int = 3
    traces_per_car: int = 3
    car_map: Tuple[Tuple[str, str], ...] = field(default=(), metadata={"parse": parse_car_map,
                                                                       "format": _format_car_map})

    def __post_init__(self):
        object.__setattr__(self, "source", DataSource.from_val(self.source))
        object.__setattr__(self, "scheme", NormScheme.from_val(self.scheme))
        object.__setattr__(self, "side", Side.from_val(self.side))
        object.__setattr__(self, "positions", tuple(SensorPosition.from_val(p) for p in self.positions))
        object.__setattr__(self, "csv_paths", tuple(self.csv_paths))
        object.__setattr__(self, "car_map", tuple(tuple(pair) for pair in self.car_map))
        if len(self.positions) == 0:
            raise ArgumentError("At least one sensor position is needed")
        if self.stride is not None and self.stride < 1:
            raise ArgumentError(f"stride must be >= 1: {self.stride}")
        if not 0. <= self.label_threshold <= 1.:
            raise ArgumentError(f"label_threshold must be in [0, 1]: {self.label_threshold}")
        if self.cars < 1 or self.traces_per_car < 1:
            raise ArgumentError(f"cars and traces_per_car must be >= 1, got {self.cars}, {self.traces_per_car}")

    def stride_for(self, window: int) -> int:
        return self.stride if self.stride is not None else max(1, window // 2)


def resolve_records(cfg: DataConfig, synth: Optional[SynthConfig] = None) \
        -> Tuple[Dict[SensorPosition, List[SampleRecord]], Dict[str, str]]:
    """
    Loads or generates every requested position up front.
    :return: position -> records, trace_id -> car
    :raises ConfigurationError: when a source cannot be read or a position yields no records
    """
    result: Dict[SensorPosition, List[SampleRecord]] = {}
    if cfg.source is DataSource.SYNTH:
        synth = synth or SynthConfig()
        records = generate_fleet(synth, cfg.cars, cfg.traces_per_car, cfg.positions)
        for position in cfg.positions:
            result[position] = [r for r in records if r.position is position]
        car_map = fleet_car_map(cfg.cars, cfg.traces_per_car)
    else:
        if len(cfg.csv_paths) == 0:
            raise ConfigurationError("data.source=csv needs at least one path in data.csv_paths")
        missing = [path for path in cfg.csv_paths if not Path(path).is_file()]
        if missing:
            raise ConfigurationError(f"Data files not found: {missing}")
        try:
            column_map = load_column_map(cfg.column_map) if cfg.column_map else None
            for position in cfg.positions:
                result[position] = [record for path in cfg.csv_paths
                                    for record in load_pvs_csv(path, position, cfg.side, column_map)]
        except EtlnetError as e:
            raise ConfigurationError(f"Cannot resolve data: {e}") from e
        car_map = dict(cfg.car_map)
    empty = [position.value for position, records in result.items() if len(records) == 0]
    if empty:
        raise ConfigurationError(f"No records for positions {empty} (side {cfg.side.value})")
    return result, car_map
