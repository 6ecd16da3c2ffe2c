import warnings
from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum
from logging import getLogger
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from dotenv import dotenv_values

from ..errors import ArgumentError, DataError, FormatError

__all__ = ["FEATURE_NAMES", "GYRO_FEATURES", "CSV_COLUMNS", "BumpLabel", "SensorPosition", "Side", "SampleRecord",
           "load_pvs_csv", "write_pvs_csv", "load_column_map", "group_by_trace", "records_to_array",
           "records_to_frame"]

logger = getLogger(__name__)

FEATURE_NAMES = ("acc_x", "acc_y", "acc_z", "gyro_x", "gyro_y", "gyro_z", "speed")
GYRO_FEATURES = ("gyro_x", "gyro_y", "gyro_z")
CSV_COLUMNS = ("timestamp",) + FEATURE_NAMES + ("label", "position", "side", "trace_id")
_NUMERIC_COLUMNS = ("timestamp",) + FEATURE_NAMES


class BumpLabel(Enum):
    BUMP = "bump"
    NO_BUMP = "no_bump"

    @staticmethod
    def from_val(val) -> "BumpLabel":
        if isinstance(val, BumpLabel):
            return val
        text = str(val).strip().lower()
        if text in ("bump", "1", "1.0", "true"):
            return BumpLabel.BUMP
        if text in ("no_bump", "0", "0.0", "false"):
            return BumpLabel.NO_BUMP
        raise ArgumentError(f"Invalid label: {val}. Expected {[label.value for label in BumpLabel]}")


class SensorPosition(Enum):
    BELOW_SUSPENSION = "below_suspension"
    ABOVE_SUSPENSION = "above_suspension"
    DASHBOARD = "dashboard"

    @staticmethod
    def from_val(val) -> "SensorPosition":
        if isinstance(val, SensorPosition):
            return val
        for position in SensorPosition:
            if position.value == str(val).strip().lower():
                return position
        raise ArgumentError(f"Invalid sensor position: {val}. Expected {[p.value for p in SensorPosition]}")


class Side(Enum):
    LEFT = "left"
    RIGHT = "right"

    @staticmethod
    def from_val(val) -> "Side":
        if isinstance(val, Side):
            return val
        for side in Side:
            if side.value == str(val).strip().lower():
                return side
        raise ArgumentError(f"Invalid side: {val}. Expected {[s.value for s in Side]}")


@dataclass(frozen=True)
class SampleRecord:
    timestamp: float
    acc_x: float
    acc_y: float
    acc_z: float
    gyro_x: float
    gyro_y: float
    gyro_z: float
    speed: float
    label: BumpLabel
    position: SensorPosition
    side: Side
    trace_id: str

    @property
    def is_bump(self) -> bool:
        return self.label is BumpLabel.BUMP

    def feature(self, name: str) -> float:
        return getattr(self, name)


def load_column_map(path: Union[str, Path]) -> Dict[str, str]:
    """
    Column-map file: one "canonical_name=header in the csv" per line, # comments allowed.
    """
    values = dotenv_values(path)
    unknown = [key for key in values if key not in CSV_COLUMNS]
    if unknown:
        raise FormatError(f"Unknown column names in {path}: {unknown}. Expected {list(CSV_COLUMNS)}")
    return {key: value for key, value in values.items() if value}


def _line_of(row_index: int) -> int:
    # Header is line 1.
    return row_index + 2


def _to_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return np.nan


def _parse_enum_column(frame: pd.DataFrame, column: str, parser, path) -> list:
    result = []
    for row_index, text in zip(frame.index, frame[column]):
        try:
            result.append(parser(text))
        except ArgumentError as e:
            raise FormatError(f"{path}:{_line_of(row_index)}: invalid {column} {text!r}") from e
    return result


def load_pvs_csv(path: Union[str, Path], position: Optional[Union[str, SensorPosition]] = None,
                 side: Optional[Union[str, Side]] = None,
                 column_map: Optional[Dict[str, str]] = None) -> List[SampleRecord]:
    """
    Reads a sensor csv and keeps the rows of the requested position and side.
    :param column_map: canonical column name -> header used by the file
    """
    column_map = column_map or {}
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    rename = {}
    for column in CSV_COLUMNS:
        header = column_map.get(column, column)
        if header not in frame.columns:
            if column == "trace_id":
                continue
            label = column if header == column else f"{column} (mapped to {header!r})"
            raise FormatError(f"{path}: missing column {label}")
        rename[header] = column
    frame = frame.rename(columns=rename)
    if "trace_id" not in rename.values():
        frame["trace_id"] = Path(path).stem

    numeric = {}
    for column in _NUMERIC_COLUMNS:
        values = frame[column].map(_to_float).to_numpy(dtype=np.float64)
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size > 0:
            row_index = int(bad[0])
            raise FormatError(f"{path}:{_line_of(row_index)}: non-numeric {column} "
                              f"{frame[column].iloc[row_index]!r}")
        numeric[column] = values
    negative = np.flatnonzero(numeric["speed"] < 0)
    if negative.size > 0:
        raise DataError(f"{path}:{_line_of(int(negative[0]))}: negative speed {numeric['speed'][negative[0]]}")

    labels = _parse_enum_column(frame, "label", BumpLabel.from_val, path)
    positions = _parse_enum_column(frame, "position", SensorPosition.from_val, path)
    sides = _parse_enum_column(frame, "side", Side.from_val, path)
    trace_ids = [str(t).strip() for t in frame["trace_id"]]

    wanted_position = SensorPosition.from_val(position) if position is not None else None
    wanted_side = Side.from_val(side) if side is not None else None
    records = []
    for i in range(len(frame)):
        if wanted_position is not None and positions[i] is not wanted_position:
            continue
        if wanted_side is not None and sides[i] is not wanted_side:
            continue
        records.append(SampleRecord(timestamp=float(numeric["timestamp"][i]),
                                    **{name: float(numeric[name][i]) for name in FEATURE_NAMES},
                                    label=labels[i], position=positions[i], side=sides[i],
                                    trace_id=trace_ids[i]))
    _check_monotone(records, path)
    if len(records) == 0 and len(frame) > 0:
        warnings.warn(f"{path}: no rows match position={wanted_position} side={wanted_side}")
    logger.info(f"Loaded {len(records)} of {len(frame)} rows from {path}")
    return records


def _check_monotone(records: Sequence[SampleRecord], path):
    last: Dict[tuple, float] = {}
    for record in records:
        key = (record.trace_id, record.position, record.side)
        previous = last.get(key)
        if previous is not None and record.timestamp <= previous:
            raise DataError(f"{path}: timestamps of trace {record.trace_id} are not strictly increasing "
                            f"({previous} then {record.timestamp})")
        last[key] = record.timestamp


def records_to_frame(records: Iterable[SampleRecord]) -> pd.DataFrame:
    rows = [(r.timestamp,) + tuple(r.feature(name) for name in FEATURE_NAMES) +
            (r.label.value, r.position.value, r.side.value, r.trace_id) for r in records]
    return pd.DataFrame(rows, columns=list(CSV_COLUMNS))


def write_pvs_csv(records: Iterable[SampleRecord], path: Union[str, Path]):
    """
    Writes records in the canonical column layout. Floats keep full precision, so load_pvs_csv reproduces them.
    """
    frame = records_to_frame(records)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")


def group_by_trace(records: Iterable[SampleRecord]) -> "OrderedDict[str, List[SampleRecord]]":
    """
    :return: trace_id -> records in input order, traces in sorted id order
    """
    groups: Dict[str, List[SampleRecord]] = {}
    for record in records:
        groups.setdefault(record.trace_id, []).append(record)
    return OrderedDict((trace_id, groups[trace_id]) for trace_id in sorted(groups))


def records_to_array(records: Sequence[SampleRecord], features: Sequence[str] = FEATURE_NAMES) -> np.ndarray:
    """
    :return: (len(records), len(features)) float64
    """
    for name in features:
        if name not in FEATURE_NAMES:
            raise ArgumentError(f"Unknown feature: {name}. Expected {list(FEATURE_NAMES)}")
    return np.array([[r.feature(name) for name in features] for r in records], dtype=np.float64).reshape(
        len(records), len(features))
