from collections import OrderedDict
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from io import StringIO
from pathlib import Path
from typing import Iterable, List, Mapping, Optional, Tuple, Union

import pandas as pd
from dotenv import dotenv_values

from ..common import format_value, parse_bool
from ..dataset import SensorPosition
from ..errors import ArgumentError, FormatError
from ..metrics import ConfusionMatrix, METRIC_NAMES, MetricsReport
from ..models import VariantName
from .sweep import AGGREGATED, FailedCell, ResultRow, ResultTable, SweepCell

__all__ = ["ReportFormat", "REPORT_COLUMNS", "emit_report", "parse_csv_report", "render_percent", "write_manifest",
           "read_manifest"]

_KEY_COLUMNS = ("variant", "window", "position", "car")
_CONFUSION_COLUMNS = ("tp", "fp", "tn", "fn")
_FLAG_COLUMNS = ("precision_undefined", "recall_undefined", "f1_undefined")
REPORT_COLUMNS = _KEY_COLUMNS + ("status",) + METRIC_NAMES + _CONFUSION_COLUMNS + ("threshold",) + _FLAG_COLUMNS + \
                 ("trainable_params", "total_params", "in_features", "seed", "reason")
_MARKDOWN_COLUMNS = _KEY_COLUMNS + METRIC_NAMES + ("trainable_params", "total_params", "status")
_STATUS_OK = "ok"
_STATUS_FAILED = "failed"


class ReportFormat(Enum):
    CSV = "csv"
    MARKDOWN = "markdown"

    @staticmethod
    def from_val(val) -> "ReportFormat":
        if isinstance(val, ReportFormat):
            return val
        for report_format in ReportFormat:
            if report_format.value == val:
                return report_format
        raise ArgumentError(f"Invalid report format: {val}. Expected {[f.value for f in ReportFormat]}")


def render_percent(value: float) -> str:
    """
    Fraction to a percentage with 2 decimals, halves rounded up: 0.99325 -> "99.33".
    """
    return str((Decimal(repr(float(value))) * 100).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def _key_values(cell: SweepCell) -> List[str]:
    return [cell.variant.value, str(cell.window), cell.position_label, cell.car]


def _csv_row(row: ResultRow) -> List[str]:
    report = row.report
    values = _key_values(row.cell) + [_STATUS_OK]
    values += [repr(float(getattr(report, name))) for name in METRIC_NAMES]
    values += [str(getattr(report.confusion, name)) for name in _CONFUSION_COLUMNS]
    values += [repr(float(report.threshold))] + [format_value(getattr(report, name)) for name in _FLAG_COLUMNS]
    values += [str(row.trainable_params), str(row.total_params), str(row.in_features), format_value(row.seed), ""]
    return values


def _csv_failed(failure: FailedCell) -> List[str]:
    blanks = len(REPORT_COLUMNS) - len(_KEY_COLUMNS) - 2
    return _key_values(failure.cell) + [_STATUS_FAILED] + [""] * blanks + [failure.reason]


def _markdown_row(row: ResultRow) -> List[str]:
    return _key_values(row.cell) + [render_percent(getattr(row.report, name)) for name in METRIC_NAMES] + \
           [str(row.trainable_params), str(row.total_params), _STATUS_OK]


def _markdown_failed(failure: FailedCell) -> List[str]:
    return _key_values(failure.cell) + ["-"] * (len(METRIC_NAMES) + 2) + [_STATUS_FAILED]


def emit_report(table: ResultTable, report_format: Union[str, ReportFormat] = ReportFormat.CSV) -> str:
    """
    csv: every column at full precision, readable back with parse_csv_report.
    markdown: metrics as percentages with 2 decimals, one line per cell.
    Rows keep table order, failed cells follow.
    """
    report_format = ReportFormat.from_val(report_format)
    if report_format is ReportFormat.CSV:
        rows = [_csv_row(row) for row in table.rows] + [_csv_failed(failure) for failure in table.failed]
        frame = pd.DataFrame(rows, columns=list(REPORT_COLUMNS))
        return frame.to_csv(index=False, lineterminator="\n")
    rows = [_markdown_row(row) for row in table.rows] + [_markdown_failed(failure) for failure in table.failed]
    frame = pd.DataFrame(rows, columns=list(_MARKDOWN_COLUMNS))
    return frame.to_markdown(index=False, disable_numparse=True) + "\n"


def _parse_cell(values: Mapping[str, str]) -> SweepCell:
    position = values["position"]
    return SweepCell(variant=VariantName.from_val(values["variant"]), window=int(values["window"]),
                     position=None if position == AGGREGATED else SensorPosition.from_val(position),
                     car=values["car"])


def _parse_row(values: Mapping[str, str]) -> ResultRow:
    confusion = ConfusionMatrix(**{name: int(values[name]) for name in _CONFUSION_COLUMNS})
    report = MetricsReport(confusion=confusion, threshold=float(values["threshold"]),
                           **{name: float(values[name]) for name in METRIC_NAMES},
                           **{name: parse_bool(values[name]) for name in _FLAG_COLUMNS})
    seed = values["seed"]
    return ResultRow(cell=_parse_cell(values), report=report, trainable_params=int(values["trainable_params"]),
                     total_params=int(values["total_params"]), in_features=int(values["in_features"]),
                     seed=None if seed in ("", "none") else int(seed))


def parse_csv_report(text: str) -> ResultTable:
    frame = pd.read_csv(StringIO(text), dtype=str, keep_default_na=False)
    missing = [column for column in REPORT_COLUMNS if column not in frame.columns]
    if missing:
        raise FormatError(f"Report is missing columns {missing}")
    table = ResultTable()
    for line, values in enumerate(frame.to_dict(orient="records"), start=2):
        try:
            if values["status"] == _STATUS_FAILED:
                table.failed.append(FailedCell(cell=_parse_cell(values), reason=values["reason"]))
            else:
                table.rows.append(_parse_row(values))
        except (ValueError, TypeError) as e:
            raise FormatError(f"report line {line}: {e}") from e
    return table


def write_manifest(path: Union[str, Path], config_lines: Iterable[Tuple[str, str]],
                   seeds: Optional[Mapping[str, int]] = None, command: Optional[str] = None):
    """
    Run manifest in the config file format: every resolved key=value, then the seeds in use.
    Passing it back as --config reproduces the run.
    """
    lines = []
    if command is not None:
        lines.append(f"# command: {command}")
    lines += [f"{key}={value}" for key, value in config_lines]
    for name, seed in (seeds or {}).items():
        lines.append(f"# seed.{name}={seed}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path: Union[str, Path]) -> "OrderedDict[str, str]":
    """
    :return: the key=value lines of a manifest, comments dropped
    """
    return OrderedDict((key, value if value is not None else "") for key, value in dotenv_values(path).items())
