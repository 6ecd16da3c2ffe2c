import argparse
import logging
import sys
from collections import OrderedDict
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from dotenv import load_dotenv
from tabulate import tabulate

from .callbacks import CSVHistoryCallback, Callback, MLFlowHistoryLogger
from .config import LogType, RunConfig
from .dataset import SensorPosition, WindowSet, generate_fleet, load_windowset, resolve_records, save_windowset, \
    windows_by_trace, write_pvs_csv
from .errors import ContractViolationError, DimensionError, EtlnetError, UsageError
from .experiments import AggregateKey, ReportFormat, ResultTable, aggregate_by, emit_report, run_ablation, \
    run_comparison, run_sweep, write_manifest
from .metrics import MetricsReport
from .models import Model, ModelConfig, build_model, load_checkpoint, save_checkpoint, variant_catalog
from .numcore import Rng
from .models.model_service import resolve_variant
from .train import evaluate, fit_traces, restrict_split, split_traces
from .verification import run_verification

__all__ = ["dispatch", "main", "build_parser", "COMMANDS"]

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_config_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=str, default=None, help="key=value config file")
    parser.add_argument("--seed", dest="run.seed", default=argparse.SUPPRESS, help="Alias of --run.seed")
    parser.add_argument("--workers", dest="run.workers", default=argparse.SUPPRESS, help="Alias of --run.workers")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")
    group = parser.add_argument_group("config keys", "Any config key, overriding the config file")
    for key, default in RunConfig().items().items():
        group.add_argument(f"--{key}", dest=key, default=argparse.SUPPRESS, metavar="VALUE",
                           help=f"(default: {default})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="etlnet", description="Speed bump detection from inertial sensor windows.")
    subparsers = parser.add_subparsers(dest="command", parser_class=_Parser)
    subparsers.required = True

    synth = subparsers.add_parser("synth", help="Write a synthetic sensor csv")
    synth.add_argument("--out", type=str, required=True, help="Output csv path")

    prepare = subparsers.add_parser("prepare", help="Sensor data to a window cache")
    prepare.add_argument("--out", type=str, required=True, help="Output window cache path")
    prepare.add_argument("--position", type=str, default=None, help="Sensor position, the first data.positions "
                                                                    "entry by default")

    train = subparsers.add_parser("train", help="Train a model and save a checkpoint")
    train.add_argument("--windows", type=str, default=None, help="Window cache written by prepare")
    train.add_argument("--checkpoint", type=str, default=None, help="Checkpoint path, <out_dir>/<model>.etln "
                                                                    "by default")
    train.add_argument("--position", type=str, default=None)

    evaluate_parser = subparsers.add_parser("evaluate", help="Evaluate a checkpoint on its validation split")
    evaluate_parser.add_argument("--checkpoint", type=str, required=True)
    evaluate_parser.add_argument("--windows", type=str, default=None, help="Window cache written by prepare")
    evaluate_parser.add_argument("--position", type=str, default=None)

    for name, help_text in (("sweep", "Variants x window sizes x positions"),
                            ("compare", "The base model against the stacked BiLSTM and TCN baselines"),
                            ("ablate", "The base model and its ablated variants x window sizes")):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--out", type=str, default=None, help="csv report path, <out_dir>/<command>.csv by default")
        sub.add_argument("--aggregate", type=str, default=None,
                         help=f"Also report means over one key: {[k.value for k in AggregateKey]}")

    params = subparsers.add_parser("params", help="Parameter counts per variant")
    params.add_argument("--variant", dest="params_variant", type=str, default=None,
                        help="One variant, every variant when omitted")

    subparsers.add_parser("verify", help="Gradient, causality, metrics and parameter self-tests")

    for sub in subparsers.choices.values():
        _add_config_flags(sub)
    return parser


def _overrides(args: argparse.Namespace) -> "OrderedDict[str, str]":
    keys = RunConfig().items().keys()
    return OrderedDict((key, str(value)) for key, value in vars(args).items() if key in keys)


def _setup_logging(verbose: bool):
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)


def _position(args: argparse.Namespace, config: RunConfig) -> SensorPosition:
    return SensorPosition.from_val(args.position) if args.position else config.data.positions[0]


def _print_report(name: str, report: MetricsReport):
    rows = [(metric, value) for metric, value in report.metrics().items()]
    rows += [(key, getattr(report.confusion, key)) for key in ("tp", "fp", "tn", "fn")]
    print(f"{name}\n" + tabulate(rows, headers=["metric", "value"], floatfmt=".4f"))


def _load_windows(args: argparse.Namespace, config: RunConfig, model_cfg: ModelConfig):
    """
    Windows per trace, from a cache or from the configured data source.
    """
    if args.windows:
        ws = load_windowset(args.windows)
        if ws.window != model_cfg.window:
            raise DimensionError(f"Window mismatch: model.window={model_cfg.window} but {args.windows} holds "
                                 f"windows of {ws.window}")
        return ws.select_features(model_cfg.features).by_trace()
    position = _position(args, config)
    records_by_position, _ = resolve_records(config.data, config.synth_config())
    if position not in records_by_position:
        raise UsageError(f"Position {position.value} is not among data.positions")
    return windows_by_trace(records_by_position[position], model_cfg.window,
                            config.data.stride_for(model_cfg.window), config.data.label_threshold,
                            model_cfg.features, dtype=model_cfg.precision.dtype)


def _cmd_synth(args, config: RunConfig) -> dict:
    records = generate_fleet(config.synth_config(), config.data.cars, config.data.traces_per_car,
                             config.data.positions)
    write_pvs_csv(records, args.out)
    print(f"Wrote {len(records)} samples to {args.out}")
    return {"synth": config.run.seed}


def _cmd_prepare(args, config: RunConfig) -> dict:
    records_by_position, _ = resolve_records(config.data, config.synth_config())
    position = _position(args, config)
    if position not in records_by_position:
        raise UsageError(f"Position {position.value} is not among data.positions")
    window = config.model.window
    by_trace = windows_by_trace(records_by_position[position], window, config.data.stride_for(window),
                                config.data.label_threshold)
    ws = WindowSet.concat(list(by_trace.values()))
    save_windowset(ws, args.out)
    negatives, positives = ws.class_counts()
    print(f"Wrote {len(ws)} windows ({positives} bump, {negatives} no bump) to {args.out}")
    return {"synth": config.run.seed}


def _train_callbacks(config: RunConfig, model_name: str) -> List[Callback]:
    callbacks: List[Callback] = [CSVHistoryCallback(str(Path(config.run.out_dir) / f"history_{model_name}.csv"))]
    if config.run.log_type is LogType.MLFLOW:
        callbacks.append(MLFlowHistoryLogger(config.run.experiment_name, params=dict(config.items()),
                                             run_name=model_name))
    return callbacks


def _cmd_train(args, config: RunConfig) -> dict:
    model_cfg = config.model
    by_trace = _load_windows(args, config, model_cfg)
    split_spec = restrict_split(config.split, list(by_trace))
    model_name = Model(model_cfg, []).generate_model_name()
    model, history, _ = fit_traces(by_trace, model_cfg, config.data, split_spec, config.train, config.run.seed,
                                   _train_callbacks(config, model_name), config.run.progress)
    checkpoint = args.checkpoint or str(Path(config.run.out_dir) / f"{model_name}.etln")
    save_checkpoint(model, checkpoint)
    _print_report(f"{model_name} after {len(history)} epochs, checkpoint {checkpoint}", history[-1].val_report)
    return {"run": config.run.seed}


def _cmd_evaluate(args, config: RunConfig) -> dict:
    model = load_checkpoint(args.checkpoint)
    by_trace = _load_windows(args, config, model.config)
    _, val_ws, _ = split_traces(by_trace, config.data, restrict_split(config.split, list(by_trace)),
                                config.run.seed)
    report = evaluate(model, val_ws, config.train.threshold, config.train.batch_size)
    _print_report(f"{model.generate_model_name()} on {len(val_ws)} validation windows", report)
    return {"run": config.run.seed}


def _emit_tables(args, config: RunConfig, table: ResultTable):
    out = args.out or str(Path(config.run.out_dir) / f"{args.command}.csv")
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    Path(out).write_text(emit_report(table, ReportFormat.CSV), encoding="utf-8")
    print(emit_report(table, config.run.report_format))
    if args.aggregate:
        aggregated = aggregate_by(table, args.aggregate)
        aggregated_out = str(Path(out).with_name(f"{Path(out).stem}_by_{args.aggregate}.csv"))
        Path(aggregated_out).write_text(emit_report(aggregated, ReportFormat.CSV), encoding="utf-8")
        print(emit_report(aggregated, config.run.report_format))
    logger.info(f"Report written to {out}")


def _cmd_sweep(args, config: RunConfig) -> dict:
    table = run_sweep(config.sweep_spec(), config.run.progress)
    _emit_tables(args, config, table)
    return {"run": config.run.seed}


def _cmd_ablate(args, config: RunConfig) -> dict:
    table = run_ablation(config.sweep_spec(), progress=config.run.progress)
    _emit_tables(args, config, table)
    return {"run": config.run.seed}


def _cmd_compare(args, config: RunConfig) -> dict:
    table = run_comparison(config.sweep_spec(), progress=config.run.progress)
    _emit_tables(args, config, table)
    return {"run": config.run.seed}


def _cmd_params(args, config: RunConfig) -> dict:
    entries = [(variant, description, replace(config.model, variant=variant, features=None))
               for variant, description, _ in variant_catalog(config.model.window)]
    if args.params_variant:
        variant = resolve_variant(args.params_variant)
        entries = [entry for entry in entries if entry[0] is variant]
    rows = []
    for variant, description, model_cfg in entries:
        trainable, total = build_model(model_cfg, Rng(config.run.seed)).count_params()
        rows.append((variant.value, model_cfg.window, model_cfg.in_features, trainable, total, description))
    print(tabulate(rows, headers=["variant", "window", "in_features", "trainable", "total", "description"]))
    return {}


def _cmd_verify(args, config: RunConfig) -> dict:
    results = run_verification(config.run.seed, config.run.progress)
    print(tabulate([(r.name, "ok" if r.passed else "FAILED", r.detail) for r in results],
                   headers=["check", "status", "detail"]))
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise ContractViolationError(f"{len(failed)} self-checks failed: {failed}")
    return {"verify": config.run.seed}


COMMANDS: Dict[str, Callable[[argparse.Namespace, RunConfig], dict]] = {
    "synth": _cmd_synth,
    "prepare": _cmd_prepare,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
    "ablate": _cmd_ablate,
    "compare": _cmd_compare,
    "params": _cmd_params,
    "verify": _cmd_verify,
}


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """
    Runs one subcommand.
    :return: exit code, 0 on success, 1 usage, 2 data or format, 3 internal contract violation
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _setup_logging(args.verbose)
        config = RunConfig.load(args.config, _overrides(args))
        seeds = COMMANDS[args.command](args, config)
        if args.command != "params":
            write_manifest(Path(config.run.out_dir) / f"manifest_{args.command}.txt", config.items().items(),
                           seeds, command="etlnet " + " ".join(argv))
        return 0
    except UsageError as e:
        print(f"{e}\n", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return e.exit_code
    except EtlnetError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except SystemExit as e:
        # --help
        return e.code if isinstance(e.code, int) else 0


def main():
    load_dotenv()
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
