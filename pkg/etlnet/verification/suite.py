"""
Self-test suite behind `etlnet verify`: gradient checks for every layer and a miniature model,
convolution causality, the metrics oracle and parameter accounting.
"""
from dataclasses import dataclass
from logging import getLogger
from typing import Callable, List, Sequence

import numpy as np
import tqdm

from ..dataset.records import FEATURE_NAMES
from ..metrics import compute_metrics, f1_score
from ..models import ModelConfig, VariantName, build_model
from ..models.layers import Activation, BatchNormState, ConvParams, DenseParams, LstmParams, Mode, TCNLayer, \
    batchnorm_fwd, bilstm_fwd, causal_conv1d_fwd, dense_fwd, dropout_fwd, global_avg_pool_fwd, layer_bwd, lstm_fwd, \
    lstm_bwd, relu_fwd, sigmoid_fwd
from ..numcore import Precision, Rng
from .gradcheck import GradCheckReport, check_gradients, check_model_gradients

__all__ = ["CheckResult", "run_verification", "LAYER_TOLERANCE", "MODEL_TOLERANCE", "VERIFY_WINDOWS",
           "miniature_config", "confusion_oracle", "enumerated_param_count"]

logger = getLogger(__name__)

LAYER_TOLERANCE = 1e-4
MODEL_TOLERANCE = 1e-3
VERIFY_WINDOWS = (100, 200, 300, 400, 500)
_EXTENDED = Precision.EXTENDED


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def _from_report(report: GradCheckReport, tolerance: float) -> CheckResult:
    worst = max(report.errors, key=report.errors.get) if report.errors else "-"
    if worst in report.worst_index:
        worst = f"{worst}{list(report.worst_index[worst])}"
    return CheckResult(f"gradient/{report.name}", report.passed(tolerance),
                       f"max rel err {report.max_error:.2e} ({worst}), tolerance {tolerance:.0e}")


def _conv_checks(rng: Rng) -> List[GradCheckReport]:
    reports = []
    for batch, time, channels, out, kernel, dilation in ((1, 8, 2, 3, 3, 2), (2, 6, 3, 2, 2, 1), (3, 9, 1, 4, 3, 4)):
        p = ConvParams(weight=rng.normal((out, channels, kernel)), bias=rng.normal(out), dilation=dilation)
        x = rng.normal((batch, time, channels))
        reports.append(check_gradients(f"conv_{batch}x{time}x{channels}_k{kernel}_d{dilation}",
                                       lambda v: causal_conv1d_fwd(v, p), layer_bwd, x, p.tensors(), rng))
    return reports


def _batchnorm_checks(rng: Rng) -> List[GradCheckReport]:
    reports = []
    for shape in ((4, 5, 3), (6, 2), (2, 7, 4)):
        s = BatchNormState.create(shape[-1], precision=_EXTENDED)
        s.gamma[...] = rng.normal(shape[-1]) + 1.
        s.beta[...] = rng.normal(shape[-1])
        x = rng.normal(shape)
        reports.append(check_gradients(f"batchnorm_{'x'.join(map(str, shape))}",
                                       lambda v: batchnorm_fwd(v, s, Mode.TRAIN), layer_bwd, x, s.tensors(), rng))
    return reports


def _dropout_checks(rng: Rng) -> List[GradCheckReport]:
    reports = []
    for shape, rate in (((3, 4, 2), 0.3), ((5, 6), 0.5), ((2, 3, 5), 0.)):
        x = rng.normal(shape)
        reports.append(check_gradients(f"dropout_{'x'.join(map(str, shape))}_r{rate}",
                                       lambda v: dropout_fwd(v, rate, Rng(7), Mode.TRAIN), layer_bwd, x, None, rng))
    return reports


def _lstm_checks(rng: Rng) -> List[GradCheckReport]:
    reports = []
    for batch, time, channels, hidden, reverse in ((2, 4, 3, 2, False), (1, 5, 2, 3, True), (3, 3, 2, 2, False)):
        p = LstmParams.create(channels, hidden, rng, precision=_EXTENDED)
        x = rng.normal((batch, time, channels))

        def last(v, p=p, reverse=reverse):
            _, h_last, cache = lstm_fwd(v, p, reverse)
            return h_last, cache

        def sequence(v, p=p, reverse=reverse):
            h_seq, _, cache = lstm_fwd(v, p, reverse)
            return h_seq, cache

        name = f"lstm_{batch}x{time}x{channels}_h{hidden}{'_reverse' if reverse else ''}"
        reports.append(check_gradients(f"{name}_last", last, lambda dy, c: lstm_bwd(None, dy, c), x,
                                       p.tensors(), rng))
        reports.append(check_gradients(f"{name}_seq", sequence, lambda dy, c: lstm_bwd(dy, None, c), x,
                                       p.tensors(), rng))
    return reports


def _bilstm_checks(rng: Rng) -> List[GradCheckReport]:
    reports = []
    for batch, time, channels, hidden, sequences in ((2, 4, 3, 2, False), (1, 5, 2, 3, True), (3, 3, 4, 2, False)):
        p_fwd = LstmParams.create(channels, hidden, rng, precision=_EXTENDED)
        p_bwd = LstmParams.create(channels, hidden, rng, precision=_EXTENDED)
        params = {f"fwd.{k}": v for k, v in p_fwd.tensors().items()}
        params.update({f"bwd.{k}": v for k, v in p_bwd.tensors().items()})
        x = rng.normal((batch, time, channels))
        reports.append(check_gradients(
            f"bilstm_{batch}x{time}x{channels}_h{hidden}{'_seq' if sequences else ''}",
            lambda v, a=p_fwd, b=p_bwd, s=sequences: bilstm_fwd(v, a, b, Mode.TRAIN, s), layer_bwd, x, params, rng))
    return reports


def _dense_checks(rng: Rng) -> List[GradCheckReport]:
    reports = []
    for (batch, fan_in, fan_out), act in (((4, 3, 2), Activation.NONE), ((3, 5, 4), Activation.RELU),
                                          ((2, 4, 1), Activation.SIGMOID)):
        p = DenseParams(weight=rng.normal((fan_out, fan_in)), bias=rng.normal(fan_out))
        x = rng.normal((batch, fan_in))
        reports.append(check_gradients(f"dense_{batch}x{fan_in}to{fan_out}_{act.value}",
                                       lambda v, p=p, act=act: dense_fwd(v, p, act), layer_bwd, x, p.tensors(), rng))
    return reports


def _activation_checks(rng: Rng) -> List[GradCheckReport]:
    reports = []
    for shape in ((3, 4), (2, 5, 3), (6,)):
        label = "x".join(map(str, shape))
        # keep relu inputs away from the kink
        x = rng.normal(shape)
        x[np.abs(x) < 1e-2] = 0.5
        reports.append(check_gradients(f"relu_{label}", relu_fwd, layer_bwd, x, None, rng))
        reports.append(check_gradients(f"sigmoid_{label}", sigmoid_fwd, layer_bwd, rng.normal(shape), None, rng))
    for shape in ((2, 5, 3), (1, 4, 2), (3, 2, 4)):
        reports.append(check_gradients(f"global_avg_pool_{'x'.join(map(str, shape))}", global_avg_pool_fwd,
                                       layer_bwd, rng.normal(shape), None, rng))
    return reports


def _tcn_checks(rng: Rng) -> List[GradCheckReport]:
    reports = []
    for batch, time, channels, filters, dilations in ((2, 6, 3, 3, (1,)), (1, 8, 2, 4, (1, 2)), (2, 5, 4, 2, (2,))):
        layer = TCNLayer("tcn", channels, filters, 3, dilations, rng, _EXTENDED)
        x = rng.normal((batch, time, channels))
        name = f"tcn_{batch}x{time}x{channels}_f{filters}_d{'-'.join(map(str, dilations))}"
        reports.append(check_gradients(name,
                                       lambda v, layer=layer: layer.forward(v, Mode.TRAIN), layer.backward, x,
                                       layer.params, rng))
    return reports


def miniature_config(variant=VariantName.ETLNET, window: int = 8) -> ModelConfig:
    return ModelConfig(variant=variant, window=window, tcn_filters=4, kernel=3, lstm_hidden=3, dense_hidden=4,
                       precision=_EXTENDED)


def _model_checks(rng: Rng) -> List[GradCheckReport]:
    reports = []
    for batch, window in ((3, 8), (4, 6), (2, 10)):
        model = build_model(miniature_config(window=window), rng.child(batch))
        x = rng.normal((batch, window, len(FEATURE_NAMES)))
        y = np.arange(batch) % 2
        reports.append(check_model_gradients(model, x, y, dropout_seed=batch))
    return reports


def causality_checks(rng: Rng, kernels: Sequence[int] = (1, 2, 3), dilations: Sequence[int] = (1, 2, 4),
                     time: int = 16) -> List[CheckResult]:
    """
    Changing the input at t' must leave every output before t' bit-identical.
    """
    results = []
    for kernel in kernels:
        for dilation in dilations:
            p = ConvParams(weight=rng.normal((3, 2, kernel)), bias=rng.normal(3), dilation=dilation)
            x = rng.normal((1, time, 2))
            y, _ = causal_conv1d_fwd(x, p, Mode.EVAL)
            violations = []
            for t_mut in range(time):
                mutated = x.copy()
                mutated[:, t_mut, :] += 10.
                y_mut, _ = causal_conv1d_fwd(mutated, p, Mode.EVAL)
                if not np.array_equal(y[:, :t_mut], y_mut[:, :t_mut]):
                    violations.append(t_mut)
            results.append(CheckResult(f"causality/k{kernel}_d{dilation}", not violations,
                                       f"outputs changed before mutated steps {violations}" if violations else ""))
    return results


def confusion_oracle(labels: np.ndarray, predictions: np.ndarray) -> dict:
    """
    Brute-force enumeration of the confusion matrix and the metrics it implies.
    """
    tp = fp = tn = fn = 0
    for label, prediction in zip(labels.tolist(), predictions.tolist()):
        if prediction == 1 and label == 1:
            tp += 1
        elif prediction == 1:
            fp += 1
        elif label == 1:
            fn += 1
        else:
            tn += 1
    precision = tp / (tp + fp) if tp + fp > 0 else 0.
    recall = tp / (tp + fn) if tp + fn > 0 else 0.
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.
    return dict(tp=tp, fp=fp, tn=tn, fn=fn, accuracy=(tp + tn) / len(labels), precision=precision, recall=recall,
                f1=f1)


def metrics_checks(rng: Rng, trials: int = 1000) -> List[CheckResult]:
    mismatches = 0
    for _ in range(trials):
        n = int(rng.integers(1, 50))
        labels = rng.integers(0, 2, n)
        predictions = rng.integers(0, 2, n)
        report = compute_metrics(labels, predictions.astype(np.float64))
        expected = confusion_oracle(labels, predictions)
        actual = dict(tp=report.confusion.tp, fp=report.confusion.fp, tn=report.confusion.tn, fn=report.confusion.fn,
                      accuracy=report.accuracy, precision=report.precision, recall=report.recall, f1=report.f1)
        mismatches += actual != expected
    results = [CheckResult("metrics/oracle", mismatches == 0, f"{mismatches} of {trials} sets differ")]
    f1, _ = f1_score(0.9946, 0.9919)
    results.append(CheckResult("metrics/reference_f1", abs(f1 - 0.99325) < 1e-4 and abs(f1 * 100 - 99.33) < 0.01,
                               f"F1(0.9946, 0.9919) = {f1:.6f}"))
    return results


def enumerated_param_count(model) -> tuple:
    """
    (trainable, total) by counting the elements of every array the model holds.
    """
    trainable = sum(tensor.size for tensor in model.parameters().values())
    return trainable, trainable + sum(tensor.size for tensor in model.buffers().values())


def param_checks(rng: Rng, windows: Sequence[int] = VERIFY_WINDOWS) -> List[CheckResult]:
    results = []
    for variant in VariantName:
        mismatched = []
        for window in windows:
            model = build_model(ModelConfig(variant=variant, window=window), rng.child(window))
            if model.count_params() != enumerated_param_count(model):
                mismatched.append(window)
        results.append(CheckResult(f"params/{variant.value}", not mismatched,
                                   f"closed form differs from enumeration at windows {mismatched}"
                                   if mismatched else ""))
    return results


def run_verification(seed: int = 0, progress: bool = False) -> List[CheckResult]:
    rng = Rng(seed)
    gradient_groups: List[Callable[[Rng], List[GradCheckReport]]] = [
        _conv_checks, _batchnorm_checks, _dropout_checks, _lstm_checks, _bilstm_checks, _dense_checks,
        _activation_checks, _tcn_checks]
    results: List[CheckResult] = []
    for index, group in enumerate(tqdm.tqdm(gradient_groups, desc="gradients", disable=not progress)):
        results.extend(_from_report(report, LAYER_TOLERANCE) for report in group(rng.child(index)))
    results.extend(_from_report(report, MODEL_TOLERANCE) for report in _model_checks(rng.child(100)))
    results.extend(causality_checks(rng.child(101)))
    results.extend(metrics_checks(rng.child(102)))
    results.extend(param_checks(rng.child(103)))
    failed = [result.name for result in results if not result.passed]
    logger.info(f"{len(results) - len(failed)} of {len(results)} checks passed")
    return results
