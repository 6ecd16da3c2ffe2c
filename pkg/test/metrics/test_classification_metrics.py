import warnings

warnings.simplefilter('ignore')

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from etlnet.errors import ArgumentError, DimensionError
from etlnet.metrics import BinaryConfusionMetric, ConfusionMatrix, compute_metrics, f1_score, report_from_confusion
from etlnet.numcore import Rng
from etlnet.verification import confusion_oracle

labels = np.array([1, 1, 0, 0, 1, 0])
probs = np.array([0.9, 0.4, 0.6, 0.1, 0.5, 0.49])


# threshold 0.5 predictions: [1, 0, 1, 0, 1, 0]
# tp = 2, fn = 1, fp = 1, tn = 2


def test_confusion_and_metrics():
    report = compute_metrics(labels, probs)
    assert report.confusion == ConfusionMatrix(tp=2, fp=1, tn=2, fn=1)
    assert report.accuracy == 4 / 6
    assert report.precision == 2 / 3 and report.recall == 2 / 3
    assert report.f1 == pytest.approx(2 / 3)
    assert not (report.precision_undefined or report.recall_undefined or report.f1_undefined)


def test_threshold_is_inclusive():
    assert compute_metrics(labels, probs, threshold=0.5).confusion.tp == 2
    assert compute_metrics(labels, probs, threshold=0.51).confusion.tp == 1
    assert compute_metrics(labels, probs, threshold=0.).recall == 1.


def test_zero_denominators_are_flagged():
    report = compute_metrics(np.array([0, 0, 0]), np.array([0., 0., 0.]))
    assert report.accuracy == 1.
    assert report.precision == 0. and report.precision_undefined
    assert report.recall == 0. and report.recall_undefined
    assert report.f1 == 0. and report.f1_undefined


def test_accumulates_over_batches():
    metric = BinaryConfusionMetric()
    metric.update(probs[:3], labels[:3])
    metric.update(probs[3:], labels[3:])
    assert metric.compute() == compute_metrics(labels, probs)
    metric.reset()
    metric.update(np.array([0.7]), np.array([1]))
    assert metric.compute().confusion == ConfusionMatrix(tp=1)


def test_invalid_inputs():
    with pytest.raises(DimensionError):
        compute_metrics(labels, probs[:-1])
    with pytest.raises(ArgumentError):
        compute_metrics(np.array([2]), np.array([1.]))
    with pytest.raises(ArgumentError):
        BinaryConfusionMetric(1.5)
    with pytest.raises(ArgumentError):
        report_from_confusion(ConfusionMatrix())


def test_reference_f1():
    f1, undefined = f1_score(0.9946, 0.9919)
    assert not undefined
    assert abs(f1 - 0.99325) < 1e-4
    assert round(f1 * 100, 2) == 99.33


def test_oracle_on_random_sets():
    rng = Rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        y = rng.integers(0, 2, n)
        predictions = rng.integers(0, 2, n)
        report = compute_metrics(y, predictions.astype(np.float64))
        expected = confusion_oracle(y, predictions)
        assert (report.confusion.tp, report.confusion.fp, report.confusion.tn, report.confusion.fn) == \
               (expected["tp"], expected["fp"], expected["tn"], expected["fn"])
        assert (report.accuracy, report.precision, report.recall, report.f1) == \
               (expected["accuracy"], expected["precision"], expected["recall"], expected["f1"])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.floats(0., 1.)), min_size=1, max_size=50),
       st.floats(0., 1.), st.floats(0., 1.))
def test_recall_is_monotone_in_threshold(pairs, t1, t2):
    y = np.array([label for label, _ in pairs])
    p = np.array([prob for _, prob in pairs])
    low, high = min(t1, t2), max(t1, t2)
    at_low, at_high = compute_metrics(y, p, low), compute_metrics(y, p, high)
    assert at_low.confusion.tp + at_low.confusion.fp >= at_high.confusion.tp + at_high.confusion.fp
    assert at_low.recall >= at_high.recall
