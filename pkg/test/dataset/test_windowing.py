import warnings

warnings.simplefilter('ignore')

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from etlnet.dataset import FEATURE_NAMES, WindowSet, balance_classes, load_windowset, make_windows, save_windowset, \
    windows_by_trace
from etlnet.errors import ArgumentError, DataError, DimensionError, FormatError
from etlnet.numcore import Rng
from test.utils import make_records, make_windowset


def _brute_force_count(length: int, window: int, stride: int) -> int:
    count = 0
    start = 0
    while start + window <= length:
        count += 1
        start += stride
    return count


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 60), st.integers(1, 20), st.integers(1, 20))
def test_window_count_formula(length, window, stride):
    records = make_records("PVS1", [0] * length)
    ws = make_windows(records, window, stride, 0.15)
    expected = (length - window) // stride + 1 if length >= window else 0
    assert len(ws) == expected == _brute_force_count(length, window, stride)


def test_windows_never_span_traces():
    records = make_records("PVS1", [0] * 7) + make_records("PVS2", [0] * 5)
    ws = make_windows(records, 4, 2, 0.15)
    assert ws.provenance == [("PVS1", 0), ("PVS1", 2), ("PVS2", 0)]
    assert np.array_equal(ws.x[2, :, 0], np.arange(4.))


def test_window_contents_and_default_stride():
    ws = make_windows(make_records("PVS1", [0] * 10), 4)
    assert ws.stride == 2
    assert ws.x.shape == (4, 4, len(FEATURE_NAMES))
    assert np.array_equal(ws.x[1, :, 3], np.arange(2., 6.))


def test_labels_follow_threshold():
    bumps = [0] * 10 + [1] * 3 + [0] * 7
    records = make_records("PVS1", bumps)
    assert make_windows(records, 20, 20, 0.15).y.tolist() == [1]
    assert make_windows(records, 20, 20, 0.16).y.tolist() == [0]
    assert make_windows(records, 10, 10, 0.).y.tolist() == [0, 1]


def test_feature_selection():
    records = make_records("PVS1", [0] * 8)
    ws = make_windows(records, 4, 4, features=("acc_x", "speed"))
    assert ws.feature_names == ("acc_x", "speed") and ws.channels == 2
    selected = make_windows(records, 4, 4).select_features(("speed",))
    assert np.array_equal(selected.x[..., 0], ws.x[..., 1])
    with pytest.raises(ArgumentError):
        ws.select_features(("gyro_x",))


def test_invalid_window_args():
    records = make_records("PVS1", [0] * 8)
    with pytest.raises(ArgumentError):
        make_windows(records, 0, 1)
    with pytest.raises(ArgumentError):
        make_windows(records, 4, 0)
    with pytest.raises(ArgumentError):
        make_windows(records, 4, 2, 1.5)


def test_empty_and_by_trace():
    assert len(make_windows([], 4, 2)) == 0
    records = make_records("PVS2", [0] * 6) + make_records("PVS1", [0] * 6)
    by_trace = windows_by_trace(records, 4, 2)
    assert list(by_trace) == ["PVS1", "PVS2"]
    joined = WindowSet.concat(list(by_trace.values()))
    assert list(joined.by_trace()) == ["PVS1", "PVS2"]
    assert len(joined.by_trace()["PVS2"]) == 2


def test_sample_rows_deduplicate_overlap():
    records = make_records("PVS2", [0] * 7) + make_records("PVS1", [0] * 9)
    ws = make_windows(records, 4, 1)
    rows = ws.sample_rows()
    assert rows.shape == (16, len(FEATURE_NAMES))
    # PVS1 first, then PVS2, each in sample order
    assert np.array_equal(rows[:, 0], np.concatenate([np.arange(9.), np.arange(7.)]))
    # stride 3 leaves samples 7 and 8 uncovered
    assert len(make_windows(make_records("PVS1", [0] * 9), 4, 3).sample_rows()) == 7
    assert make_windowset([]).sample_rows().shape == (0, len(FEATURE_NAMES))


def test_concat_mismatch():
    with pytest.raises(DimensionError):
        WindowSet.concat([make_windowset([0, 1], window=4), make_windowset([0, 1], window=5)])
    with pytest.raises(ArgumentError):
        WindowSet.concat([])


def test_balance_parity_and_determinism():
    ws = make_windowset([0] * 9 + [1] * 3)
    balanced = balance_classes(ws, Rng(0))
    assert balanced.class_counts() == (3, 3)
    assert balanced.is_balanced()
    again = balance_classes(ws, Rng(0))
    assert balanced.provenance == again.provenance
    assert set(balanced.provenance) <= set(ws.provenance)
    with pytest.raises(DataError):
        balance_classes(make_windowset([1, 1, 1]), Rng(0))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=2, max_size=40), st.integers(0, 2 ** 32))
def test_balance_property(labels, seed):
    if len(set(labels)) < 2:
        return
    balanced = balance_classes(make_windowset(labels), Rng(seed))
    negatives, positives = balanced.class_counts()
    assert negatives == positives == min(labels.count(0), labels.count(1))


def test_windowset_cache_round_trip(tmp_path):
    records = make_records("PVS1", [0, 0, 1, 1, 0, 0, 0, 1], values=np.random.default_rng(1).normal(size=(8, 7)))
    ws = make_windows(records, 4, 2, 0.25)
    path = tmp_path / "windows.etlw"
    save_windowset(ws, path)
    restored = load_windowset(path)
    assert np.array_equal(restored.x, ws.x.astype(np.float32))
    assert np.array_equal(restored.y, ws.y)
    assert (restored.window, restored.stride, restored.threshold) == (4, 2, 0.25)
    assert restored.provenance == ws.provenance and restored.feature_names == ws.feature_names


def test_windowset_cache_errors(tmp_path):
    path = tmp_path / "bad.etlw"
    path.write_bytes(b"XXXX" + b"\0" * 40)
    with pytest.raises(FormatError):
        load_windowset(path)
    good = tmp_path / "good.etlw"
    save_windowset(make_windowset([0, 1]), good)
    path.write_bytes(good.read_bytes()[:-10])
    with pytest.raises(FormatError):
        load_windowset(path)
