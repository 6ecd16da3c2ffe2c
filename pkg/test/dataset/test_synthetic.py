import warnings

warnings.simplefilter('ignore')

import numpy as np
import pytest

from etlnet.dataset import GRAVITY, DataConfig, DataSource, SensorPosition, SynthConfig, bump_pulse, \
    fleet_car_map, generate_fleet, generate_trace, parse_car_map, records_to_array, resolve_records, write_pvs_csv
from etlnet.errors import ArgumentError, ConfigurationError
from test.utils import small_synth_config


def _acc_z(records) -> np.ndarray:
    return records_to_array(records, ("acc_z",))[:, 0]


def test_label_mass():
    cfg = small_synth_config(bump_count=4, bump_len_samples=15)
    records = generate_trace(cfg)
    assert sum(r.is_bump for r in records) == 4 * 15
    assert len(records) == cfg.duration_samples


def test_noiseless_peak():
    cfg = small_synth_config(noise_std=0., bump_amplitude=5., bump_len_samples=21)
    acc_z = _acc_z(generate_trace(cfg))
    assert acc_z.max() == pytest.approx(GRAVITY + 5., abs=1e-12)
    assert np.min(acc_z) == pytest.approx(GRAVITY)


def test_pulse_peaks():
    pulse, derivative = bump_pulse(20)
    assert pulse.max() == 1. and np.abs(derivative).max() == 1.
    assert pulse.shape == derivative.shape == (20,)


def test_speed_dips_under_bumps():
    cfg = small_synth_config(noise_std=0., base_speed=10.)
    records = generate_trace(cfg)
    speeds = np.array([r.speed for r in records])
    bumps = np.array([r.is_bump for r in records])
    assert np.all(speeds[~bumps] == 10.)
    assert speeds[bumps].min() == pytest.approx(8.)


def test_deterministic():
    cfg = small_synth_config(seed=3)
    assert generate_trace(cfg) == generate_trace(cfg)
    assert generate_trace(cfg) != generate_trace(small_synth_config(seed=4))


def test_threshold_detector_recovers_bumps():
    sigma = 0.5
    cfg = small_synth_config(noise_std=sigma, bump_amplitude=5. / 0.5 * sigma, bump_len_samples=20, seed=2)
    records = generate_trace(cfg)
    acc_z = _acc_z(records)
    detected = acc_z > GRAVITY + 3 * sigma
    bump_starts = [i for i, r in enumerate(records) if r.is_bump and (i == 0 or not records[i - 1].is_bump)]
    assert len(bump_starts) == cfg.bump_count
    for start in bump_starts:
        assert detected[start:start + cfg.bump_len_samples].any()


def _bump_starts(records):
    return [i for i, r in enumerate(records) if r.is_bump and (i == 0 or not records[i - 1].is_bump)]


def test_infeasible_placement():
    with pytest.raises(ArgumentError):
        generate_trace(small_synth_config(duration_samples=100, bump_count=5, bump_len_samples=20))
    with pytest.raises(ArgumentError):
        generate_trace(small_synth_config(duration_samples=89, bump_count=5, bump_len_samples=10))


def test_tight_placement():
    for seed in range(5):
        records = generate_trace(small_synth_config(seed=seed, duration_samples=90, bump_count=5,
                                                    bump_len_samples=10, noise_std=0.))
        assert _bump_starts(records) == [0, 20, 40, 60, 80]
        assert sum(r.is_bump for r in records) == 50


def test_placement_keeps_gaps():
    for seed in range(20):
        cfg = small_synth_config(seed=seed, duration_samples=130, bump_count=5, bump_len_samples=10)
        starts = _bump_starts(generate_trace(cfg))
        assert len(starts) == 5
        assert np.all(np.diff(starts) >= 20)
        assert starts[0] >= 0 and starts[-1] + 10 <= 130


def test_invalid_config():
    with pytest.raises(ArgumentError):
        SynthConfig(noise_std=(0.1, 0.2))
    with pytest.raises(ArgumentError):
        SynthConfig(bump_len_samples=0)
    assert SynthConfig(noise_std=(0.1,) * 7).channel_noise.shape == (7,)


def test_fleet_positions_share_placement():
    positions = (SensorPosition.DASHBOARD, SensorPosition.BELOW_SUSPENSION)
    records = generate_fleet(small_synth_config(noise_std=0.), cars=2, traces_per_car=1, positions=positions)
    assert sorted({r.trace_id for r in records}) == ["PVS1", "PVS2"]
    dashboard = [r for r in records if r.position is SensorPosition.DASHBOARD and r.trace_id == "PVS1"]
    below = [r for r in records if r.position is SensorPosition.BELOW_SUSPENSION and r.trace_id == "PVS1"]
    assert [r.is_bump for r in dashboard] == [r.is_bump for r in below]
    assert _acc_z(below).max() - GRAVITY > _acc_z(dashboard).max() - GRAVITY


def test_fleet_car_map():
    assert fleet_car_map(2, 2) == {"PVS1": "car1", "PVS2": "car1", "PVS3": "car2", "PVS4": "car2"}


def test_parse_car_map():
    assert parse_car_map("PVS1:car1, PVS2:car2") == (("PVS1", "car1"), ("PVS2", "car2"))
    with pytest.raises(ValueError):
        parse_car_map("PVS1")


def test_resolve_synthetic_records():
    cfg = DataConfig(cars=1, traces_per_car=2, positions=("dashboard", "above_suspension"))
    records, car_map = resolve_records(cfg, small_synth_config())
    assert set(records) == {SensorPosition.DASHBOARD, SensorPosition.ABOVE_SUSPENSION}
    assert car_map == {"PVS1": "car1", "PVS2": "car1"}


def test_resolve_csv_records(tmp_path):
    path = tmp_path / "PVS1.csv"
    write_pvs_csv(generate_trace(small_synth_config(), "PVS1"), path)
    cfg = DataConfig(source=DataSource.CSV, csv_paths=(str(path),), car_map=(("PVS1", "car1"),))
    records, car_map = resolve_records(cfg)
    assert len(records[SensorPosition.DASHBOARD]) == 400
    assert car_map == {"PVS1": "car1"}
    with pytest.raises(ConfigurationError):
        resolve_records(DataConfig(source="csv", csv_paths=(str(tmp_path / "missing.csv"),)))
    with pytest.raises(ConfigurationError):
        resolve_records(DataConfig(source="csv"))
    with pytest.raises(ConfigurationError):
        resolve_records(DataConfig(source="csv", csv_paths=(str(path),), positions=("below_suspension",)))
