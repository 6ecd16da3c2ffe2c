from dataclasses import dataclass, field, replace
from logging import getLogger
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..common import tuple_of
from ..errors import ArgumentError
from ..numcore import Rng, derive_seed
from .records import FEATURE_NAMES, BumpLabel, SampleRecord, SensorPosition, Side

__all__ = ["GRAVITY", "SynthConfig", "generate_trace", "generate_fleet", "fleet_trace_ids", "fleet_car_map",
           "bump_pulse", "POSITION_GAIN"]

logger = getLogger(__name__)

GRAVITY = 9.81
SPEED_DIP = 0.2
# Suspension-mounted sensors see larger pulses than the dashboard.
POSITION_GAIN = {
    SensorPosition.BELOW_SUSPENSION: 1.5,
    SensorPosition.ABOVE_SUSPENSION: 1.2,
    SensorPosition.DASHBOARD: 1.0,
}


@dataclass(frozen=True)
class SynthConfig:
    """
    noise_std: one value for every channel, or one per channel in acc_x ... speed order
    """
    duration_samples: int = 6000
    bump_count: int = 10
    bump_len_samples: int = 50
    bump_amplitude: float = 5.
    gyro_amplitude: float = 0.5
    noise_std: Tuple[float, ...] = field(default=(0.5,), metadata={"parse": tuple_of(float)})
    base_speed: float = 10.
    seed: int = field(default=0, metadata={"skip": True})
    sample_rate_hz: float = 100.
    position: SensorPosition = SensorPosition.DASHBOARD
    side: Side = Side.RIGHT

    def __post_init__(self):
        noise = self.noise_std
        noise = (float(noise),) if np.isscalar(noise) else tuple(float(v) for v in noise)
        object.__setattr__(self, "noise_std", noise)
        object.__setattr__(self, "position", SensorPosition.from_val(self.position))
        object.__setattr__(self, "side", Side.from_val(self.side))
        if len(noise) not in (1, len(FEATURE_NAMES)) or min(noise) < 0:
            raise ArgumentError(f"noise_std must be one or {len(FEATURE_NAMES)} non-negative values: {noise}")
        if self.bump_len_samples < 1 or self.bump_count < 0 or self.duration_samples < 1:
            raise ArgumentError(f"Invalid trace shape: duration={self.duration_samples}, "
                                f"bump_count={self.bump_count}, bump_len={self.bump_len_samples}")
        if self.base_speed < 0 or self.sample_rate_hz <= 0:
            raise ArgumentError(f"base_speed must be >= 0 and sample_rate_hz > 0, got {self.base_speed}, "
                                f"{self.sample_rate_hz}")

    @property
    def channel_noise(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.noise_std, dtype=np.float64), (len(FEATURE_NAMES),))


def bump_pulse(length: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    :return: half-sine pulse with peak exactly 1, derivative-shaped companion with peak magnitude 1
    """
    phase = np.pi * (np.arange(length) + 0.5) / length
    pulse = np.sin(phase)
    derivative = np.cos(phase)
    peak = np.max(np.abs(derivative))
    return pulse / pulse.max(), derivative / peak if peak > 0 else derivative


def _place_bumps(cfg: SynthConfig, rng: Rng) -> np.ndarray:
    count, length, duration = cfg.bump_count, cfg.bump_len_samples, cfg.duration_samples
    if count == 0:
        return np.zeros(0, dtype=np.int64)
    # Every pair of bumps is separated by at least one bump length.
    slack = duration - (2 * count - 1) * length
    if slack < 0:
        raise ArgumentError(f"Cannot place {count} bumps of {length} samples with gaps in {duration} samples")
    # stars and bars: count sorted draws from slack + count positions give non-decreasing shifts in [0, slack]
    shifts = np.sort(rng.choice(slack + count, count)) - np.arange(count)
    return (shifts + 2 * length * np.arange(count)).astype(np.int64)


def generate_trace(cfg: SynthConfig, trace_id: str = "synth0") -> List[SampleRecord]:
    """
    Gaussian baseline around gravity on acc_z, a half-sine acc_z pulse, a derivative-shaped gyro_y
    perturbation and a speed dip per bump. Samples under a pulse are labeled bump.
    """
    rng = Rng(cfg.seed)
    starts = _place_bumps(cfg, rng)
    n = cfg.duration_samples
    values = rng.normal((n, len(FEATURE_NAMES))) * cfg.channel_noise
    acc_z, gyro_y, speed = (FEATURE_NAMES.index(name) for name in ("acc_z", "gyro_y", "speed"))
    values[:, acc_z] += GRAVITY
    pulse, derivative = bump_pulse(cfg.bump_len_samples)
    profile = np.zeros(n)
    is_bump = np.zeros(n, dtype=bool)
    for start in starts:
        span = slice(start, start + cfg.bump_len_samples)
        values[span, acc_z] += cfg.bump_amplitude * pulse
        values[span, gyro_y] += cfg.gyro_amplitude * derivative
        profile[span] = pulse
        is_bump[span] = True
    values[:, speed] = np.maximum(cfg.base_speed * (1. - SPEED_DIP * profile) + values[:, speed], 0.)
    timestamps = np.arange(n) / cfg.sample_rate_hz
    records = [SampleRecord(timestamp=float(timestamps[i]),
                            **{name: float(values[i, c]) for c, name in enumerate(FEATURE_NAMES)},
                            label=BumpLabel.BUMP if is_bump[i] else BumpLabel.NO_BUMP,
                            position=cfg.position, side=cfg.side, trace_id=trace_id)
               for i in range(n)]
    logger.debug(f"{trace_id}: {len(starts)} bumps in {n} samples")
    return records


def fleet_trace_ids(cars: int, traces_per_car: int) -> List[str]:
    return [f"PVS{i + 1}" for i in range(cars * traces_per_car)]


def fleet_car_map(cars: int, traces_per_car: int) -> Dict[str, str]:
    """
    :return: trace_id -> car name, traces_per_car consecutive traces per car
    """
    trace_ids = fleet_trace_ids(cars, traces_per_car)
    return {trace_id: f"car{i // traces_per_car + 1}" for i, trace_id in enumerate(trace_ids)}


def generate_fleet(cfg: SynthConfig, cars: int = 3, traces_per_car: int = 3,
                   positions: Sequence[SensorPosition] = (SensorPosition.DASHBOARD,)) -> List[SampleRecord]:
    """
    Several cars driving several traces, recorded at several sensor positions.
    Every position of a trace shares the bump placement and noise seed; the pulse amplitude scales with
    the position gain.
    """
    if cars < 1 or traces_per_car < 1:
        raise ArgumentError(f"cars and traces_per_car must be >= 1, got {cars}, {traces_per_car}")
    records: List[SampleRecord] = []
    for index, trace_id in enumerate(fleet_trace_ids(cars, traces_per_car)):
        seed = derive_seed(cfg.seed, index)
        for position in positions:
            position = SensorPosition.from_val(position)
            gain = POSITION_GAIN[position]
            trace_cfg = replace(cfg, seed=seed, position=position, bump_amplitude=cfg.bump_amplitude * gain,
                                gyro_amplitude=cfg.gyro_amplitude * gain)
            records.extend(generate_trace(trace_cfg, trace_id))
    logger.info(f"Generated {cars * traces_per_car} traces at {len(positions)} positions, {len(records)} samples")
    return records
