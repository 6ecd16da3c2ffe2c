from typing import Sequence, Union

import numpy as np

from ..errors import ArgumentError
from .tensor import Precision

__all__ = ["Rng", "rng_uniform", "derive_seed"]

_SEED_MASK = (1 << 64) - 1


def derive_seed(parent_seed: int, *path: int) -> int:
    """
    Deterministic 64-bit child seed of (parent_seed, *path).
    """
    sequence = np.random.SeedSequence(entropy=parent_seed & _SEED_MASK, spawn_key=tuple(int(p) for p in path))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


class Rng:
    """
    Single-owner random stream.
    Philox4x64-10 (numpy.random.Philox) keyed by the 64-bit seed with the counter starting at zero,
    so the stream is fixed by the seed on every platform.
    """

    def __init__(self, seed: int):
        self._seed = int(seed) & _SEED_MASK
        self._bit_generator = np.random.Philox(key=self._seed)
        self._generator = np.random.Generator(self._bit_generator)

    @property
    def seed(self) -> int:
        return self._seed

    def child(self, *path: int) -> "Rng":
        return Rng(derive_seed(self._seed, *path))

    def raw(self, n: int) -> np.ndarray:
        return self._bit_generator.random_raw(n)

    def uniform(self, shape: Union[int, Sequence[int]], lo: float = 0., hi: float = 1.,
                precision: Precision = Precision.EXTENDED) -> np.ndarray:
        return rng_uniform(self, shape, lo, hi, precision)

    def normal(self, shape: Union[int, Sequence[int]], std: float = 1.) -> np.ndarray:
        return self._generator.standard_normal(shape) * std

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)

    def choice(self, n: int, size: int) -> np.ndarray:
        return self._generator.choice(n, size=size, replace=False)

    def integers(self, low: int, high: int, size=None):
        return self._generator.integers(low, high, size=size)


def rng_uniform(rng: Rng, shape: Union[int, Sequence[int]], lo: float, hi: float,
                precision: Precision = Precision.EXTENDED) -> np.ndarray:
    if not lo < hi:
        raise ArgumentError(f"rng_uniform requires lo < hi, got lo={lo}, hi={hi}")
    values = rng._generator.random(shape)
    result = (lo + (hi - lo) * values).astype(precision.dtype, copy=False)
    # Rounding to float32 can land exactly on hi.
    upper = np.nextafter(precision.dtype.type(hi), precision.dtype.type(lo))
    return np.minimum(result, upper)
