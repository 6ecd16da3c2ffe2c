from dataclasses import dataclass, field
from typing import Optional

from ..common import optional
from ..errors import ArgumentError

__all__ = ["TrainConfig"]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    batch_size: int = 64
    epochs: int = 20
    seed: int = field(default=0, metadata={"skip": True})
    shuffle: bool = True
    early_stop_patience: Optional[int] = field(default=None, metadata={"parse": optional(int)})
    threshold: float = 0.5

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ArgumentError(f"learning_rate must be >= 0: {self.learning_rate}")
        if not (0. < self.beta1 < 1. and 0. < self.beta2 < 1.):
            raise ArgumentError(f"beta1 and beta2 must be in (0, 1): {self.beta1}, {self.beta2}")
        if self.adam_epsilon <= 0:
            raise ArgumentError(f"adam_epsilon must be positive: {self.adam_epsilon}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ArgumentError(f"batch_size and epochs must be >= 1: {self.batch_size}, {self.epochs}")
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise ArgumentError(f"early_stop_patience must be >= 1 or none: {self.early_stop_patience}")
        if not 0. <= self.threshold <= 1.:
            raise ArgumentError(f"threshold must be in [0, 1]: {self.threshold}")
