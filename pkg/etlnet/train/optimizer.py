from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from ..errors import DimensionError
from .config import TrainConfig

__all__ = ["AdamState", "adam_step"]


@dataclass
class AdamState:
    """
    Per-parameter first moment m, second moment v and the step count t.
    """
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @staticmethod
    def create(params: Mapping[str, np.ndarray]) -> "AdamState":
        return AdamState(m={key: np.zeros_like(value) for key, value in params.items()},
                         v={key: np.zeros_like(value) for key, value in params.items()})


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamState,
              cfg: TrainConfig):
    """
    One bias-corrected Adam update, applied to params and state in place.
    """
    if set(params) != set(grads) or set(params) != set(state.m):
        raise DimensionError(f"Parameter, gradient and state keys differ: {sorted(set(params) ^ set(grads))}")
    for key, param in params.items():
        if grads[key].shape != param.shape or state.m[key].shape != param.shape:
            raise DimensionError(f"{key}: parameter {param.shape}, gradient {grads[key].shape}, "
                                 f"state {state.m[key].shape}")
    state.t += 1
    bias_correction1 = 1. - cfg.beta1 ** state.t
    bias_correction2 = 1. - cfg.beta2 ** state.t
    for key, param in params.items():
        g = grads[key]
        m, v = state.m[key], state.v[key]
        m *= cfg.beta1
        m += (1. - cfg.beta1) * g
        v *= cfg.beta2
        v += (1. - cfg.beta2) * (g * g)
        m_hat = m / bias_correction1
        v_hat = v / bias_correction2
        param -= (cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_epsilon)).astype(param.dtype)
