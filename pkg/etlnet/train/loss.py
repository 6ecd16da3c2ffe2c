from typing import Tuple

import numpy as np

from ..errors import DimensionError

__all__ = ["bce_loss", "PROB_CLAMP"]

PROB_CLAMP = 1e-7


def bce_loss(p: np.ndarray, y: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Mean binary cross-entropy with p clamped to [1e-7, 1 - 1e-7].
    :param p: (Batch size, 1) or (Batch size,)
    :param y: (Batch size,) of {0, 1}
    :return: loss, dL/dp shaped like p
    """
    if np.size(p) != np.size(y) or (p.ndim == 2 and p.shape[1] != 1):
        raise DimensionError(f"Predictions {p.shape} and labels {np.shape(y)} differ in length")
    batch = np.size(y)
    p_flat = np.clip(p.reshape(-1).astype(np.float64), PROB_CLAMP, 1. - PROB_CLAMP)
    y_flat = np.asarray(y, dtype=np.float64).reshape(-1)
    loss = -np.mean(y_flat * np.log(p_flat) + (1. - y_flat) * np.log(1. - p_flat))
    grad = (-y_flat / p_flat + (1. - y_flat) / (1. - p_flat)) / batch
    return float(loss), grad.reshape(p.shape).astype(p.dtype)
