from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional, Tuple

import numpy as np

from ..models import Model
from ..models.layers import LayerCache, Mode
from ..numcore import Rng
from ..train.loss import bce_loss

__all__ = ["GradCheckReport", "numerical_gradient", "relative_error", "check_gradients", "check_model_gradients",
           "FD_STEP", "element_errors"]

FD_STEP = 1e-5
ABS_FLOOR = 1e-6
REL_FLOOR = 1e-3

ForwardFn = Callable[[np.ndarray], Tuple[np.ndarray, LayerCache]]
BackwardFn = Callable[[np.ndarray, LayerCache], Tuple[np.ndarray, Dict[str, np.ndarray]]]


@dataclass
class GradCheckReport:
    name: str
    errors: "OrderedDict[str, float]" = field(default_factory=OrderedDict)
    worst_index: Dict[str, Tuple[int, ...]] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.

    def passed(self, tolerance: float) -> bool:
        return self.max_error < tolerance

    def add(self, key: str, analytic: np.ndarray, numeric: np.ndarray, scale: Optional[float] = None,
            shape: Optional[Tuple[int, ...]] = None, flat_indices: Optional[np.ndarray] = None):
        """
        :param flat_indices: positions of the compared entries in a tensor of the given shape, when only a
        sample of it was differenced
        """
        errors = element_errors(analytic, numeric, scale)
        if errors.size == 0:
            self.errors[key] = 0.
            return
        worst = int(np.argmax(errors))
        self.errors[key] = float(errors.reshape(-1)[worst])
        if flat_indices is None:
            index = np.unravel_index(worst, errors.shape)
        else:
            index = np.unravel_index(int(flat_indices[worst]), shape)
        self.worst_index[key] = tuple(int(i) for i in index)


def element_errors(analytic: np.ndarray, numeric: np.ndarray, scale: Optional[float] = None) -> np.ndarray:
    """
    |a - n| / max(|a| + |n|, floor) per element. The floor is ABS_FLOOR or REL_FLOOR times scale, whichever
    is larger. scale defaults to the largest magnitude in either tensor, so entries that vanish up to
    finite-difference noise are judged against the scale of the whole tensor.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    magnitude = np.abs(analytic) + np.abs(numeric)
    if scale is None:
        scale = max(float(np.abs(analytic).max(initial=0.)), float(np.abs(numeric).max(initial=0.)))
    floor = max(ABS_FLOOR, REL_FLOOR * scale)
    return np.abs(analytic - numeric) / np.maximum(magnitude, floor)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """
    Worst element of element_errors, 0 for empty tensors.
    """
    errors = element_errors(analytic, numeric)
    return float(errors.max(initial=0.))


def numerical_gradient(loss: Callable[[], float], tensor: np.ndarray, h: float = FD_STEP,
                       flat_indices: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Central differences of loss() with respect to every element of tensor, perturbed in place and restored.
    :param flat_indices: difference only these entries of the flattened tensor, returned in that order
    """
    flat = tensor.reshape(-1)
    if flat_indices is None:
        grad = np.zeros(tensor.shape, dtype=np.float64)
        positions = range(flat.size)
    else:
        grad = np.zeros(len(flat_indices), dtype=np.float64)
        positions = (int(i) for i in flat_indices)
    out = grad.reshape(-1)
    for k, i in enumerate(positions):
        original = flat[i]
        flat[i] = original + h
        plus = loss()
        flat[i] = original - h
        minus = loss()
        flat[i] = original
        out[k] = (plus - minus) / (2 * h)
    return grad


def check_gradients(name: str, forward: ForwardFn, backward: BackwardFn, x: np.ndarray,
                    params: Optional[Mapping[str, np.ndarray]] = None, rng: Optional[Rng] = None,
                    h: float = FD_STEP) -> GradCheckReport:
    """
    Compares backward against central differences of L = sum(forward(x) * r) for a fixed random r.
    forward must be deterministic in its arguments and read params live.
    :param params: name -> live parameter array, keyed like the gradients backward returns
    """
    rng = rng or Rng(0)
    params = params or {}
    y, cache = forward(x)
    projection = rng.normal(y.shape)
    dx, grads = backward(projection, cache)

    def loss() -> float:
        out, _ = forward(x)
        return float(np.sum(out * projection))

    report = GradCheckReport(name)
    report.add("x", dx, numerical_gradient(loss, x, h))
    for key, tensor in params.items():
        report.add(key, grads[key], numerical_gradient(loss, tensor, h))
    return report


def check_model_gradients(model: Model, x: np.ndarray, y: np.ndarray, dropout_seed: int = 0,
                          h: float = FD_STEP, samples: Optional[int] = None,
                          rng: Optional[Rng] = None) -> GradCheckReport:
    """
    Whole-model check of the binary cross-entropy gradient in train mode. Dropout masks are
    reproduced by reseeding before every forward pass.
    :param samples: difference only this many parameter entries, drawn uniformly over all parameters
    """
    def loss() -> float:
        p, _ = model.forward(x, Mode.TRAIN, Rng(dropout_seed))
        return bce_loss(p, y)[0]

    p, caches = model.forward(x, Mode.TRAIN, Rng(dropout_seed))
    _, dp = bce_loss(p, y)
    grads = model.backward(dp, caches)
    report = GradCheckReport(model.generate_model_name())
    params = model.parameters()
    if samples is None:
        for key, tensor in params.items():
            report.add(key, grads[key], numerical_gradient(loss, tensor, h))
        return report
    keys = list(params)
    offsets = np.cumsum([0] + [params[key].size for key in keys])
    drawn = np.sort((rng or Rng(0)).choice(int(offsets[-1]), min(samples, int(offsets[-1]))))
    owner = np.searchsorted(offsets, drawn, side="right") - 1
    for k in np.unique(owner):
        key, tensor = keys[k], params[keys[k]]
        flat_indices = drawn[owner == k] - offsets[k]
        numeric = numerical_gradient(loss, tensor, h, flat_indices)
        report.add(key, grads[key].reshape(-1)[flat_indices], numeric, float(np.abs(grads[key]).max()),
                   tensor.shape, flat_indices)
    return report
