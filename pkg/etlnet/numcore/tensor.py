from enum import Enum
from typing import Callable, Union

import numpy as np
from scipy.special import expit

from ..errors import ArgumentError, ContractViolationError, DimensionError

__all__ = ["Precision", "EwiseOp", "as_tensor", "matmul", "ewise", "sigmoid", "ensure_finite"]


class Precision(Enum):
    STANDARD = "standard"
    EXTENDED = "extended"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.float32) if self is Precision.STANDARD else np.dtype(np.float64)

    @staticmethod
    def from_val(val: Union[str, "Precision"]) -> "Precision":
        if isinstance(val, Precision):
            return val
        for precision in Precision:
            if precision.value == val:
                return precision
        raise ArgumentError(f"Invalid precision: {val}. Expected {[p.value for p in Precision]}")


class EwiseOp(Enum):
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    MAP = "map"

    @staticmethod
    def from_val(val: Union[str, "EwiseOp"]) -> "EwiseOp":
        if isinstance(val, EwiseOp):
            return val
        for op in EwiseOp:
            if op.value == val:
                return op
        raise ArgumentError(f"Invalid element-wise op: {val}")


def as_tensor(values, precision: Precision = Precision.STANDARD) -> np.ndarray:
    return np.ascontiguousarray(values, dtype=precision.dtype)


def ensure_finite(tensor: np.ndarray, op_name: str) -> np.ndarray:
    if not np.all(np.isfinite(tensor)):
        raise ContractViolationError(f"{op_name} produced non-finite values")
    return tensor


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    :param a: (m, k)
    :param b: (k, n)
    :return: (m, n)
    """
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return ensure_finite(a @ b, "matmul")


def ewise(op: Union[str, EwiseOp], a: np.ndarray, b: Union[np.ndarray, float, Callable]) -> np.ndarray:
    op = EwiseOp.from_val(op)
    if op is EwiseOp.MAP:
        if not callable(b):
            raise ArgumentError("map requires a callable")
        result = np.asarray(b(a), dtype=a.dtype)
        if result.shape != a.shape:
            raise DimensionError(f"map changed shape: {a.shape} -> {result.shape}")
        return ensure_finite(result, "ewise")
    if isinstance(b, np.ndarray) and b.ndim > 0 and b.shape != a.shape:
        raise DimensionError(f"ewise shape mismatch: {a.shape} vs {b.shape}")
    if op is EwiseOp.ADD:
        result = a + b
    elif op is EwiseOp.SUB:
        result = a - b
    else:
        result = a * b
    return ensure_finite(np.asarray(result, dtype=a.dtype), "ewise")


def sigmoid(z: np.ndarray) -> np.ndarray:
    return expit(z)
