from .tensor import Precision, EwiseOp, as_tensor, matmul, ewise, sigmoid, ensure_finite
from .rng import Rng, rng_uniform, derive_seed
