"""Array primitives and the central-difference gradient oracle.

Tensors are plain C-contiguous numpy arrays. Training runs in float32,
gradient checks in float64. Any NaN/Inf is raised immediately rather than
propagated.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import DimensionError, NumericError

TRAIN_DTYPE = np.float32
CHECK_DTYPE = np.float64

_BINARY = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
}


def check_finite(x: np.ndarray, where: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite value produced by {where}")
    return x


def as_tensor(values, dtype=CHECK_DTYPE) -> np.ndarray:
    """Copy ``values`` into a contiguous array, rejecting empty extents."""
    arr = np.ascontiguousarray(np.asarray(values, dtype=dtype))
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if any(s < 1 for s in arr.shape):
        raise DimensionError(f"zero-length extent in shape {arr.shape}")
    return check_finite(arr, "as_tensor")


def flat_index(index: tuple[int, ...], shape: tuple[int, ...]) -> int:
    """Row-major flat offset of a multi-index."""
    if len(index) != len(shape):
        raise DimensionError("index rank does not match shape rank")
    offset, stride = 0, 1
    for i, s in zip(reversed(index), reversed(shape)):
        if not 0 <= i < s:
            raise IndexError(f"index {index} out of bounds for {shape}")
        offset += i * stride
        stride *= s
    return offset


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError("matmul expects rank-2 operands")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner extents differ: {a.shape} x {b.shape}")
    return check_finite(a @ b, "matmul")


def elementwise(op: str | Callable, a: np.ndarray, b=None) -> np.ndarray:
    """Pointwise ``add``/``sub``/``mul`` of equal shapes, ``scale`` by a
    scalar, or ``op`` as a callable applied to ``a``."""
    if callable(op):
        out = op(a)
    elif op == "scale":
        out = a * b
    elif op in _BINARY:
        b = np.asarray(b)
        if b.ndim > 0 and b.shape != a.shape:
            raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
        out = _BINARY[op](a, b)
    else:
        raise ValueError(f"unknown elementwise op {op!r}")
    out = np.asarray(out)
    if out.shape != a.shape:
        raise DimensionError("elementwise op changed the shape")
    return check_finite(out, f"elementwise {op}")


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray,
                     eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x`` (float64)."""
    x = np.array(x, dtype=CHECK_DTYPE, copy=True)
    grad = np.empty_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(x))
        flat[i] = orig - eps
        fm = float(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"f is not finite near coordinate {i}")
        g[i] = (fp - fm) / (2.0 * eps)
    return grad


def rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Max elementwise relative error, with ``floor`` guarding near-zero entries."""
    analytic = np.asarray(analytic, dtype=CHECK_DTYPE)
    numeric = np.asarray(numeric, dtype=CHECK_DTYPE)
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))
