"""Dense float64 vector arithmetic shared by every optimizer kernel.

All operations are pure functions over 1-D numpy arrays. The core sticks to
float64: the parameter-free kernels are scale sensitive (initial step scales
around 1e-6), and double precision keeps hand-computed oracles exact to about
1e-12. Norms use straightforward accumulation, good to about 1e-10 relative
at the dimensions this library targets (d <= 1e5).
"""

from __future__ import annotations

import numpy as np

Vector = np.ndarray


def as_vector(values) -> Vector:
    """Copy ``values`` into a finite 1-D float64 array."""
    v = np.array(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    _check_finite(v)
    return v


def _check_finite(v: Vector) -> None:
    if not np.all(np.isfinite(v)):
        bad = int(np.flatnonzero(~np.isfinite(v))[0])
        raise ValueError(f"non-finite entry at index {bad}")


def _check_same_length(a: Vector, b: Vector) -> None:
    if a.shape != b.shape:
        raise ValueError(f"vector length mismatch: {a.shape[0]} vs {b.shape[0]}")


def elementwise_square(v: Vector) -> Vector:
    """out[i] = v[i]**2"""
    return v * v


def elementwise_sqrt(v: Vector) -> Vector:
    """out[i] = sqrt(v[i]); raises on negative entries."""
    neg = v < 0.0
    if neg.any():
        bad = int(np.flatnonzero(neg)[0])
        raise ValueError(f"negative entry at index {bad}: {v[bad]}")
    return np.sqrt(v)


def preconditioned_div(num: Vector, s: Vector, delta: float) -> Vector:
    """out[i] = num[i] / (delta + s[i]); raises if any denominator is zero."""
    _check_same_length(num, s)
    denom = delta + s
    zero = denom == 0.0
    if zero.any():
        bad = int(np.flatnonzero(zero)[0])
        raise ZeroDivisionError(f"zero denominator delta + s at index {bad}")
    return num / denom


def l2_norm(v: Vector) -> float:
    return float(np.linalg.norm(v))


def linf_norm(v: Vector) -> float:
    return float(np.max(np.abs(v)))


def l1_norm(v: Vector) -> float:
    return float(np.sum(np.abs(v)))


def running_max(a: Vector, b: Vector) -> Vector:
    """Entrywise maximum."""
    _check_same_length(a, b)
    return np.maximum(a, b)
