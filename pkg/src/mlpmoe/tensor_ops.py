"""Dense numerical substrate: matmul, activations, quantiles, reductions.

All compute happens in float32 regardless of how a checkpoint stores its
weights. Every operation checks its result for NaN/Inf and raises
NumericError instead of letting bad values propagate.
"""

from __future__ import annotations

import numpy as np

from .errors import ArgumentError, NumericError, ShapeError

Array = np.ndarray


def as_f32(x, name: str = "tensor") -> Array:
    """Coerce to a contiguous float32 array, rejecting non-finite values."""
    arr = np.ascontiguousarray(x, dtype=np.float32)
    if not np.isfinite(arr).all():
        raise NumericError(f"{name} contains NaN or Inf")
    return arr


def _check_finite(arr: Array, op: str) -> Array:
    if not np.isfinite(arr).all():
        raise NumericError(f"{op} produced NaN or Inf")
    return arr


def matmul(a: Array, b: Array) -> Array:
    """Matrix product in float32.

    Accumulation order is whatever the BLAS backend uses, which is fixed
    for a given thread count; MLPMOE_THREADS pins that to 1 by default.
    """
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.ndim}-d and {b.ndim}-d")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} x {b.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = a @ b
    return _check_finite(out, "matmul")


def silu(x: Array) -> Array:
    """Elementwise x * sigmoid(x)."""
    x = np.asarray(x, dtype=np.float32)
    # sigmoid via tanh avoids exp overflow for large negative inputs
    sig = 0.5 * (1.0 + np.tanh(0.5 * x.astype(np.float64)))
    return _check_finite((x * sig.astype(np.float32)), "silu")


def identity(x: Array) -> Array:
    return np.asarray(x, dtype=np.float32)


# Activation registry keyed by the checkpoint metadata tag.
ACTIVATIONS = {
    "silu": silu,
    "identity": identity,
}


def get_activation(tag: str):
    try:
        return ACTIVATIONS[tag]
    except KeyError:
        raise ArgumentError(f"unknown activation tag {tag!r}") from None


def quantile_abs(w: Array, r: float) -> float:
    """r-quantile of |w| with linear interpolation between order statistics."""
    w = np.asarray(w)
    if w.size == 0:
        raise ArgumentError("quantile_abs: empty tensor")
    if not 0.0 <= r <= 1.0:
        raise ArgumentError(f"quantile_abs: r={r} outside [0, 1]")
    # float64 keeps the interpolation step independent of storage precision
    return float(np.quantile(np.abs(w).astype(np.float64), r, method="linear"))


def mask_below(w: Array, threshold: float) -> tuple[Array, int]:
    """Zero entries with |w| <= threshold (strict keep), return (masked, kept)."""
    if threshold < 0:
        raise ArgumentError(f"mask_below: negative threshold {threshold}")
    w = np.asarray(w, dtype=np.float32)
    keep = np.abs(w) > np.float32(threshold)
    out = np.where(keep, w, np.float32(0.0))
    return out, int(np.count_nonzero(keep))


def variance(x: Array) -> float:
    """Population variance of the flattened values."""
    x = np.asarray(x)
    if x.size < 2:
        raise ArgumentError(f"variance needs at least 2 values, got {x.size}")
    return float(np.var(x.astype(np.float64)))


def log_softmax(logits: Array) -> Array:
    """Row-wise log-softmax over the last axis.

    Stays in float64: likelihood sums amplify rounding error, so this is
    the one place results are not cast back down to float32.
    """
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    return _check_finite(z - lse, "log_softmax")


def softmax(logits: Array) -> Array:
    return np.exp(log_softmax(logits)).astype(np.float32)
