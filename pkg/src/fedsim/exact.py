"""Lossless rational arithmetic for the masking and noise pipeline.

Pairwise security offsets and recorded DP noise must cancel out of
aggregates without leaving floating-point residue: the simulator promises
that summing masked models recovers the sum of the raw models bit for bit,
and that subtracting a recorded noise matrix recovers the clean weights
bit for bit.  Plain float64 addition cannot keep those promises (adding a
large offset rounds away the low bits of the weights), so every value that
enters the masking/noise pipeline is lifted to an exact rational, all
additions and averages happen over rationals, and the result is rounded
back to float64 exactly once on the way out.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

import numpy as np


def to_exact(values: np.ndarray) -> np.ndarray:
    """Lift a float64 array to an object array of exact rationals.

    Object arrays pass through unchanged, so the function is idempotent.
    """
    arr = np.asarray(values)
    if arr.dtype == object:
        return arr
    flat = [Fraction(float(v)) for v in arr.ravel()]
    return np.array(flat, dtype=object).reshape(arr.shape)


def to_float(values: np.ndarray) -> np.ndarray:
    """Round an exact array back to float64 (correctly rounded per element)."""
    arr = np.asarray(values)
    if arr.dtype != object:
        return arr.astype(np.float64)
    flat = [float(v) for v in arr.ravel()]
    return np.array(flat, dtype=np.float64).reshape(arr.shape)


def exact_mean(
    mats: Sequence[np.ndarray], weights: Sequence[int] | None = None
) -> np.ndarray:
    """Elementwise (optionally weighted) mean over exact rationals.

    Order-independent by construction, which is what lets concurrent and
    serverless aggregation produce identical results.  ``weights`` must be
    positive integers, one per matrix.
    """
    if len(mats) == 0:
        raise ValueError("cannot average an empty list of matrices")
    if weights is not None:
        if len(weights) != len(mats):
            raise ValueError(
                f"got {len(weights)} weights for {len(mats)} matrices"
            )
        if any(w <= 0 for w in weights):
            raise ValueError("averaging weights must be positive")
    lifted = [to_exact(m) for m in mats]
    shape = lifted[0].shape
    for m in lifted[1:]:
        if m.shape != shape:
            raise ValueError(f"matrix shape mismatch: {m.shape} != {shape}")
    if weights is None:
        total = lifted[0]
        for m in lifted[1:]:
            total = total + m
        return total / len(lifted)
    total = lifted[0] * int(weights[0])
    for m, w in zip(lifted[1:], weights[1:]):
        total = total + m * int(w)
    return total / int(sum(weights))
