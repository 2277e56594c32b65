"""Shared input-validation helpers.

All public entry points funnel array-likes through these checks so that
shape and dtype errors surface as ValueError with a usable message
instead of failing deep inside numpy.
"""

from __future__ import annotations

import math

import numpy as np


def check_seed(seed: int, name: str = "seed") -> int:
    """Validate an unsigned 64-bit seed and return it as a Python int."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"{name} must fit in an unsigned 64-bit integer, got {seed}")
    return seed


def as_bit_matrix(challenges, n: int | None = None) -> tuple[np.ndarray, bool]:
    """Coerce challenges to a (count, n) uint8 matrix of 0/1 entries.

    Accepts a single flat challenge or a stack of challenges.  Returns the
    matrix and a flag telling whether the input was a single challenge, so
    callers can squeeze their output back to the input rank.
    """
    arr = np.asarray(challenges)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
        single = True
    elif arr.ndim == 2:
        single = False
    else:
        raise ValueError(f"challenges must be 1D or 2D, got shape {arr.shape}")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError("challenge bits must be 0 or 1")
    if n is not None and arr.shape[1] != n:
        raise ValueError(f"challenge length {arr.shape[1]} does not match expected {n}")
    return arr.astype(np.uint8), single


def square_side(n: int, name: str = "challenge length") -> int:
    """Return l such that l*l == n, or raise."""
    side = math.isqrt(int(n))
    if side * side != n:
        raise ValueError(f"{name} {n} is not a perfect square")
    return side


def as_image_stack(images, side: int | None = None) -> tuple[np.ndarray, bool]:
    """Coerce to a (count, h, w) float64 stack; also handles a single image."""
    arr = np.asarray(images, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[np.newaxis]
        single = True
    elif arr.ndim == 3:
        single = False
    else:
        raise ValueError(f"images must be 2D or 3D, got shape {arr.shape}")
    if side is not None and arr.shape[1:] != (side, side):
        raise ValueError(f"images must be {side}x{side}, got {arr.shape[1:]}")
    return arr, single


def check_finite(arr: np.ndarray, name: str) -> None:
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
