"""Restricted challenge sets for block-mask PUF readout.

A challenge is the row-major flattening of an l x l binary mask; bit 1
opens a block.  Four schemes are supported:

    A   every bit i.i.d. fair,
    B   checkerboard: only cells with even (row + col) may open (the
        (0, 0) anchor is eligible), all other cells are fixed 0,
    C   drawn like A, then uniformly chosen open bits are closed until
        at most floor(n/2) remain,
    D   as C with cap floor(2n/3).

Each challenge comes from its own counter-based stream keyed with
``(seed, index)``, so a set can be generated in any order, in parallel,
and still be reproducible.  Draws are independent across indices;
repeated masks are possible and allowed.
"""

from __future__ import annotations

import numpy as np

from .validation import as_bit_matrix, check_seed, square_side

SCHEMES = ("A", "B", "C", "D")


def scheme_cap(scheme: str, n: int) -> int | None:
    """Maximum open-bit count enforced by the scheme, or None."""
    if scheme == "C":
        return n // 2
    if scheme == "D":
        return (2 * n) // 3
    return None


def eligible_mask(scheme: str, grid_side: int) -> np.ndarray:
    """Boolean mask (flat, length n) of positions a scheme may open."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}, expected one of {SCHEMES}")
    if scheme == "B":
        rows, cols = np.indices((grid_side, grid_side))
        return (((rows + cols) % 2) == 0).ravel()
    return np.ones(grid_side * grid_side, dtype=bool)


def _one_challenge(rng: np.random.Generator, scheme: str, eligible: np.ndarray, cap: int | None) -> np.ndarray:
    bits = np.zeros(eligible.size, dtype=np.uint8)
    bits[eligible] = rng.integers(0, 2, size=int(eligible.sum()), dtype=np.uint8)
    if cap is not None:
        excess = int(bits.sum()) - cap
        if excess > 0:
            active = np.flatnonzero(bits)
            drop = rng.choice(active.size, size=excess, replace=False)
            bits[active[drop]] = 0
    return bits


def generate_challenges(grid_side: int, count: int, scheme: str = "A", seed: int = 0) -> np.ndarray:
    """Generate ``count`` challenges, shape (count, grid_side**2), uint8."""
    if grid_side < 3 or grid_side % 2 == 0:
        raise ValueError(f"grid_side must be an odd integer >= 3, got {grid_side}")
    if count < 1:
        raise ValueError("count must be >= 1")
    seed = check_seed(seed)
    eligible = eligible_mask(scheme, grid_side)
    n = grid_side * grid_side
    cap = scheme_cap(scheme, n)
    out = np.empty((count, n), dtype=np.uint8)
    for i in range(count):
        rng = np.random.Generator(np.random.Philox(key=np.array([seed, i], dtype=np.uint64)))
        out[i] = _one_challenge(rng, scheme, eligible, cap)
    return out


def popcount_histogram(challenges) -> dict[int, int]:
    """Histogram {open-bit count: occurrences} over a challenge set."""
    bits, _ = as_bit_matrix(challenges)
    counts = bits.sum(axis=1)
    values, freq = np.unique(counts, return_counts=True)
    return {int(v): int(f) for v, f in zip(values, freq)}


def split_blocks(challenges, factor: int) -> np.ndarray:
    """Replace every block by a ``factor x factor`` group of equal bits.

    Maps masks on the l grid to physically equivalent masks on the
    l*factor grid (each open block opens all of its sub-blocks).
    """
    if factor < 1:
        raise ValueError("factor must be >= 1")
    bits, single = as_bit_matrix(challenges)
    side = square_side(bits.shape[1])
    grid = bits.reshape(-1, side, side)
    fine = np.repeat(np.repeat(grid, factor, axis=1), factor, axis=2)
    out = fine.reshape(bits.shape[0], -1)
    return out[0] if single else out


def quadratic_expand(challenges) -> np.ndarray:
    """All pairwise products ``b_j * b_k`` for j <= k, row-major in j.

    For binary bits this is the exact feature map under which the
    intensity readout is linear; output length is n*(n+1)/2.
    """
    bits, single = as_bit_matrix(challenges)
    n = bits.shape[1]
    j, k = np.triu_indices(n)
    out = bits[:, j] * bits[:, k]
    return out[0] if single else out
