"""Similarity and dispersion metrics for speckle responses and bitstrings.

Implements fractional Hamming distance (FHD) with a sampled pairwise
dataset protocol, Shannon entropy of quantized images, Pearson
correlation, windowed SSIM, boxplot statistics with 1.5-IQR whiskers,
and the like/unlike crossover threshold used as an attack success
criterion.  Everything here is a pure function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def fhd(a, b) -> float:
    """Fractional Hamming distance: differing bits / length."""
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.shape != b.shape:
        raise ValueError(f"bitstring lengths differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("bitstrings must be nonempty")
    return float(np.count_nonzero(a != b)) / a.size


@dataclass(frozen=True)
class BoxplotStats:
    """Five-number summary plus mean and the points beyond the whiskers.

    Quartiles use linear interpolation between order statistics; each
    whisker sits on the furthest data point within 1.5 IQR of its box
    edge; outliers are exactly the points beyond the whiskers.
    """

    count: int
    mean: float
    minimum: float
    maximum: float
    q1: float
    median: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "mean": self.mean,
            "min": self.minimum,
            "max": self.maximum,
            "q1": self.q1,
            "median": self.median,
            "q3": self.q3,
            "whisker_low": self.whisker_low,
            "whisker_high": self.whisker_high,
            "outliers": list(self.outliers),
        }


def boxplot_stats(values) -> BoxplotStats:
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("values must be nonempty")
    q1, median, q3 = np.percentile(v, [25.0, 50.0, 75.0])
    iqr = q3 - q1
    low_fence = q1 - 1.5 * iqr
    high_fence = q3 + 1.5 * iqr
    whisker_low = float(v[v >= low_fence].min())
    whisker_high = float(v[v <= high_fence].max())
    outliers = np.sort(v[(v < whisker_low) | (v > whisker_high)])
    return BoxplotStats(
        count=int(v.size),
        mean=float(v.mean()),
        minimum=float(v.min()),
        maximum=float(v.max()),
        q1=float(q1),
        median=float(median),
        q3=float(q3),
        whisker_low=whisker_low,
        whisker_high=whisker_high,
        outliers=tuple(float(x) for x in outliers),
    )


@dataclass(frozen=True)
class MetricsReport:
    """Raw per-pair (or per-image) metric values plus their summary."""

    values: np.ndarray
    summary: BoxplotStats


def dataset_fhd(bit_responses, sample_size: int = 300, seed: int = 0) -> MetricsReport:
    """Pairwise-FHD decorrelation report over a sampled response subset.

    Samples ``min(sample_size, count)`` responses without replacement
    from ``seed`` and computes the FHD of every unordered pair.
    """
    bits = np.asarray(bit_responses)
    if bits.ndim != 2:
        raise ValueError(f"expected a (count, length) bit matrix, got shape {bits.shape}")
    count, length = bits.shape
    if count < 2:
        raise ValueError("need at least 2 responses")
    if sample_size < 2:
        raise ValueError("sample_size must be >= 2")
    take = min(sample_size, count)
    rng = np.random.default_rng(seed)
    idx = rng.choice(count, size=take, replace=False)
    sel = bits[idx].astype(np.float64)
    # popcount identity: |a xor b| = |a| + |b| - 2 a.b, exact in f64 dots
    gram = sel @ sel.T
    pop = np.diag(gram)
    dist = (pop[:, np.newaxis] + pop[np.newaxis, :] - 2.0 * gram) / length
    iu, ju = np.triu_indices(take, k=1)
    values = dist[iu, ju]
    return MetricsReport(values=values, summary=boxplot_stats(values))


def shannon_entropy(image, bits: int = 8) -> float:
    """Entropy (base 2) of the unit-max-normalized, ``2**bits``-bin image."""
    arr = np.asarray(image, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError("image must be nonempty")
    if not np.isfinite(arr).all():
        raise ValueError("image contains non-finite values")
    if bits < 1:
        raise ValueError("bits must be >= 1")
    peak = arr.max()
    if peak > 0:
        arr = arr / peak
    levels = 1 << bits
    idx = np.clip((arr * levels).astype(np.int64), 0, levels - 1)
    counts = np.bincount(idx, minlength=levels)
    p = counts[counts > 0] / arr.size
    return float(-(p * np.log2(p)).sum())


def pearson(x, y) -> float:
    """Sample Pearson correlation over flattened pixels."""
    xf = np.asarray(x, dtype=np.float64).ravel()
    yf = np.asarray(y, dtype=np.float64).ravel()
    if xf.size != yf.size:
        raise ValueError(f"pixel counts differ: {xf.size} vs {yf.size}")
    if xf.size < 2:
        raise ValueError("need at least 2 pixels")
    xc = xf - xf.mean()
    yc = yf - yf.mean()
    sx = np.sqrt((xc * xc).sum())
    sy = np.sqrt((yc * yc).sum())
    if sx == 0 or sy == 0:
        raise ValueError("pearson undefined for constant input")
    r = float((xc * yc).sum() / (sx * sy))
    return min(1.0, max(-1.0, r))


def _window_means(arr: np.ndarray, window: int) -> np.ndarray:
    view = np.lib.stride_tricks.sliding_window_view(arr, (window, window))
    return view.mean(axis=(2, 3))


def ssim(x, y, window: int = 8) -> float:
    """Mean local SSIM over uniform ``window x window`` patches, stride 1.

    Dynamic range is taken as 1 (callers pass unit-max-normalized
    images); constants K1 = 0.01, K2 = 0.03.  Local statistics are
    population moments over each window.
    """
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.ndim != 2 or ya.ndim != 2:
        raise ValueError("ssim expects 2D images")
    if xa.shape != ya.shape:
        raise ValueError(f"image shapes differ: {xa.shape} vs {ya.shape}")
    if window < 1 or window > min(xa.shape):
        raise ValueError(f"window {window} larger than image {xa.shape}")
    c1 = (0.01 * 1.0) ** 2
    c2 = (0.03 * 1.0) ** 2
    mx = _window_means(xa, window)
    my = _window_means(ya, window)
    vx = _window_means(xa * xa, window) - mx * mx
    vy = _window_means(ya * ya, window) - my * my
    cov = _window_means(xa * ya, window) - mx * my
    num = (2.0 * mx * my + c1) * (2.0 * cov + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float((num / den).mean())


def crossover_threshold(like_fhds, unlike_fhds) -> float:
    """Threshold t minimizing ``#(like > t) + #(unlike <= t)``.

    The error count is piecewise constant in t, changing only at sample
    values; among all minimizing t-intervals the midpoint of the widest
    one is returned (clipped to the pooled data range, so the result is
    always finite), lowest interval first on width ties.  One boundary
    needs care: when a minimizing region lies strictly below every
    sample, its clipped edge (the smallest sample itself) would belong
    to the next region — ``unlike <= t`` is inclusive — so the nearest
    representable value below that sample is returned instead.
    """
    like = np.sort(np.asarray(like_fhds, dtype=np.float64).ravel())
    unlike = np.sort(np.asarray(unlike_fhds, dtype=np.float64).ravel())
    if like.size == 0 or unlike.size == 0:
        raise ValueError("both samples must be nonempty")
    if not like.mean() < unlike.mean():
        raise ValueError("expected mean(like) < mean(unlike)")
    values = np.unique(np.concatenate([like, unlike]))
    m = values.size
    # interval 0 is (-inf, values[0]); interval k>=1 is [values[k-1], next)
    reps = np.concatenate([[values[0] - 1.0], values])
    errors = np.searchsorted(unlike, reps, side="right") + (
        like.size - np.searchsorted(like, reps, side="right")
    )
    best = errors.min()
    flat = errors == best
    # maximal runs of optimal intervals, each clipped to the data range
    best_mid, best_width = None, -1.0
    k = 0
    while k <= m:
        if not flat[k]:
            k += 1
            continue
        j = k
        while j + 1 <= m and flat[j + 1]:
            j += 1
        left = values[0] if k == 0 else values[k - 1]
        right = values[m - 1] if j == m else values[j]
        width = right - left
        if j == 0:
            # run is only the open region below every sample; its clipped
            # edge values[0] sits in the next region, so step just under it
            mid = float(np.nextafter(values[0], -np.inf))
        else:
            mid = (left + right) / 2.0
        if width > best_width:
            best_width, best_mid = width, mid
        k = j + 1
    return float(best_mid)
