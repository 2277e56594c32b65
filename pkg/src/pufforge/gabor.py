"""Gabor binarization of speckle intensity images.

A response image is converted into a bitstring by convolving it with a
zero-mean 2D Gabor kernel and thresholding at zero: filtered values
``>= 0`` map to 1, all others to 0, flattened row-major.  The kernel taps
are the real part of a Daugman-style complex Gabor, a cosine carrier
under an anisotropic Gaussian envelope:

    g(x, y) = exp(-(x'^2 / (2 sx^2) + y'^2 / (2 sy^2)))
              * cos(2 pi x' / wavelength + phase)

with (x', y') the (col, row) offsets from the kernel centre rotated by
the orientation angle.  The taps are mean-subtracted so the threshold is
meaningful on flat image regions, which also makes the resulting bits
invariant under positive rescaling of the input image.

Two presets are committed:

    G1  35 x 35, wavelength 8,  orientation 0,    sigma (6, 6)
    G2  9 x 51,  wavelength 12, orientation pi/2, sigma (2, 12)

G1 is near-isotropic at medium scale, G2 strongly anisotropic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve
from sklearn.base import BaseEstimator, TransformerMixin

from .validation import as_image_stack, check_finite

PRESETS = {
    "G1": dict(height=35, width=35, wavelength=8.0, orientation=0.0, phase=0.0, sigma_x=6.0, sigma_y=6.0),
    "G2": dict(height=9, width=51, wavelength=12.0, orientation=math.pi / 2, phase=0.0, sigma_x=2.0, sigma_y=12.0),
}


@dataclass(frozen=True)
class GaborKernel:
    height: int
    width: int
    wavelength: float
    orientation: float
    phase: float
    sigma_x: float
    sigma_y: float
    taps: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        if self.taps.shape != (self.height, self.width):
            raise ValueError(f"taps shape {self.taps.shape} does not match {self.height}x{self.width}")


def make_kernel(
    preset: str | None = None,
    *,
    height: int | None = None,
    width: int | None = None,
    wavelength: float | None = None,
    orientation: float = 0.0,
    phase: float = 0.0,
    sigma_x: float | None = None,
    sigma_y: float | None = None,
) -> GaborKernel:
    """Build a preset kernel by name, or an explicit one from parameters."""
    if preset is not None:
        if preset not in PRESETS:
            raise ValueError(f"unknown preset {preset!r}, expected one of {sorted(PRESETS)}")
        return make_kernel(**PRESETS[preset])
    missing = [k for k, v in dict(height=height, width=width, wavelength=wavelength,
                                  sigma_x=sigma_x, sigma_y=sigma_y).items() if v is None]
    if missing:
        raise ValueError(f"explicit kernel needs parameters: {', '.join(missing)}")
    if height % 2 == 0 or width % 2 == 0:
        raise ValueError(f"kernel dimensions must be odd, got {height}x{width}")
    if wavelength <= 0 or sigma_x <= 0 or sigma_y <= 0:
        raise ValueError("wavelength and sigmas must be positive")
    y = np.arange(height, dtype=np.float64) - (height - 1) / 2.0
    x = np.arange(width, dtype=np.float64) - (width - 1) / 2.0
    xx = x[np.newaxis, :]
    yy = y[:, np.newaxis]
    c, s = math.cos(orientation), math.sin(orientation)
    xr = xx * c + yy * s
    yr = -xx * s + yy * c
    taps = np.exp(-(xr**2 / (2.0 * sigma_x**2) + yr**2 / (2.0 * sigma_y**2)))
    taps = taps * np.cos(2.0 * math.pi * xr / wavelength + phase)
    taps = taps - taps.mean()
    return GaborKernel(height, width, wavelength, orientation, phase, sigma_x, sigma_y, taps)


def gabor_filter(images, kernel: GaborKernel) -> np.ndarray:
    """Zero-padded same-size convolution with the kernel taps.

    Inputs are normalized to unit max-magnitude first; the binarization
    downstream only looks at signs, and the normalization keeps it
    invariant under positive rescaling of the image.
    """
    stack, single = as_image_stack(images)
    h, w = stack.shape[1:]
    if kernel.height > h or kernel.width > w:
        raise ValueError(
            f"kernel {kernel.height}x{kernel.width} larger than image {h}x{w}"
        )
    check_finite(stack, "images")
    peak = np.abs(stack).max(axis=(1, 2), keepdims=True)
    scaled = np.divide(stack, peak, out=stack.copy(), where=peak > 0)
    out = fftconvolve(scaled, kernel.taps[np.newaxis], mode="same", axes=(1, 2))
    return out[0] if single else out


def gabor_binarize(images, kernel: GaborKernel) -> np.ndarray:
    """Bitstring(s) of an image (stack): filtered >= 0 -> 1, row-major flatten."""
    filtered = gabor_filter(images, kernel)
    bits = (filtered >= 0).astype(np.uint8)
    if bits.ndim == 2:
        return bits.reshape(-1)
    return bits.reshape(bits.shape[0], -1)


class GaborBinarizer(BaseEstimator, TransformerMixin):
    """Transformer wrapping :func:`gabor_binarize` for one kernel preset."""

    def __init__(self, preset: str = "G1"):
        self.preset = preset

    def fit(self, X=None, y=None):
        self.kernel_ = make_kernel(self.preset)
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "kernel_"):
            self.fit()
        bits = gabor_binarize(X, self.kernel_)
        return bits if bits.ndim == 2 else bits[np.newaxis]
