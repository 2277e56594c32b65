"""Linear-scattering simulation of an integrated optical PUF.

The token is modelled as a complex transmission matrix.  Each of the
``n = grid_side**2`` challenge blocks owns a fixed complex field pattern
``T_j`` over the ``image_side x image_side`` camera plane.  A binary
challenge ``b`` opens a subset of blocks, the camera-plane field is the
coherent sum

    E = sum_j b_j T_j,

and the readout is the intensity image ``I = |E|**2``.  Intensity is
therefore an exact quadratic form in the challenge bits,

    I = sum_j sum_k T_j conj(T_k) b_j b_k,

which is what makes the token learnable from challenge-response pairs.

Per-block patterns are drawn i.i.d. standard complex Gaussian per pixel,
optionally smoothed with a Gaussian kernel (``speckle_smoothing``, in
pixels) to give the speckle a finite grain size, then shaped by a
circular Gaussian envelope that concentrates light in the image centre.
Every pattern comes from its own counter-based stream keyed with
``(seed, block_index)``, so construction is reproducible and
order-independent.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .validation import as_bit_matrix, check_finite, check_seed

# Challenges are mixed into the field in chunks so the complex field stack
# for a batch never exceeds a few hundred MB.
_RESPOND_CHUNK = 64


@dataclass(frozen=True)
class PufConfig:
    """Geometry and sampling parameters of one simulated token.

    grid_side:          blocks per row of the challenge mask (positive odd).
    image_side:         pixels per side of the full response image.
    crop_side:          pixels per side of the centre crop used downstream.
    speckle_smoothing:  Gaussian sigma (pixels) applied to each complex
                        pattern before the envelope; 0 disables smoothing.
    scale_factor:       1 for the standard envelope (sigma = image_side/6),
                        2 for the enlarged geometry (sigma = image_side/3).
    seed:               unsigned 64-bit seed for pattern generation.
    noise_std:          relative std of multiplicative intensity noise,
                        applied only when a response is requested noisy.
    """

    grid_side: int = 5
    image_side: int = 512
    crop_side: int = 128
    speckle_smoothing: float = 2.0
    scale_factor: int = 1
    seed: int = 0
    noise_std: float = 0.0

    def __post_init__(self):
        if self.grid_side < 3 or self.grid_side % 2 == 0:
            raise ValueError(f"grid_side must be an odd integer >= 3, got {self.grid_side}")
        if self.image_side < 1:
            raise ValueError(f"image_side must be positive, got {self.image_side}")
        if not 1 <= self.crop_side <= self.image_side:
            raise ValueError(
                f"crop_side must be in [1, image_side], got {self.crop_side} vs {self.image_side}"
            )
        if self.speckle_smoothing < 0:
            raise ValueError("speckle_smoothing must be >= 0")
        if self.scale_factor not in (1, 2):
            raise ValueError(f"scale_factor must be 1 or 2, got {self.scale_factor}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        check_seed(self.seed)

    @property
    def n(self) -> int:
        """Number of challenge blocks."""
        return self.grid_side * self.grid_side

    @property
    def envelope_sigma(self) -> float:
        return self.image_side / 6.0 * self.scale_factor

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PufConfig":
        return cls(**d)


class TransmissionMatrix:
    """One realized token: the per-block complex field patterns.

    ``patterns`` has shape (n, image_side, image_side), dtype complex128.
    ``regenerable`` is True when the patterns can be rebuilt from the
    config alone; derived tokens (see :func:`refine`) cannot, and refuse
    header-only serialization.
    """

    def __init__(self, config: PufConfig, patterns: np.ndarray, regenerable: bool = True):
        patterns = np.asarray(patterns, dtype=np.complex128)
        expected = (config.n, config.image_side, config.image_side)
        if patterns.shape != expected:
            raise ValueError(f"patterns shape {patterns.shape} does not match config {expected}")
        check_finite(patterns.view(np.float64), "patterns")
        self.config = config
        self.patterns = patterns
        self.regenerable = regenerable

    @property
    def n(self) -> int:
        return self.config.n

    def __repr__(self):
        c = self.config
        return (
            f"TransmissionMatrix(grid_side={c.grid_side}, image_side={c.image_side}, "
            f"seed={c.seed})"
        )


def _envelope(config: PufConfig) -> np.ndarray:
    p = config.image_side
    c = (p - 1) / 2.0
    axis = np.arange(p) - c
    r2 = axis[:, np.newaxis] ** 2 + axis[np.newaxis, :] ** 2
    return np.exp(-r2 / (2.0 * config.envelope_sigma**2))


def block_pattern(config: PufConfig, index: int, envelope: np.ndarray | None = None) -> np.ndarray:
    """Draw the complex field pattern of one block from its own stream."""
    if not 0 <= index < config.n:
        raise ValueError(f"block index {index} out of range for n={config.n}")
    rng = np.random.Generator(np.random.Philox(key=np.array([config.seed, index], dtype=np.uint64)))
    p = config.image_side
    field = rng.standard_normal((p, p)) + 1j * rng.standard_normal((p, p))
    field /= np.sqrt(2.0)
    if config.speckle_smoothing > 0:
        sigma = config.speckle_smoothing
        field = gaussian_filter(field.real, sigma) + 1j * gaussian_filter(field.imag, sigma)
    if envelope is None:
        envelope = _envelope(config)
    return field * envelope


def build_puf(config: PufConfig) -> TransmissionMatrix:
    """Realize the token drawn from ``config.seed``."""
    envelope = _envelope(config)
    p = config.image_side
    patterns = np.empty((config.n, p, p), dtype=np.complex128)
    for j in range(config.n):
        patterns[j] = block_pattern(config, j, envelope)
    return TransmissionMatrix(config, patterns)


def crop_center(images: np.ndarray, crop_side: int) -> np.ndarray:
    """Centre crop; for odd margins the extra row/column stays bottom/right."""
    images = np.asarray(images)
    side = images.shape[-1]
    if images.ndim < 2 or images.shape[-2] != side:
        raise ValueError(f"expected square trailing dims, got shape {images.shape}")
    if crop_side > side:
        raise ValueError(f"crop_side {crop_side} exceeds image side {side}")
    start = (side - crop_side) // 2
    return images[..., start : start + crop_side, start : start + crop_side]


def respond(
    puf: TransmissionMatrix,
    challenges,
    *,
    crop: int | None = None,
    add_noise: bool = False,
    noise_seed: int = 0,
) -> np.ndarray:
    """Intensity response(s) of the token to one or many challenges.

    With ``crop`` set, only the centre ``crop x crop`` window is computed
    (block-wise the intensity of a pixel depends on no other pixel, so the
    windowed result equals ``crop_center`` of the full response).  With
    ``add_noise``, every pixel is multiplied by ``1 + g`` with
    ``g ~ N(0, noise_std)`` drawn from ``noise_seed``, then clamped at 0
    so intensities stay physical.
    """
    bits, single = as_bit_matrix(challenges, n=puf.n)
    patterns = puf.patterns
    side = puf.config.image_side
    if crop is not None:
        patterns = crop_center(patterns, crop)
        side = crop
    flat = patterns.reshape(puf.n, -1)
    count = bits.shape[0]
    out = np.empty((count, side * side), dtype=np.float64)
    for lo in range(0, count, _RESPOND_CHUNK):
        hi = min(lo + _RESPOND_CHUNK, count)
        field = bits[lo:hi].astype(np.complex128) @ flat
        out[lo:hi] = field.real**2 + field.imag**2
    out = out.reshape(count, side, side)
    if add_noise and puf.config.noise_std > 0:
        rng = np.random.Generator(np.random.Philox(key=check_seed(noise_seed, "noise_seed")))
        out *= 1.0 + rng.normal(0.0, puf.config.noise_std, size=out.shape)
        # large noise draws could flip the sign; intensities stay >= 0
        np.maximum(out, 0.0, out=out)
    check_finite(out, "response")
    return out[0] if single else out


def refine(puf: TransmissionMatrix, factor: int) -> TransmissionMatrix:
    """Token on the ``grid_side*factor`` grid physically equivalent to ``puf``.

    Each block is split into ``factor**2`` sub-blocks carrying equal shares
    of the parent pattern, so responding to a block-split challenge on the
    refined token reproduces the original response.  The result is a
    derived token: it has no generating seed of its own.

    The factor must be odd: grid sides are odd by the config contract, and
    an even factor would break that.  Fitted linear models support every
    factor through coefficient splitting, which needs no refined token.
    """
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor == 1:
        return puf
    if factor % 2 == 0:
        raise ValueError(
            "refinement factor must be odd to keep the grid side odd; "
            "use split_coefficients on a fitted model for even factors"
        )
    cfg = puf.config
    fine = dataclasses.replace(cfg, grid_side=cfg.grid_side * factor)
    share = puf.patterns / float(factor * factor)
    l, f, p = cfg.grid_side, factor, cfg.image_side
    grid = share.reshape(l, l, p, p)
    # parent (r, c) -> children (r*f + dr, c*f + dc), all carrying share
    fine_grid = np.broadcast_to(grid[:, np.newaxis, :, np.newaxis], (l, f, l, f, p, p))
    patterns = fine_grid.reshape(fine.n, p, p)
    return TransmissionMatrix(fine, patterns, regenerable=False)


def save_puf(puf: TransmissionMatrix | PufConfig, path) -> None:
    """Persist as a JSON header only; patterns are regrown from the seed.

    Accepts a realized token or just its configuration (which fully
    determines the token).
    """
    if isinstance(puf, PufConfig):
        config = puf
    else:
        if not puf.regenerable:
            raise ValueError(
                "derived tokens cannot be saved header-only; persist the source token"
            )
        config = puf.config
    header = {"format": "pufforge-puf", "version": 1, "config": config.to_dict()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_puf_config(path) -> PufConfig:
    """Configuration from a saved token header, without growing patterns."""
    with open(path, "r", encoding="utf-8") as fh:
        header = json.load(fh)
    if header.get("format") != "pufforge-puf":
        raise ValueError(f"{path} is not a saved token header")
    return PufConfig.from_dict(header["config"])


def load_puf(path) -> TransmissionMatrix:
    return build_puf(load_puf_config(path))
