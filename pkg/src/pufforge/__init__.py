"""pufforge: optical PUF simulation, readout post-processing, and modeling attacks."""

from .challenges import (
    SCHEMES,
    eligible_mask,
    generate_challenges,
    popcount_histogram,
    quadratic_expand,
    scheme_cap,
    split_blocks,
)
from .gabor import PRESETS, GaborBinarizer, GaborKernel, gabor_binarize, gabor_filter, make_kernel
from .generator import (
    Adam,
    GeneratorAttack,
    box_downsample,
    load_generator,
    save_generator,
    upsample_nearest,
)
from .linear import (
    DEFAULT_ALPHA_GRID,
    LinearAttack,
    RidgeAttack,
    expand_features,
    load_model,
    save_model,
    select_alpha,
    split_coefficients,
)
from .metrics import (
    BoxplotStats,
    boxplot_stats,
    crossover_threshold,
    dataset_fhd,
    fhd,
    pearson,
    shannon_entropy,
    ssim,
)
from .simulator import (
    PufConfig,
    TransmissionMatrix,
    build_puf,
    crop_center,
    load_puf,
    refine,
    respond,
    save_puf,
)

__version__ = "0.1.0"

__all__ = [
    "SCHEMES",
    "eligible_mask",
    "generate_challenges",
    "popcount_histogram",
    "quadratic_expand",
    "scheme_cap",
    "split_blocks",
    "PRESETS",
    "GaborBinarizer",
    "GaborKernel",
    "gabor_binarize",
    "gabor_filter",
    "make_kernel",
    "Adam",
    "GeneratorAttack",
    "box_downsample",
    "load_generator",
    "save_generator",
    "upsample_nearest",
    "DEFAULT_ALPHA_GRID",
    "LinearAttack",
    "RidgeAttack",
    "expand_features",
    "load_model",
    "save_model",
    "select_alpha",
    "split_coefficients",
    "BoxplotStats",
    "boxplot_stats",
    "crossover_threshold",
    "dataset_fhd",
    "fhd",
    "pearson",
    "shannon_entropy",
    "ssim",
    "PufConfig",
    "TransmissionMatrix",
    "build_puf",
    "crop_center",
    "load_puf",
    "refine",
    "respond",
    "save_puf",
    "__version__",
]
