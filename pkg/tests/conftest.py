"""Shared fixtures: small simulated tokens and datasets reused across tests.

Module tests run on deliberately small geometries so the whole suite
stays fast; the acceptance tests build their own full-scale datasets.
Datasets that get Gabor-binarized use 64px crops (the G2 kernel is
9x51, so crops must be at least 51px on a side); pure linear-algebra
tests use the cheaper 16px crop.
"""

import numpy as np
import pytest

import pufforge as pf
from pufforge.dataset import generate_dataset


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running training or full-scale tests")


@pytest.fixture(scope="session")
def tiny_config():
    """3x3 token on a 64px camera, 16px crop: cheapest legal geometry."""
    return pf.PufConfig(grid_side=3, image_side=64, crop_side=16, speckle_smoothing=1.0, seed=7)


@pytest.fixture(scope="session")
def tiny_puf(tiny_config):
    return pf.build_puf(tiny_config)


@pytest.fixture(scope="session")
def small_dataset():
    """5x5 token, 64px crop, 120 CRPs.

    The raw design (25 features) is over-determined, the quadratic one
    (325 features) under-determined, so both regimes are reachable.
    """
    cfg = pf.PufConfig(grid_side=5, image_side=128, crop_side=64, seed=11)
    return generate_dataset(cfg, "A", 120, 5)


@pytest.fixture(scope="session")
def quad_dataset():
    """3x3 token, 64px crop, 90 CRPs: the quadratic design (45 features
    + intercept) is over-determined by the 81-sample training split, so
    quadratic models interpolate the physics exactly."""
    cfg = pf.PufConfig(grid_side=3, image_side=128, crop_side=64, speckle_smoothing=1.0, seed=2)
    return generate_dataset(cfg, "A", 90, 4)


def bit_fhd_mean(images_a, images_b, preset="G1"):
    """Mean FHD between two image stacks after Gabor binarization."""
    kernel = pf.make_kernel(preset)
    bits_a = pf.gabor_binarize(images_a, kernel)
    bits_b = pf.gabor_binarize(images_b, kernel)
    return float(np.mean([pf.fhd(x, y) for x, y in zip(bits_a, bits_b)]))
