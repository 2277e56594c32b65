"""Regression attacks: per-pixel linear models from challenge features.

Every output pixel of the cropped response gets its own affine model in
the challenge features; the feature map is either the raw bits or all
unordered pairwise bit products (under which the intensity physics is
exactly linear, so given enough samples the quadratic models interpolate
the token perfectly).

The intercept is handled by centering features and targets, which keeps
it out of the ridge penalty and gives the minimum-norm convention on the
slopes alone: for rank-deficient designs the slopes are the smallest
solution fitting the data with a free intercept.  A single thin SVD of
the centered design serves OLS (lambda = 0, small singular values cut at
the lstsq default threshold) and any ridge lambda, so OLS is exactly the
lambda = 0 ridge solution here.

``features="quadratic"`` with ridge reproduces the QRR attack,
``features="quadratic"`` with lambda 0 the QLR attack, raw features the
plain LR/ridge attacks.
"""

from __future__ import annotations

import json

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from . import formats
from .challenges import quadratic_expand
from .gabor import gabor_binarize, make_kernel
from .validation import as_bit_matrix, as_image_stack, check_finite

FEATURE_KINDS = ("raw", "quadratic")

#: lambda grid scanned when none is given: 13 log-spaced points.
DEFAULT_ALPHA_GRID = tuple(np.logspace(-6.0, 4.0, 13))


def expand_features(challenges, kind: str) -> np.ndarray:
    if kind not in FEATURE_KINDS:
        raise ValueError(f"unknown feature kind {kind!r}, expected one of {FEATURE_KINDS}")
    bits, _ = as_bit_matrix(challenges)
    if kind == "quadratic":
        return quadratic_expand(bits).astype(np.float64)
    return bits.astype(np.float64)


class _CenteredSvd:
    """Thin SVD of the centered design, reusable across ridge lambdas."""

    def __init__(self, phi: np.ndarray, targets: np.ndarray):
        self.x_mean = phi.mean(axis=0)
        self.y_mean = targets.mean(axis=0)
        xc = phi - self.x_mean
        self.u, self.s, self.vt = np.linalg.svd(xc, full_matrices=False)
        self.uty = self.u.T @ (targets - self.y_mean)
        # lstsq-style cutoff for the pseudo-inverse at lambda = 0
        eps = np.finfo(np.float64).eps
        self.cutoff = self.s.max(initial=0.0) * max(xc.shape) * eps

    def _filter(self, alpha: float) -> np.ndarray:
        if alpha == 0.0:
            inv = np.zeros_like(self.s)
            keep = self.s > self.cutoff
            inv[keep] = 1.0 / self.s[keep]
            return inv
        return self.s / (self.s**2 + alpha)

    def coefficients(self, alpha: float) -> np.ndarray:
        """Full (features+1, pixels) matrix, first row = intercepts."""
        slopes = self.vt.T @ (self._filter(alpha)[:, np.newaxis] * self.uty)
        intercept = self.y_mean - self.x_mean @ slopes
        return np.vstack([intercept[np.newaxis, :], slopes])

    def predict(self, phi: np.ndarray, alpha: float) -> np.ndarray:
        """Predictions without materializing the slope matrix."""
        proj = ((phi - self.x_mean) @ self.vt.T) * self._filter(alpha)[np.newaxis, :]
        return proj @ self.uty + self.y_mean


class RidgeAttack(RegressorMixin, BaseEstimator):
    """Per-pixel ridge regression from challenge features to images.

    Parameters
    ----------
    features : "raw" or "quadratic"
        Feature map applied to challenge bits before the affine model.
    alpha : float
        Ridge penalty on the slopes (never on the intercept); 0 gives
        the minimum-norm least-squares solution.
    """

    def __init__(self, features: str = "raw", alpha: float = 1.0):
        self.features = features
        self.alpha = alpha

    def _validate_fit_inputs(self, X, Y):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        bits, _ = as_bit_matrix(X)
        images, _ = as_image_stack(Y)
        if images.shape[0] != bits.shape[0]:
            raise ValueError(
                f"sample counts differ: {bits.shape[0]} challenges vs {images.shape[0]} images"
            )
        if bits.shape[0] < 1:
            raise ValueError("need at least one training sample")
        if images.shape[1] != images.shape[2]:
            raise ValueError(f"images must be square, got {images.shape[1:]}")
        return bits, images

    def fit(self, X, Y):
        bits, images = self._validate_fit_inputs(X, Y)
        phi = expand_features(bits, self.features)
        targets = images.reshape(images.shape[0], -1)
        svd = _CenteredSvd(phi, targets)
        coef = svd.coefficients(float(self.alpha))
        check_finite(coef, "coefficients")
        self.coef_ = coef
        self.n_features_in_ = bits.shape[1]
        self.output_side_ = images.shape[1]
        self.rank_ = int((svd.s > svd.cutoff).sum())
        residual = phi @ coef[1:] + coef[0] - targets
        sq_scale = float((targets**2).mean())
        self.residual_summary_ = {
            "mse": float((residual**2).mean()),
            "relative_mse": float((residual**2).mean() / sq_scale) if sq_scale > 0 else 0.0,
            "max_abs": float(np.abs(residual).max(initial=0.0)),
        }
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "coef_"):
            raise ValueError("model is not fitted")
        bits, single = as_bit_matrix(X, n=self.n_features_in_)
        phi = expand_features(bits, self.features)
        if phi.shape[1] != self.coef_.shape[0] - 1:
            raise ValueError(
                f"feature length {phi.shape[1]} does not match model {self.coef_.shape[0] - 1}"
            )
        flat = phi @ self.coef_[1:] + self.coef_[0]
        np.maximum(flat, 0.0, out=flat)  # intensities are physically nonnegative
        q = self.output_side_
        out = flat.reshape(-1, q, q)
        return out[0] if single else out


class LinearAttack(RidgeAttack):
    """Per-pixel least squares (ridge with alpha fixed at 0)."""

    def __init__(self, features: str = "raw"):
        super().__init__(features=features, alpha=0.0)


def select_alpha(
    X,
    Y,
    features: str = "quadratic",
    grid=None,
    seed: int = 0,
    kernel_preset: str = "G1",
) -> float:
    """Pick the grid lambda minimizing validation mean FHD.

    Shuffles the training set from ``seed``, holds out the last 10%
    (at least one sample), fits on the remainder once per lambda via a
    shared SVD, and scores each lambda by the mean FHD between the
    binarized predicted and true validation images.  Ties keep the
    earliest lambda in grid order.
    """
    grid = DEFAULT_ALPHA_GRID if grid is None else tuple(grid)
    if len(grid) == 0:
        raise ValueError("grid must be nonempty")
    if any(g < 0 for g in grid):
        raise ValueError("lambdas must be >= 0")
    bits, _ = as_bit_matrix(X)
    images, _ = as_image_stack(Y)
    count = bits.shape[0]
    if count < 2:
        raise ValueError("need at least 2 samples to split")
    n_val = max(1, count // 10)
    order = np.random.default_rng(seed).permutation(count)
    fit_idx, val_idx = order[: count - n_val], order[count - n_val :]
    phi = expand_features(bits, features)
    targets = images.reshape(count, -1)
    svd = _CenteredSvd(phi[fit_idx], targets[fit_idx])
    kern = make_kernel(kernel_preset)
    q = images.shape[1]
    true_bits = gabor_binarize(images[val_idx], kern)
    best_alpha, best_score = None, np.inf
    for alpha in grid:
        pred = svd.predict(phi[val_idx], float(alpha))
        np.maximum(pred, 0.0, out=pred)
        pred_bits = gabor_binarize(pred.reshape(-1, q, q), kern)
        score = float(np.mean(pred_bits != true_bits))
        if score < best_score:
            best_alpha, best_score = float(alpha), score
    return best_alpha


def split_coefficients(model: RidgeAttack, factor: int) -> RidgeAttack:
    """Model on the block-split challenge grid equivalent to ``model``.

    Each slope is shared equally by the factor**2 sub-block positions
    that replace its block, so predictions on split challenges match the
    original predictions on the original challenges.  Only raw-feature
    models split this way; pair products do not distribute over blocks.
    """
    if getattr(model, "features", None) != "raw":
        raise ValueError("split_coefficients requires a raw-feature model")
    if not hasattr(model, "coef_"):
        raise ValueError("model is not fitted")
    if factor < 1:
        raise ValueError("factor must be >= 1")
    out = LinearAttack(features="raw") if isinstance(model, LinearAttack) else RidgeAttack(
        features="raw", alpha=model.alpha
    )
    if factor == 1:
        parent_of = np.arange(model.n_features_in_)
    else:
        side = int(np.sqrt(model.n_features_in_))
        if side * side != model.n_features_in_:
            raise ValueError("model input length is not a square grid")
        grid = np.arange(side * side).reshape(side, side)
        fine = np.repeat(np.repeat(grid, factor, axis=0), factor, axis=1)
        parent_of = fine.ravel()
    share = model.coef_[1:] / float(factor * factor)
    out.coef_ = np.vstack([model.coef_[:1], share[parent_of]])
    out.n_features_in_ = int(parent_of.size)
    out.output_side_ = model.output_side_
    out.residual_summary_ = dict(model.residual_summary_)
    return out


def save_model(model: RidgeAttack, header_path, block_path) -> None:
    """JSON header + raw little-endian float64 coefficient block."""
    if not hasattr(model, "coef_"):
        raise ValueError("model is not fitted")
    header = {
        "format": "pufforge-linear-model",
        "version": 1,
        "kind": "linear" if isinstance(model, LinearAttack) else "ridge",
        "features": model.features,
        "alpha": float(model.alpha),
        "input_bits": int(model.n_features_in_),
        "output_side": int(model.output_side_),
        "coef_shape": [int(s) for s in model.coef_.shape],
        "residual_summary": model.residual_summary_,
    }
    with open(header_path, "w", encoding="utf-8") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    formats.write_f64_block(block_path, model.coef_)


def load_model(header_path, block_path) -> RidgeAttack:
    with open(header_path, "r", encoding="utf-8") as fh:
        header = json.load(fh)
    if header.get("format") != "pufforge-linear-model":
        raise ValueError(f"{header_path} is not a linear model header")
    if header["kind"] == "linear":
        model = LinearAttack(features=header["features"])
    else:
        model = RidgeAttack(features=header["features"], alpha=header["alpha"])
    model.coef_ = formats.read_f64_block(block_path, header["coef_shape"])
    model.n_features_in_ = header["input_bits"]
    model.output_side_ = header["output_side"]
    model.residual_summary_ = dict(header["residual_summary"])
    return model
