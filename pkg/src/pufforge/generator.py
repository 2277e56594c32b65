"""Fully connected generator attack: challenge bits to speckle images.

The network is a plain MLP, by default

    n -> 1280 -> 4096 -> r*r        (r = 64)

with LeakyReLU(0.2) on the hidden layers and an identity output, trained
with mini-batch ADAM on the mean squared error against cropped responses
box-downsampled to r x r and normalized to unit max.  Forward, reverse-
mode gradients, and the optimizer are implemented here directly so the
gradient path can be checked against finite differences exactly.

All parameters live in one flat vector; layers hold views into it, and
the ADAM update runs as a single fused pass over the vector (numba when
available, an op-for-op identical numpy fallback otherwise).  Training
defaults to float32, which halves the memory traffic of the update; the
float64 path is used by the gradient-check tests.
"""

from __future__ import annotations

import json
import math

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from . import formats
from .validation import as_bit_matrix, as_image_stack

try:
    import numba

    @numba.njit(cache=True)
    def _adam_kernel(p, g, m, v, lr_t, b1, omb1, b2, omb2, eps_t):
        for i in range(p.size):
            gi = g[i]
            mi = b1 * m[i] + omb1 * gi
            vi = b2 * v[i] + omb2 * gi * gi
            m[i] = mi
            v[i] = vi
            p[i] = p[i] - lr_t * mi / (np.sqrt(vi) + eps_t)

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False


def _adam_numpy(p, g, m, v, lr_t, b1, omb1, b2, omb2, eps_t):
    # mirrors the kernel's per-element expressions so both paths round
    # identically for the same dtype
    m[:] = b1 * m + omb1 * g
    v[:] = b2 * v + omb2 * g * g
    p -= lr_t * m / (np.sqrt(v) + eps_t)


class Adam:
    """Standard ADAM with bias correction folded into the step size."""

    def __init__(self, alpha: float = 0.01, beta1: float = 0.8, beta2: float = 0.9, eps: float = 1e-8):
        if not 0 <= beta1 < 1 or not 0 <= beta2 < 1:
            raise ValueError("betas must lie in [0, 1)")
        if eps <= 0:
            raise ValueError("eps must be positive")
        self.alpha = float(alpha)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params: np.ndarray, grads: np.ndarray) -> None:
        """One in-place update of ``params`` from ``grads``."""
        if params.shape != grads.shape:
            raise ValueError("parameter and gradient shapes differ")
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        elif self.m.shape != params.shape:
            raise ValueError("optimizer state does not match parameter shape")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        dt = params.dtype.type
        args = (
            params,
            grads,
            self.m,
            self.v,
            dt(self.alpha * math.sqrt(c2) / c1),
            dt(self.beta1),
            dt(1.0 - self.beta1),
            dt(self.beta2),
            dt(1.0 - self.beta2),
            dt(self.eps * math.sqrt(c2)),
        )
        if _HAVE_NUMBA:
            _adam_kernel(*args)
        else:
            _adam_numpy(*args)


def box_downsample(images, side: int) -> np.ndarray:
    """Mean over non-overlapping square blocks down to ``side x side``."""
    stack, single = as_image_stack(images)
    src = stack.shape[1]
    if src % side != 0:
        raise ValueError(f"image side {src} is not a multiple of target side {side}")
    f = src // side
    out = stack.reshape(-1, side, f, side, f).mean(axis=(2, 4))
    return out[0] if single else out


def upsample_nearest(images, side: int) -> np.ndarray:
    """Nearest-neighbour upsampling to ``side x side`` (floor index map)."""
    stack, single = as_image_stack(images)
    src = stack.shape[1]
    if side < src:
        raise ValueError(f"target side {side} smaller than source {src}")
    idx = (np.arange(side) * src) // side
    out = stack[:, idx][:, :, idx]
    return out[0] if single else out


class GeneratorAttack(RegressorMixin, BaseEstimator):
    """MLP generator trained with ADAM + MSE on downsampled crops.

    Parameters mirror the committed training recipe; ``dtype`` selects
    the arithmetic width (float32 default; float64 for gradient checks).
    """

    def __init__(
        self,
        hidden_widths: tuple[int, ...] = (1280, 4096),
        output_side: int = 64,
        epochs: int = 300,
        batch_size: int = 16,
        learning_rate: float = 0.01,
        beta1: float = 0.8,
        beta2: float = 0.9,
        epsilon: float = 1e-8,
        leak: float = 0.2,
        seed: int = 0,
        dtype: str = "float32",
    ):
        self.hidden_widths = hidden_widths
        self.output_side = output_side
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.leak = leak
        self.seed = seed
        self.dtype = dtype

    # -- architecture ------------------------------------------------

    def _widths(self, n: int) -> list[int]:
        widths = [int(n), *(int(w) for w in self.hidden_widths), int(self.output_side) ** 2]
        if any(w <= 0 for w in widths):
            raise ValueError(f"layer widths must be positive, got {widths}")
        return widths

    def _layout(self, n: int) -> list[tuple[int, tuple[int, ...]]]:
        """Flat-vector layout: (offset, shape) per weight/bias block."""
        widths = self._widths(n)
        layout = []
        offset = 0
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            layout.append((offset, (fan_in, fan_out)))
            offset += fan_in * fan_out
            layout.append((offset, (fan_out,)))
            offset += fan_out
        self._param_count = offset
        return layout

    def _views(self, flat: np.ndarray, layout) -> list[tuple[np.ndarray, np.ndarray]]:
        pairs = []
        for i in range(0, len(layout), 2):
            (ow, sw), (ob, sb) = layout[i], layout[i + 1]
            pairs.append((flat[ow : ow + sw[0] * sw[1]].reshape(sw), flat[ob : ob + sb[0]]))
        return pairs

    def build(self, n: int) -> "GeneratorAttack":
        """Initialize parameters for input width ``n`` without training.

        Weights are He-style scaled normals (std sqrt(2 / fan_in)) drawn
        from the run seed, biases zero.
        """
        if n < 1:
            raise ValueError("input width must be >= 1")
        layout = self._layout(n)
        rng = np.random.default_rng(self.seed)
        flat = np.zeros(self._param_count, dtype=np.dtype(self.dtype))
        for offset, shape in layout:
            if len(shape) == 2:
                block = rng.standard_normal(shape) * math.sqrt(2.0 / shape[0])
                flat[offset : offset + shape[0] * shape[1]] = block.ravel().astype(flat.dtype)
        self.params_ = flat
        self._layout_ = layout
        self.n_features_in_ = int(n)
        return self

    @property
    def layers_(self) -> list[tuple[np.ndarray, np.ndarray, str]]:
        """(weights, bias, activation) triples viewing the flat vector."""
        pairs = self._views(self.params_, self._layout_)
        acts = ["leaky_relu"] * (len(pairs) - 1) + ["identity"]
        return [(w, b, a) for (w, b), a in zip(pairs, acts)]

    # -- forward / backward ------------------------------------------

    def _forward(self, x: np.ndarray) -> list[np.ndarray]:
        """Pre-activations per layer; input is already cast to dtype."""
        leak = self.params_.dtype.type(self.leak)
        pairs = self._views(self.params_, self._layout_)
        pre = []
        h = x
        for i, (w, b) in enumerate(pairs):
            a = h @ w
            a += b
            pre.append(a)
            if i < len(pairs) - 1:
                h = np.where(a > 0, a, leak * a)
        return pre

    def forward(self, challenges) -> np.ndarray:
        """Raw network output (no clamp), shape (count, r*r) float64."""
        if not hasattr(self, "params_"):
            raise ValueError("model is not built")
        bits, single = as_bit_matrix(challenges, n=self.n_features_in_)
        x = bits.astype(self.params_.dtype)
        out = self._forward(x)[-1].astype(np.float64)
        return out[0] if single else out

    def _backward(self, x, pre, targets, grad_out: np.ndarray) -> float:
        """Mean-MSE loss; writes exact gradients into ``grad_out``."""
        dt = self.params_.dtype.type
        leak = dt(self.leak)
        pairs_p = self._views(self.params_, self._layout_)
        pairs_g = self._views(grad_out, self._layout_)
        batch, pixels = pre[-1].shape
        resid = pre[-1] - targets
        loss = float(np.mean(resid.astype(np.float64) ** 2))
        delta = resid * dt(2.0 / (batch * pixels))
        for i in range(len(pairs_p) - 1, -1, -1):
            gw, gb = pairs_g[i]
            h_in = x if i == 0 else np.where(pre[i - 1] > 0, pre[i - 1], leak * pre[i - 1])
            np.matmul(h_in.T, delta, out=gw)
            np.sum(delta, axis=0, out=gb)
            if i > 0:
                back = delta @ pairs_p[i][0].T
                delta = np.where(pre[i - 1] > 0, back, leak * back)
        return loss

    def gradients(self, challenges, targets) -> np.ndarray:
        """Exact reverse-mode gradients of the mean MSE over the batch.

        ``targets`` are unit-max r x r images (or flat vectors); returns
        a flat vector aligned with ``params_``.
        """
        if not hasattr(self, "params_"):
            raise ValueError("model is not built")
        bits, _ = as_bit_matrix(challenges, n=self.n_features_in_)
        if bits.shape[0] == 0:
            raise ValueError("batch must be nonempty")
        y = np.asarray(targets, dtype=self.params_.dtype).reshape(bits.shape[0], -1)
        if y.shape[1] != self.output_side**2:
            raise ValueError(f"targets must have {self.output_side ** 2} pixels per sample")
        x = bits.astype(self.params_.dtype)
        grads = np.empty_like(self.params_)
        self._backward(x, self._forward(x), y, grads)
        return grads

    def loss(self, challenges, targets) -> float:
        bits, _ = as_bit_matrix(challenges, n=self.n_features_in_)
        y = np.asarray(targets, dtype=np.float64).reshape(bits.shape[0], -1)
        pred = self.forward(bits)
        return float(np.mean((pred - y) ** 2))

    # -- training ----------------------------------------------------

    def _prepare_targets(self, images: np.ndarray) -> np.ndarray:
        r = int(self.output_side)
        small = images if images.shape[1] == r else box_downsample(images, r)
        peak = small.max(axis=(1, 2), keepdims=True)
        small = np.divide(small, peak, out=small.copy(), where=peak > 0)
        return small.reshape(small.shape[0], -1)

    def fit(self, X, Y):
        """Train on challenges ``X`` and cropped response images ``Y``."""
        bits, _ = as_bit_matrix(X)
        images, _ = as_image_stack(Y)
        if bits.shape[0] != images.shape[0]:
            raise ValueError(
                f"sample counts differ: {bits.shape[0]} challenges vs {images.shape[0]} images"
            )
        if bits.shape[0] < 1:
            raise ValueError("training set must be nonempty")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        self.build(bits.shape[1])
        targets = self._prepare_targets(images).astype(self.params_.dtype)
        x_all = bits.astype(self.params_.dtype)
        count = x_all.shape[0]
        # distinct stream from the init draw in build()
        rng = np.random.default_rng([np.uint64(self.seed), np.uint64(1)])
        opt = Adam(self.learning_rate, self.beta1, self.beta2, self.epsilon)
        grads = np.empty_like(self.params_)
        curve = np.empty(self.epochs, dtype=np.float64)
        for epoch in range(self.epochs):
            order = rng.permutation(count)
            total = 0.0
            for lo in range(0, count, self.batch_size):
                take = order[lo : lo + self.batch_size]
                x = x_all[take]
                loss = self._backward(x, self._forward(x), targets[take], grads)
                if not math.isfinite(loss):
                    raise FloatingPointError(
                        f"training diverged: non-finite loss at epoch {epoch}, sample {lo}"
                    )
                opt.step(self.params_, grads)
                total += loss * len(take)
            curve[epoch] = total / count
        self.loss_curve_ = curve
        self.optimizer_ = opt
        return self

    def predict(self, X) -> np.ndarray:
        """Predicted r x r images, negatives clamped to 0, float64."""
        out = self.forward(X)
        single = out.ndim == 1
        flat = np.maximum(out if not single else out[np.newaxis], 0.0)
        r = int(self.output_side)
        images = flat.reshape(-1, r, r)
        return images[0] if single else images


def save_generator(model: GeneratorAttack, header_path, block_path) -> None:
    """JSON header + raw little-endian float64 parameter block."""
    if not hasattr(model, "params_"):
        raise ValueError("model is not built")
    header = {
        "format": "pufforge-generator-model",
        "version": 1,
        "input_bits": int(model.n_features_in_),
        "hidden_widths": [int(w) for w in model.hidden_widths],
        "output_side": int(model.output_side),
        "activations": ["leaky_relu"] * len(model.hidden_widths) + ["identity"],
        "leak": float(model.leak),
        "seed": int(model.seed),
        "dtype": str(model.dtype),
        "epochs": int(model.epochs),
        "batch_size": int(model.batch_size),
        "learning_rate": float(model.learning_rate),
        "beta1": float(model.beta1),
        "beta2": float(model.beta2),
        "epsilon": float(model.epsilon),
        "param_count": int(model.params_.size),
    }
    with open(header_path, "w", encoding="utf-8") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    formats.write_f64_block(block_path, model.params_.astype(np.float64))


def load_generator(header_path, block_path) -> GeneratorAttack:
    with open(header_path, "r", encoding="utf-8") as fh:
        header = json.load(fh)
    if header.get("format") != "pufforge-generator-model":
        raise ValueError(f"{header_path} is not a generator model header")
    model = GeneratorAttack(
        hidden_widths=tuple(header["hidden_widths"]),
        output_side=header["output_side"],
        epochs=header["epochs"],
        batch_size=header["batch_size"],
        learning_rate=header["learning_rate"],
        beta1=header["beta1"],
        beta2=header["beta2"],
        epsilon=header["epsilon"],
        leak=header["leak"],
        seed=header["seed"],
        dtype=header["dtype"],
    )
    model.build(header["input_bits"])
    flat = formats.read_f64_block(block_path, [header["param_count"]])
    model.params_[:] = flat.astype(model.params_.dtype)
    return model
