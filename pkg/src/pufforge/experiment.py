"""Experiment pipelines: single attacks, size/scheme grids, scale studies.

The parallelism unit is one grid cell (one token size x one challenge
scheme); cells are independent and never write the same path, so they
can run under a thread pool capped by ``PUF_FORGE_THREADS``.
"""

from __future__ import annotations

import os
import traceback
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .dataset import Dataset, generate_dataset, save_dataset
from .gabor import gabor_binarize, make_kernel
from .generator import GeneratorAttack, upsample_nearest
from .linear import LinearAttack, RidgeAttack, select_alpha
from .metrics import fhd
from .reports import build_attack_report, write_csv, write_json
from .simulator import PufConfig, build_puf, respond

MODEL_CHOICES = ("lr", "ridge", "qlr", "qrr", "generator")

_LINEAR_FEATURES = {"lr": "raw", "ridge": "raw", "qlr": "quadratic", "qrr": "quadratic"}


def resolve_threads(threads: int | None = None) -> int:
    """Explicit argument, else PUF_FORGE_THREADS, else 1."""
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("PUF_FORGE_THREADS", "").strip()
    return max(1, int(env)) if env else 1


def make_model(name: str, *, alpha: float = 0.0, generator_params: dict | None = None):
    if name not in MODEL_CHOICES:
        raise ValueError(f"unknown model {name!r}, expected one of {MODEL_CHOICES}")
    if name == "generator":
        return GeneratorAttack(**(generator_params or {}))
    features = _LINEAR_FEATURES[name]
    if name in ("lr", "qlr"):
        return LinearAttack(features=features)
    return RidgeAttack(features=features, alpha=alpha)


def run_attack(
    dataset: Dataset,
    model_name: str,
    *,
    alpha="auto",
    alpha_seed: int = 0,
    generator_params: dict | None = None,
):
    """Train one attack on the train split and predict the test split.

    Returns ``(model, predictions, metadata)`` with predictions already
    upsampled to the dataset crop resolution.  For the regularized
    models ``alpha="auto"`` picks the penalty by validation FHD on a
    held-out tenth of the training split.
    """
    if dataset.train_count < 1 or dataset.test_count < 1:
        raise ValueError("dataset needs nonempty train and test splits")
    x_train, y_train = dataset.train_challenges, dataset.train_responses
    metadata = {
        "model": model_name,
        "l": int(dataset.manifest["l"]),
        "scheme": dataset.scheme,
        "train_count": dataset.train_count,
        "test_count": dataset.test_count,
    }
    if model_name in ("ridge", "qrr"):
        if alpha == "auto":
            alpha = select_alpha(
                x_train, y_train, features=_LINEAR_FEATURES[model_name], seed=alpha_seed
            )
            metadata["alpha_selection"] = "auto"
        model = make_model(model_name, alpha=float(alpha))
        metadata["alpha"] = float(alpha)
    else:
        model = make_model(model_name, generator_params=generator_params)
        if model_name == "generator":
            params = model.get_params()
            params["hidden_widths"] = list(params["hidden_widths"])
            metadata["generator"] = params
    model.fit(x_train, y_train)
    predictions = model.predict(dataset.test_challenges)
    if model_name == "generator":
        metadata["final_loss"] = float(model.loss_curve_[-1])
        if predictions.shape[1] != dataset.crop_side:
            predictions = upsample_nearest(predictions, dataset.crop_side)
    else:
        metadata["rank"] = int(model.rank_)
        metadata["residual_summary"] = model.residual_summary_
    return model, predictions, metadata


def mean_test_fhd(dataset: Dataset, predictions: np.ndarray, preset: str = "G1") -> float:
    """Mean FHD between true and predicted test bitstrings for a kernel."""
    kernel = make_kernel(preset)
    truth = gabor_binarize(dataset.test_responses, kernel)
    pred = gabor_binarize(predictions, kernel)
    return float(np.mean([fhd(t, p) for t, p in zip(truth, pred)]))


def like_pair_fhds(
    dataset: Dataset,
    pairs: int,
    *,
    preset: str = "G1",
    seed: int = 0,
    noise_seed_base: int = 1000,
) -> np.ndarray:
    """Same-challenge FHD samples from two independent noisy readouts.

    Requires a simulated dataset (the token regenerates from its
    manifest).  With ``noise_std`` 0 the readouts coincide and every
    sample is 0.
    """
    config = dataset.puf_config
    if config is None:
        raise ValueError("like pairs need a simulated dataset with a token config")
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    puf = build_puf(config)
    rng = np.random.default_rng(seed)
    take = rng.choice(dataset.count, size=min(pairs, dataset.count), replace=False)
    challenges = dataset.challenges[take]
    kernel = make_kernel(preset)
    out = np.empty(take.size, dtype=np.float64)
    first = respond(
        puf, challenges, crop=dataset.crop_side, add_noise=True, noise_seed=noise_seed_base
    )
    second = respond(
        puf, challenges, crop=dataset.crop_side, add_noise=True, noise_seed=noise_seed_base + 1
    )
    bits_a = gabor_binarize(first, kernel)
    bits_b = gabor_binarize(second, kernel)
    for i in range(take.size):
        out[i] = fhd(bits_a[i], bits_b[i])
    return out


# -- size x scheme grid ----------------------------------------------


def _run_cell(cell_dir, config: PufConfig, scheme, count, challenge_seed, models, alpha, generator_params):
    dataset = generate_dataset(config, scheme, count, challenge_seed)
    save_dataset(dataset, os.path.join(cell_dir, "dataset"))
    cell = {
        "l": config.grid_side,
        "scheme": scheme,
        "count": count,
        "puf_seed": config.seed,
        "challenge_seed": challenge_seed,
        "models": {},
    }
    for name in models:
        _, predictions, metadata = run_attack(
            dataset, name, alpha=alpha, generator_params=generator_params
        )
        summary = build_attack_report(
            dataset, predictions, metadata, os.path.join(cell_dir, name)
        )
        cell["models"][name] = {
            "mean_fhd_g1": summary["metrics"]["fhd_g1"]["boxplot"]["mean"],
            "mean_fhd_g2": summary["metrics"]["fhd_g2"]["boxplot"]["mean"],
        }
    write_json(os.path.join(cell_dir, "cell_summary.json"), cell)
    return cell


def run_matrix(
    out_dir,
    *,
    sizes=(5, 7, 9, 11, 13, 15),
    schemes=("A", "B", "C", "D"),
    models=("lr", "qlr"),
    count: int = 1000,
    puf_seed: int = 0,
    challenge_seed: int = 0,
    scale_factor: int = 1,
    noise_std: float = 0.0,
    alpha="auto",
    generator_params: dict | None = None,
    threads: int | None = None,
) -> dict:
    """Run every size x scheme cell and consolidate mean FHD per model.

    Seeds derive deterministically from the bases: one token per size
    (``puf_seed + size_index``) shared across schemes, one challenge
    seed per cell (``challenge_seed + cell_index``), so results do not
    depend on execution order.  Cell failures are recorded and the rest
    of the grid still runs.
    """
    for name in models:
        if name not in MODEL_CHOICES:
            raise ValueError(f"unknown model {name!r}, expected one of {MODEL_CHOICES}")
    os.makedirs(out_dir, exist_ok=True)
    jobs = []
    for i, l in enumerate(sizes):
        for j, scheme in enumerate(schemes):
            config = PufConfig(
                grid_side=int(l),
                seed=int(puf_seed) + i,
                scale_factor=scale_factor,
                noise_std=noise_std,
            )
            jobs.append(
                (
                    f"l{l}_{scheme}",
                    os.path.join(out_dir, "cells", f"l{l}_{scheme}"),
                    config,
                    scheme,
                    int(challenge_seed) + i * len(schemes) + j,
                )
            )

    def execute(job):
        name, cell_dir, config, scheme, ch_seed = job
        try:
            return name, _run_cell(
                cell_dir, config, scheme, count, ch_seed, models, alpha, generator_params
            )
        except Exception as exc:  # record and keep the grid running
            return name, {"error": f"{type(exc).__name__}: {exc}", "trace": traceback.format_exc()}

    with ThreadPoolExecutor(max_workers=resolve_threads(threads)) as pool:
        results = dict(pool.map(execute, jobs))

    consolidated = {
        "sizes": [int(s) for s in sizes],
        "schemes": list(schemes),
        "models": list(models),
        "count": int(count),
        "cells": results,
    }
    write_json(os.path.join(out_dir, "matrix_summary.json"), consolidated)
    rows = []
    for name, _, config, scheme, _ in jobs:
        cell = results[name]
        if "error" in cell:
            continue
        for model_name in models:
            entry = cell["models"][model_name]
            rows.append(
                [config.grid_side, scheme, model_name, entry["mean_fhd_g1"], entry["mean_fhd_g2"]]
            )
    write_csv(
        os.path.join(out_dir, "matrix_table.csv"),
        ["l", "scheme", "model", "mean_fhd_g1", "mean_fhd_g2"],
        rows,
    )
    return consolidated


# -- dataset-size scaling --------------------------------------------


def scale_experiment(
    dataset_small: Dataset,
    dataset_large: Dataset,
    models,
    *,
    alpha="auto",
    generator_params: dict | None = None,
    out_dir=None,
) -> dict:
    """Train each model on both datasets and report the FHD improvement.

    An improvement of 100% means the larger training set drove the mean
    test FHD to 0; identical datasets give 0% for every model.  Both
    datasets must come from the same token and scheme.
    """
    cfg_small, cfg_large = dataset_small.manifest.get("puf"), dataset_large.manifest.get("puf")
    if cfg_small != cfg_large:
        raise ValueError("datasets come from different tokens (PUF configs differ)")
    if dataset_small.scheme != dataset_large.scheme:
        raise ValueError("datasets use different challenge schemes")
    table = {}
    for name in models:
        fhds = {}
        for label, ds in (("small", dataset_small), ("large", dataset_large)):
            _, predictions, _ = run_attack(
                ds, name, alpha=alpha, generator_params=generator_params
            )
            fhds[label] = mean_test_fhd(ds, predictions)
        small, large = fhds["small"], fhds["large"]
        if small > 0:
            improvement = 100.0 * (small - large) / small
        else:
            improvement = 0.0 if large == 0 else None
        table[name] = {
            "fhd_small": small,
            "fhd_large": large,
            "train_small": dataset_small.train_count,
            "train_large": dataset_large.train_count,
            "improvement_percent": improvement,
        }
    result = {
        "scheme": dataset_small.scheme,
        "l": int(dataset_small.manifest["l"]),
        "models": table,
    }
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_json(os.path.join(out_dir, "scale_summary.json"), result)
        write_csv(
            os.path.join(out_dir, "scale_table.csv"),
            ["model", "fhd_small", "fhd_large", "improvement_percent"],
            [
                [name, row["fhd_small"], row["fhd_large"], row["improvement_percent"]]
                for name, row in table.items()
            ],
        )
    return result
