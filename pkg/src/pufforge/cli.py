"""Command line interface.

Subcommands cover the full pipeline: simulate a token (``gen-puf``),
produce challenge/response datasets (``gen-dataset``), evaluate their
statistics (``eval-dataset``), run modeling attacks (``attack``), build
reports (``report``), bring in external CRP data (``import``), and
derive a like/unlike decision threshold (``threshold``).  All artifacts
use the formats documented in ``docs/formats.md``.  Exit status is 0 on
success and 2 on any validation or usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import formats
from .dataset import generate_dataset, import_external, load_dataset, save_dataset
from .experiment import MODEL_CHOICES, like_pair_fhds, run_attack
from .gabor import PRESETS, gabor_binarize, make_kernel
from .generator import save_generator
from .linear import load_model, save_model
from .metrics import crossover_threshold
from .reports import build_attack_report, build_eval_report, write_csv, write_json
from .simulator import PufConfig, load_puf_config, save_puf

_METADATA_NAME = "attack.json"
_PREDICTIONS_NAME = "predictions.img"


def _add_puf_flags(sub):
    sub.add_argument("--l", type=int, help="challenge grid side (odd, >= 3)")
    sub.add_argument("--puf-seed", type=int, default=0, help="token seed (default 0)")
    sub.add_argument("--image-side", type=int, default=512, help="simulated image side")
    sub.add_argument("--crop", type=int, default=128, help="stored crop side")
    sub.add_argument("--smoothing", type=float, default=2.0, help="speckle smoothing sigma")
    sub.add_argument("--scale-factor", type=int, default=1, choices=(1, 2))
    sub.add_argument("--noise-std", type=float, default=0.0, help="multiplicative noise sigma")


def _config_from_args(args) -> PufConfig:
    if args.l is None:
        raise ValueError("--l is required (or pass --puf with a saved token)")
    return PufConfig(
        grid_side=args.l,
        image_side=args.image_side,
        crop_side=args.crop,
        speckle_smoothing=args.smoothing,
        scale_factor=args.scale_factor,
        seed=args.puf_seed,
        noise_std=args.noise_std,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pufforge",
        description="optical PUF simulation, readout post-processing, and modeling attacks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-puf", help="simulate a token and save its configuration")
    _add_puf_flags(p)
    p.add_argument("--out", required=True, help="token header path (JSON)")

    p = sub.add_parser("gen-dataset", help="generate a challenge/response dataset")
    _add_puf_flags(p)
    p.add_argument("--puf", help="token header from gen-puf (overrides token flags)")
    p.add_argument("--scheme", default="A", choices=("A", "B", "C", "D"))
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0, help="challenge seed")
    p.add_argument("--train-count", type=int, default=None)
    p.add_argument("--noise", action="store_true", help="apply readout noise to responses")
    p.add_argument("--noise-seed", type=int, default=1)
    p.add_argument("--out", required=True, help="dataset directory")

    p = sub.add_parser("eval-dataset", help="pairwise FHD and entropy report")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", default=None, help="report directory (default: <dataset>/eval)")
    p.add_argument("--sample-size", type=int, default=300)
    p.add_argument("--eval-seed", type=int, default=0)
    p.add_argument("--like-pairs", type=int, default=0, help="also sample same-challenge noisy pairs")
    p.add_argument("--save-bits", action="store_true", help="write packed bitstring blocks")

    p = sub.add_parser("attack", help="train one model and predict the test split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True, choices=MODEL_CHOICES)
    p.add_argument("--alpha", default="auto", help="ridge penalty or 'auto' (default)")
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--learning-rate", type=float, default=0.01)
    p.add_argument("--gen-seed", type=int, default=0, help="generator init/shuffle seed")
    p.add_argument("--hidden", default="1280,4096", help="generator hidden widths")
    p.add_argument("--output-side", type=int, default=64, help="generator output side")
    p.add_argument("--out", required=True, help="attack artifact directory")

    p = sub.add_parser("report", help="per-CRP metrics, summary, boxplots for an attack")
    p.add_argument("--dataset", required=True)
    p.add_argument("--attack", required=True, help="attack artifact directory")
    p.add_argument("--out", default=None, help="report directory (default: attack dir)")
    p.add_argument("--threshold", type=float, default=None, help="like/unlike FHD threshold")

    p = sub.add_parser("import", help="normalize an external CRP directory into a dataset")
    p.add_argument("--dir", required=True, help="external layout directory")
    p.add_argument("--train-count", type=int, default=None, help="override split (e.g. 1800)")
    p.add_argument("--out", required=True, help="dataset directory")

    p = sub.add_parser("threshold", help="crossover threshold from like/unlike FHD samples")
    p.add_argument("--like", required=True, help="CSV of same-challenge FHD samples")
    p.add_argument("--unlike", required=True, help="CSV of different-challenge FHD samples")
    p.add_argument("--kernel", default=None, help="filter rows by kernel column value")
    p.add_argument("--out", required=True, help="verdict JSON path")
    return parser


def _read_fhd_csv(path: str, kernel: str | None) -> np.ndarray:
    """Values from a CSV whose last column is the FHD sample.

    Non-numeric rows (headers) are skipped.  With ``kernel`` given, only
    rows whose first column equals it are kept.
    """
    values = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            try:
                value = float(row[-1])
            except ValueError:
                continue  # header row
            if kernel is None or len(row) < 2 or row[0] == kernel:
                values.append(value)
    if not values:
        raise ValueError(f"no FHD samples found in {path}")
    return np.asarray(values, dtype=np.float64)


def _cmd_gen_puf(args) -> int:
    config = _config_from_args(args)
    save_puf(config, args.out)
    print(f"token configuration written to {args.out} (n={config.n})")
    return 0


def _cmd_gen_dataset(args) -> int:
    if args.puf is not None:
        config = load_puf_config(args.puf)
    else:
        config = _config_from_args(args)
    ds = generate_dataset(
        config,
        args.scheme,
        args.count,
        args.seed,
        train_count=args.train_count,
        add_noise=args.noise,
        noise_seed=args.noise_seed,
    )
    save_dataset(ds, args.out)
    print(
        f"dataset written to {args.out}: l={config.grid_side} scheme={args.scheme} "
        f"count={args.count} split={ds.train_count}/{ds.test_count}"
    )
    return 0


def _cmd_eval_dataset(args) -> int:
    ds = load_dataset(args.dataset)
    out_dir = args.out or os.path.join(args.dataset, "eval")
    summary = build_eval_report(ds, out_dir, sample_size=args.sample_size, seed=args.eval_seed)
    if args.save_bits:
        for preset in sorted(PRESETS):
            bits = gabor_binarize(ds.responses, make_kernel(preset))
            formats.write_bit_block(
                os.path.join(out_dir, f"bits_{preset}.bits"), bits, ds.crop_side, ds.crop_side
            )
    if args.like_pairs > 0:
        like = like_pair_fhds(ds, args.like_pairs, seed=args.eval_seed)
        write_csv(
            os.path.join(out_dir, "like_fhds.csv"),
            ["kernel", "fhd"],
            [["G1", float(v)] for v in like],
        )
    for preset, entry in sorted(summary["pairwise_fhd"].items()):
        mean = entry["boxplot"]["mean"]
        print(f"{preset}: mean pairwise FHD {mean:.4f} over {entry['pairs']} pairs")
    print(f"evaluation written to {out_dir}")
    return 0


def _parse_alpha(text):
    if text == "auto":
        return "auto"
    try:
        value = float(text)
    except ValueError:
        raise ValueError(f"--alpha must be 'auto' or a number, got {text!r}") from None
    return value


def _cmd_attack(args) -> int:
    ds = load_dataset(args.dataset)
    generator_params = {
        "hidden_widths": tuple(int(w) for w in args.hidden.split(",") if w),
        "output_side": args.output_side,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "learning_rate": args.learning_rate,
        "seed": args.gen_seed,
    }
    model, predictions, metadata = run_attack(
        ds, args.model, alpha=_parse_alpha(args.alpha), generator_params=generator_params
    )
    os.makedirs(args.out, exist_ok=True)
    if args.model == "generator":
        save_generator(model, os.path.join(args.out, "model.json"), os.path.join(args.out, "model.f64"))
        write_csv(
            os.path.join(args.out, "loss_curve.csv"),
            ["epoch", "loss"],
            [[i, float(v)] for i, v in enumerate(model.loss_curve_)],
        )
    else:
        save_model(model, os.path.join(args.out, "model.json"), os.path.join(args.out, "model.f64"))
    formats.write_image_block(os.path.join(args.out, _PREDICTIONS_NAME), predictions)
    metadata["dataset"] = os.path.abspath(args.dataset)
    write_json(os.path.join(args.out, _METADATA_NAME), metadata)
    print(f"{args.model} attack artifacts written to {args.out}")
    return 0


def _cmd_report(args) -> int:
    ds = load_dataset(args.dataset)
    meta_path = os.path.join(args.attack, _METADATA_NAME)
    with open(meta_path, "r", encoding="utf-8") as fh:
        metadata = json.load(fh)
    predictions = formats.read_image_block(os.path.join(args.attack, _PREDICTIONS_NAME))
    out_dir = args.out or args.attack
    summary = build_attack_report(
        ds, predictions.astype(np.float64), metadata, out_dir, threshold=args.threshold
    )
    for name in ("fhd_g1", "fhd_g2"):
        print(f"{name}: mean {summary['metrics'][name]['boxplot']['mean']:.4f}")
    if summary["threshold"] is not None:
        verdict = summary["threshold"]
        print(
            f"threshold {verdict['value']}: {verdict['below']}/{verdict['total']} "
            f"test CRPs below (all_below={verdict['all_below']})"
        )
    print(f"report written to {out_dir}")
    return 0


def _cmd_import(args) -> int:
    ds = import_external(args.dir, train_count=args.train_count)
    save_dataset(ds, args.out)
    print(
        f"imported {ds.count} CRPs from {args.dir} to {args.out} "
        f"(split {ds.train_count}/{ds.test_count})"
    )
    return 0


def _cmd_threshold(args) -> int:
    like = _read_fhd_csv(args.like, args.kernel)
    unlike = _read_fhd_csv(args.unlike, args.kernel)
    t = crossover_threshold(like, unlike)
    verdict = {
        "threshold": float(t),
        "like": {
            "count": int(like.size),
            "mean": float(like.mean()),
            "misclassified": int((like > t).sum()),
        },
        "unlike": {
            "count": int(unlike.size),
            "mean": float(unlike.mean()),
            "misclassified": int((unlike <= t).sum()),
        },
    }
    write_json(args.out, verdict)
    print(f"crossover threshold {t!r} written to {args.out}")
    return 0


_COMMANDS = {
    "gen-puf": _cmd_gen_puf,
    "gen-dataset": _cmd_gen_dataset,
    "eval-dataset": _cmd_eval_dataset,
    "attack": _cmd_attack,
    "report": _cmd_report,
    "import": _cmd_import,
    "threshold": _cmd_threshold,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError, KeyError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
