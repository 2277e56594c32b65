"""Report artifacts: per-CRP CSV rows, JSON summaries, SVG boxplots.

Every writer is deterministic: identical inputs produce byte-identical
files (floats go through ``repr``, JSON keys are sorted, SVG geometry is
formatted with fixed precision).
"""

from __future__ import annotations

import csv
import json
import math
import os

import numpy as np

from .gabor import PRESETS, gabor_binarize, make_kernel
from .metrics import (
    BoxplotStats,
    boxplot_stats,
    dataset_fhd,
    fhd,
    pearson,
    shannon_entropy,
    ssim,
)

ATTACK_ROWS_NAME = "attack_rows.csv"
ATTACK_SUMMARY_NAME = "attack_summary.json"
EVAL_PAIRS_NAME = "eval_pairs.csv"
EVAL_ENTROPY_NAME = "eval_entropy.csv"
EVAL_SUMMARY_NAME = "eval_summary.json"


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])


def write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- SVG boxplots ----------------------------------------------------


def _svg_y(value: float, lo: float, hi: float, top: float, height: float) -> float:
    return top + (hi - value) / (hi - lo) * height


def boxplot_svg(groups: list[tuple[str, BoxplotStats]], *, title: str = "", ylabel: str = "") -> str:
    """Minimal standalone SVG with one box-and-whiskers per group."""
    if not groups:
        raise ValueError("at least one group required")
    lows, highs = [], []
    for _, st in groups:
        lows.append(min([st.whisker_low, *st.outliers]))
        highs.append(max([st.whisker_high, *st.outliers]))
    lo, hi = min(lows), max(highs)
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    top, plot_h, slot_w, left = 40.0, 260.0, 110.0, 70.0
    width = left + slot_w * len(groups) + 20.0
    height = top + plot_h + 50.0

    def y(v: float) -> str:
        return f"{_svg_y(v, lo, hi, top, plot_h):.2f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}" font-family="monospace" font-size="12">',
        f'<rect x="0" y="0" width="{width:.0f}" height="{height:.0f}" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="{width / 2:.1f}" y="20" text-anchor="middle">{title}</text>')
    if ylabel:
        parts.append(
            f'<text x="14" y="{top + plot_h / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 14 {top + plot_h / 2:.1f})">{ylabel}</text>'
        )
    for k in range(5):
        v = lo + (hi - lo) * k / 4.0
        parts.append(
            f'<line x1="{left - 5:.1f}" y1="{y(v)}" x2="{width - 20:.1f}" y2="{y(v)}" '
            'stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{left - 9:.1f}" y="{float(y(v)) + 4:.1f}" text-anchor="end">{v:.4g}</text>'
        )
    for i, (label, st) in enumerate(groups):
        cx = left + slot_w * (i + 0.5)
        half = 28.0
        parts.append(
            f'<line x1="{cx:.1f}" y1="{y(st.whisker_low)}" x2="{cx:.1f}" y2="{y(st.q1)}" '
            'stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<line x1="{cx:.1f}" y1="{y(st.q3)}" x2="{cx:.1f}" y2="{y(st.whisker_high)}" '
            'stroke="black" stroke-width="1"/>'
        )
        for w in (st.whisker_low, st.whisker_high):
            parts.append(
                f'<line x1="{cx - half / 2:.1f}" y1="{y(w)}" x2="{cx + half / 2:.1f}" y2="{y(w)}" '
                'stroke="black" stroke-width="1"/>'
            )
        parts.append(
            f'<rect x="{cx - half:.1f}" y="{y(st.q3)}" width="{2 * half:.1f}" '
            f'height="{_svg_y(st.q1, lo, hi, top, plot_h) - _svg_y(st.q3, lo, hi, top, plot_h):.2f}" '
            'fill="#c8d8f0" stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<line x1="{cx - half:.1f}" y1="{y(st.median)}" x2="{cx + half:.1f}" y2="{y(st.median)}" '
            'stroke="black" stroke-width="2"/>'
        )
        for v in st.outliers:
            parts.append(f'<circle cx="{cx:.1f}" cy="{y(v)}" r="2.5" fill="none" stroke="black"/>')
        parts.append(
            f'<text x="{cx:.1f}" y="{top + plot_h + 20:.1f}" text-anchor="middle">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# -- attack reports --------------------------------------------------


def _bits_for(images: np.ndarray, preset: str) -> np.ndarray:
    return gabor_binarize(images, make_kernel(preset))


def attack_rows(dataset, predictions: np.ndarray) -> list[list]:
    """Per-test-CRP metric rows: index, FHD per kernel, PC, SSIM.

    ``predictions`` must already be at the dataset crop resolution.
    Pearson is undefined for constant images and recorded as nan then.
    """
    truth = np.asarray(dataset.test_responses, dtype=np.float64)
    pred = np.asarray(predictions, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"predictions shape {pred.shape} != test split shape {truth.shape}")
    bits = {p: (_bits_for(truth, p), _bits_for(pred, p)) for p in sorted(PRESETS)}
    rows = []
    for i in range(truth.shape[0]):
        try:
            pc = pearson(truth[i], pred[i])
        except ValueError:
            pc = float("nan")
        rows.append(
            [
                i,
                fhd(bits["G1"][0][i], bits["G1"][1][i]),
                fhd(bits["G2"][0][i], bits["G2"][1][i]),
                pc,
                ssim(truth[i], pred[i]),
            ]
        )
    return rows


def _metric_summary(values: list[float]) -> dict | None:
    valid = [v for v in values if math.isfinite(v)]
    if not valid:
        return None
    stats = boxplot_stats(valid)
    return {"valid": len(valid), "boxplot": stats.to_dict()}


def summarize_attack(rows: list[list], metadata: dict, threshold: float | None = None) -> dict:
    """JSON-ready summary; statistics recomputable from the rows."""
    columns = {name: [row[k] for row in rows] for k, name in enumerate(
        ["index", "fhd_g1", "fhd_g2", "pcc", "ssim"]
    )}
    summary = {
        "metadata": metadata,
        "test_count": len(rows),
        "metrics": {name: _metric_summary(columns[name]) for name in ("fhd_g1", "fhd_g2", "pcc", "ssim")},
    }
    if threshold is not None:
        below = sum(1 for v in columns["fhd_g1"] if v < threshold)
        summary["threshold"] = {
            "value": float(threshold),
            "kernel": "G1",
            "below": below,
            "total": len(rows),
            "all_below": below == len(rows),
        }
    else:
        summary["threshold"] = None
    return summary


def build_attack_report(dataset, predictions, metadata: dict, out_dir, *, threshold: float | None = None) -> dict:
    """Write rows CSV, JSON summary, and SVG boxplots; return the summary."""
    os.makedirs(out_dir, exist_ok=True)
    rows = attack_rows(dataset, predictions)
    write_csv(
        os.path.join(out_dir, ATTACK_ROWS_NAME),
        ["index", "fhd_g1", "fhd_g2", "pcc", "ssim"],
        rows,
    )
    summary = summarize_attack(rows, metadata, threshold)
    write_json(os.path.join(out_dir, ATTACK_SUMMARY_NAME), summary)
    fhd_groups = [
        (label, boxplot_stats([r[k] for r in rows]))
        for label, k in (("G1", 1), ("G2", 2))
    ]
    with open(os.path.join(out_dir, "attack_fhd.svg"), "w", encoding="utf-8") as fh:
        fh.write(boxplot_svg(fhd_groups, title="test FHD per kernel", ylabel="FHD"))
    sim_groups = []
    for label, k in (("PC", 3), ("SSIM", 4)):
        valid = [r[k] for r in rows if math.isfinite(r[k])]
        if valid:
            sim_groups.append((label, boxplot_stats(valid)))
    if sim_groups:
        with open(os.path.join(out_dir, "attack_similarity.svg"), "w", encoding="utf-8") as fh:
            fh.write(boxplot_svg(sim_groups, title="image similarity", ylabel="value"))
    return summary


# -- dataset evaluation ----------------------------------------------


def build_eval_report(dataset, out_dir, *, sample_size: int = 300, seed: int = 0) -> dict:
    """Pairwise-FHD + entropy evaluation of a dataset, both kernels."""
    os.makedirs(out_dir, exist_ok=True)
    images = np.asarray(dataset.responses, dtype=np.float64)
    pair_rows, kernel_summaries = [], {}
    for preset in sorted(PRESETS):
        bits = _bits_for(images, preset)
        report = dataset_fhd(bits, sample_size=sample_size, seed=seed)
        pair_rows.extend([preset, float(v)] for v in report.values)
        kernel_summaries[preset] = {
            "pairs": int(report.values.size),
            "boxplot": report.summary.to_dict(),
        }
    write_csv(os.path.join(out_dir, EVAL_PAIRS_NAME), ["kernel", "fhd"], pair_rows)
    entropies = [shannon_entropy(img) for img in images]
    write_csv(
        os.path.join(out_dir, EVAL_ENTROPY_NAME),
        ["index", "entropy"],
        [[i, float(v)] for i, v in enumerate(entropies)],
    )
    summary = {
        "dataset": {
            "l": int(dataset.manifest["l"]),
            "scheme": dataset.scheme,
            "count": dataset.count,
            "crop_side": dataset.crop_side,
        },
        "sample_size": int(sample_size),
        "seed": int(seed),
        "pairwise_fhd": kernel_summaries,
        "entropy": {"bits": 8, "boxplot": boxplot_stats(entropies).to_dict()},
    }
    write_json(os.path.join(out_dir, EVAL_SUMMARY_NAME), summary)
    groups = [
        (preset, boxplot_stats([v for k, v in pair_rows if k == preset]))
        for preset in sorted(PRESETS)
    ]
    with open(os.path.join(out_dir, "eval_fhd.svg"), "w", encoding="utf-8") as fh:
        fh.write(boxplot_svg(groups, title="pairwise FHD per kernel", ylabel="FHD"))
    return summary
