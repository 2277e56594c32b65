"""Dataset directories: challenge/response collections on disk.

A dataset is a directory of three files:

``manifest.json``
    Provenance and layout: token configuration (when simulated), the
    challenge scheme and seed, record count, crop side, and the
    train/test split counts.  The first ``train_count`` records are the
    training split, the remainder the test split.
``challenges.bits``
    Headerless packed bit rows, one row per challenge, little-endian bit
    order, ``ceil(n / 8)`` bytes per row.
``responses.img``
    Image block (16-byte header + float32 rasters) of the cropped
    responses, one per challenge, in challenge order.

External data imports from a simpler layout (ASCII challenges plus one
grayscale image file per record) and normalizes into the same form; see
``docs/formats.md`` for the byte-level details of both.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import formats
from .challenges import generate_challenges
from .simulator import PufConfig, build_puf, respond

MANIFEST_NAME = "manifest.json"
CHALLENGES_NAME = "challenges.bits"
RESPONSES_NAME = "responses.img"

DATASET_FORMAT = "pufforge-dataset"
IMPORT_FORMAT = "pufforge-import"

#: image filename extensions accepted by the import layout
IMPORT_IMAGE_EXTENSIONS = (".png", ".pgm", ".f32")


def default_split(count: int) -> tuple[int, int]:
    """Default train/test split: one tenth held out (900/100 for 1000)."""
    test = max(1, count // 10) if count > 1 else 0
    return count - test, test


@dataclass
class Dataset:
    """In-memory dataset: manifest dict plus challenge and response arrays."""

    manifest: dict
    challenges: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        count = int(self.manifest["count"])
        if self.challenges.shape[0] != count or self.responses.shape[0] != count:
            raise ValueError("manifest count does not match array lengths")
        if self.train_count + self.test_count != count:
            raise ValueError("split sizes must cover the dataset exactly")
        if not 0 <= self.train_count <= count:
            raise ValueError("train_count out of range")

    @property
    def count(self) -> int:
        return int(self.manifest["count"])

    @property
    def n(self) -> int:
        return int(self.manifest["n"])

    @property
    def scheme(self) -> str:
        return str(self.manifest["scheme"])

    @property
    def crop_side(self) -> int:
        return int(self.manifest["crop_side"])

    @property
    def train_count(self) -> int:
        return int(self.manifest["train_count"])

    @property
    def test_count(self) -> int:
        return int(self.manifest["test_count"])

    @property
    def puf_config(self) -> PufConfig | None:
        cfg = self.manifest.get("puf")
        return None if cfg is None else PufConfig.from_dict(cfg)

    @property
    def train_challenges(self) -> np.ndarray:
        return self.challenges[: self.train_count]

    @property
    def test_challenges(self) -> np.ndarray:
        return self.challenges[self.train_count :]

    @property
    def train_responses(self) -> np.ndarray:
        return self.responses[: self.train_count]

    @property
    def test_responses(self) -> np.ndarray:
        return self.responses[self.train_count :]


def _resolve_split(count: int, train_count: int | None) -> tuple[int, int]:
    if train_count is None:
        return default_split(count)
    train = int(train_count)
    if not 0 <= train <= count:
        raise ValueError(f"train_count {train} out of range for {count} records")
    return train, count - train


def generate_dataset(
    config: PufConfig,
    scheme: str,
    count: int,
    challenge_seed: int,
    *,
    train_count: int | None = None,
    add_noise: bool = False,
    noise_seed: int = 1,
) -> Dataset:
    """Simulate a challenge/response dataset from a token configuration."""
    puf = build_puf(config)
    challenges = generate_challenges(config.grid_side, count, scheme, challenge_seed)
    responses = respond(
        puf,
        challenges,
        crop=config.crop_side,
        add_noise=add_noise,
        noise_seed=noise_seed,
    )
    train, test = _resolve_split(count, train_count)
    manifest = {
        "format": DATASET_FORMAT,
        "version": 1,
        "source": {"type": "simulated"},
        "puf": config.to_dict(),
        "l": config.grid_side,
        "n": config.n,
        "scheme": scheme,
        "count": int(count),
        "challenge_seed": int(challenge_seed),
        "crop_side": config.crop_side,
        "add_noise": bool(add_noise),
        "noise_seed": int(noise_seed),
        "train_count": train,
        "test_count": test,
        "kernel_presets": ["G1", "G2"],
    }
    return Dataset(manifest, challenges, responses)


def save_dataset(dataset: Dataset, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, MANIFEST_NAME), "w", encoding="utf-8") as fh:
        json.dump(dataset.manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(directory, CHALLENGES_NAME), "wb") as fh:
        fh.write(formats.pack_bit_rows(dataset.challenges))
    formats.write_image_block(
        os.path.join(directory, RESPONSES_NAME), dataset.responses
    )


def load_dataset(directory) -> Dataset:
    path = os.path.join(directory, MANIFEST_NAME)
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != DATASET_FORMAT:
        raise ValueError(f"{path} is not a dataset manifest")
    count, n = int(manifest["count"]), int(manifest["n"])
    with open(os.path.join(directory, CHALLENGES_NAME), "rb") as fh:
        raw = fh.read()
    challenges = formats.unpack_bit_rows(raw, n, count)
    responses = formats.read_image_block(os.path.join(directory, RESPONSES_NAME))
    side = int(manifest["crop_side"])
    if responses.shape != (count, side, side):
        raise ValueError(
            f"response block shape {responses.shape} does not match manifest"
        )
    return Dataset(manifest, challenges, responses.astype(np.float64))


# -- external import/export ------------------------------------------


class MalformedImportError(ValueError):
    """Import failure carrying the per-file problem list."""

    def __init__(self, problems):
        self.problems = list(problems)
        lines = "\n".join(f"  [{idx}] {name}: {why}" for idx, name, why in self.problems)
        super().__init__(f"{len(self.problems)} malformed import file(s):\n{lines}")


def _read_import_image(path: str, side: int) -> tuple[np.ndarray, int]:
    """One grayscale image as float64 plus its bit depth (32 = raw float)."""
    if path.endswith(".f32"):
        flat = np.fromfile(path, dtype="<f4")
        if flat.size != side * side:
            raise ValueError(f"expected {side * side} float32 values, found {flat.size}")
        return flat.astype(np.float64).reshape(side, side), 32
    from PIL import Image

    with Image.open(path) as img:
        if img.mode == "L":
            depth = 8
        elif img.mode in ("I;16", "I;16B", "I"):
            depth = 16
        else:
            raise ValueError(f"unsupported image mode {img.mode!r}")
        arr = np.asarray(img, dtype=np.float64)
    if arr.shape != (side, side):
        raise ValueError(f"image shape {arr.shape} does not match side {side}")
    # integer captures carry an arbitrary exposure scale: normalize away
    peak = arr.max()
    if peak > 0:
        arr = arr / peak
    return arr, depth


def import_external(directory, *, train_count: int | None = None) -> Dataset:
    """Read the documented external layout into a Dataset.

    The directory holds ``manifest.json`` (format ``pufforge-import``
    with ``l``, ``count``, ``image_side``), ``challenges.txt`` (one line
    of 0/1 characters per record), and ``images/<index>.<ext>`` with
    extensions ``.png``, ``.pgm`` (grayscale, normalized to unit max) or
    ``.f32`` (raw little-endian float32 raster, taken verbatim).  Every
    malformed or missing file is listed individually in the error.
    """
    path = os.path.join(directory, MANIFEST_NAME)
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != IMPORT_FORMAT:
        raise ValueError(f"{path} is not an import manifest (format {IMPORT_FORMAT})")
    l = int(manifest["l"])
    count = int(manifest["count"])
    side = int(manifest["image_side"])
    if count < 1:
        raise ValueError("import count must be >= 1")
    n = l * l

    problems: list[tuple[int, str, str]] = []
    with open(os.path.join(directory, "challenges.txt"), "r", encoding="utf-8") as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if len(lines) != count:
        raise ValueError(
            f"challenges.txt holds {len(lines)} records, manifest says {count}"
        )
    challenges = np.zeros((count, n), dtype=np.uint8)
    for i, line in enumerate(lines):
        if len(line) != n or set(line) - {"0", "1"}:
            problems.append((i, "challenges.txt", f"line is not {n} characters of 0/1"))
        else:
            challenges[i] = np.frombuffer(line.encode(), dtype=np.uint8) - ord("0")

    responses = np.zeros((count, side, side), dtype=np.float64)
    depths = set()
    image_dir = os.path.join(directory, "images")
    for i in range(count):
        found = None
        for ext in IMPORT_IMAGE_EXTENSIONS:
            candidate = os.path.join(image_dir, f"{i}{ext}")
            if os.path.exists(candidate):
                found = candidate
                break
        if found is None:
            problems.append((i, f"images/{i}.*", "no image file for this index"))
            continue
        try:
            responses[i], depth = _read_import_image(found, side)
            depths.add(depth)
        except (ValueError, OSError) as exc:
            problems.append((i, os.path.basename(found), str(exc)))
    if problems:
        raise MalformedImportError(problems)

    train, test = _resolve_split(
        count, manifest.get("train_count") if train_count is None else train_count
    )
    out_manifest = {
        "format": DATASET_FORMAT,
        "version": 1,
        "source": {
            "type": "imported",
            "bit_depths": sorted(depths),
            "origin": os.path.basename(os.path.normpath(str(directory))),
        },
        "puf": None,
        "l": l,
        "n": n,
        "scheme": str(manifest.get("scheme", "external")),
        "count": count,
        "challenge_seed": None,
        "crop_side": side,
        "train_count": train,
        "test_count": test,
        "kernel_presets": ["G1", "G2"],
    }
    return Dataset(out_manifest, challenges, responses)


def export_external(dataset: Dataset, directory, *, image_format: str = "f32") -> None:
    """Write a dataset in the import layout (``f32`` is lossless)."""
    if image_format not in ("f32", "png"):
        raise ValueError("image_format must be 'f32' or 'png'")
    image_dir = os.path.join(directory, "images")
    os.makedirs(image_dir, exist_ok=True)
    manifest = {
        "format": IMPORT_FORMAT,
        "l": int(np.sqrt(dataset.n)),
        "count": dataset.count,
        "image_side": dataset.crop_side,
        "scheme": dataset.scheme,
        "train_count": dataset.train_count,
    }
    with open(os.path.join(directory, MANIFEST_NAME), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(directory, "challenges.txt"), "w", encoding="utf-8") as fh:
        for row in dataset.challenges:
            fh.write("".join("1" if b else "0" for b in row))
            fh.write("\n")
    for i, image in enumerate(dataset.responses):
        if image_format == "f32":
            image.astype("<f4").tofile(os.path.join(image_dir, f"{i}.f32"))
        else:
            from PIL import Image

            peak = image.max()
            scaled = image / peak if peak > 0 else image
            eight = np.round(scaled * 255).astype(np.uint8)
            Image.fromarray(eight, mode="L").save(os.path.join(image_dir, f"{i}.png"))
