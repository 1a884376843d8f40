"""Patch extraction and leakage-free dataset manifests.

Source images are filtered by target range, cut into overlapping square
patches with a sliding window, and split into train/test by horizontal
position: a patch fully left of the boundary column trains, fully right of
it tests, and anything straddling the boundary is discarded so no pixel
column feeds both splits.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

MANIFEST_HEADER = ("patch_id", "image_id", "sol", "site", "drive", "eye", "x", "y", "side", "split")
MANIFEST_NAME = "manifest.tsv"
PATCH_DIR = "patches"


class Eye(enum.Enum):
    LEFT = "Left"
    RIGHT = "Right"


class Split(enum.Enum):
    TRAIN = "Train"
    TEST = "Test"
    DISCARD = "Discard"


@dataclass
class SourceImage:
    image_id: str
    pixels: np.ndarray  # H x W x 3 uint8
    sol: int
    site: int
    drive: int
    eye: Eye
    target_range_m: float

    def __post_init__(self):
        if self.target_range_m < 0:
            raise ValueError(f"{self.image_id}: target range must be nonnegative")


@dataclass
class PatchRecord:
    patch_id: str
    image_id: str
    x: int
    y: int
    side: int
    split: Split | None
    sol: int
    site: int
    drive: int
    eye: Eye


@dataclass(frozen=True)
class ExtractConfig:
    side_left: int = 256
    side_right: int = 128
    stride_fraction: float = 0.5
    left_fraction: float = 0.6
    max_range_m: float = 15.0
    exclude_image_ids: frozenset = frozenset()

    def side_for(self, eye: Eye) -> int:
        return self.side_left if eye is Eye.LEFT else self.side_right


def filter_by_range(images: Sequence[SourceImage], max_range_m: float) -> list[SourceImage]:
    """Keep images whose target is at most `max_range_m` away (inclusive)."""
    if max_range_m <= 0:
        raise ValueError("max_range_m must be positive")
    return [img for img in images if img.target_range_m <= max_range_m]


def stride_pixels(side: int, stride_fraction: float) -> int:
    return int(math.floor(stride_fraction * side + 0.5))


def extract_patches(image: SourceImage, side: int, stride_fraction: float) -> list[PatchRecord]:
    """Sliding-window grid of fully-inside patches, row-major order.

    Offsets run over {0, s, 2s, ...} with s = round(stride_fraction * side);
    no padding is ever applied, so every patch lies inside the image.
    """
    h, w = image.pixels.shape[:2]
    if side > min(h, w):
        raise ValueError(f"{image.image_id}: patch larger than image ({side} > {min(h, w)})")
    if not 0 < stride_fraction <= 1:
        raise ValueError("stride_fraction must be in (0, 1]")
    s = stride_pixels(side, stride_fraction)
    records = []
    for y in range(0, h - side + 1, s):
        for x in range(0, w - side + 1, s):
            records.append(
                PatchRecord(
                    patch_id=f"{image.image_id}_{x}_{y}",
                    image_id=image.image_id,
                    x=x,
                    y=y,
                    side=side,
                    split=None,
                    sol=image.sol,
                    site=image.site,
                    drive=image.drive,
                    eye=image.eye,
                )
            )
    return records


def assign_split(patch: PatchRecord, image_width: int, left_fraction: float) -> Split:
    """Train left of the boundary column, test right of it, discard straddlers."""
    if not 0 < left_fraction < 1:
        raise ValueError("left_fraction must be in (0, 1)")
    boundary = math.floor(left_fraction * image_width)
    if patch.x + patch.side <= boundary:
        return Split.TRAIN
    if patch.x >= boundary:
        return Split.TEST
    return Split.DISCARD


def resize_patch(pixels: np.ndarray, target: int) -> np.ndarray:
    """Bilinear resize to target x target with corner-aligned sampling.

    8-bit input is scaled to [0, 1]; no flips, crops, or rotations.
    """
    if target < 8:
        raise ValueError("target size must be at least 8")
    img = np.asarray(pixels)
    if np.issubdtype(img.dtype, np.integer):
        img = img.astype(np.float64) / 255.0
    else:
        img = img.astype(np.float64)
    side = img.shape[0]

    def positions(n_out):
        if n_out == 1:
            return np.zeros(1)
        return np.linspace(0.0, side - 1, n_out)

    ys = positions(target)
    y0 = np.floor(ys).astype(int)
    y1 = np.minimum(y0 + 1, side - 1)
    fy = (ys - y0)[:, None, None]
    rows = img[y0] * (1 - fy) + img[y1] * fy
    xs = positions(target)
    x0 = np.floor(xs).astype(int)
    x1 = np.minimum(x0 + 1, side - 1)
    fx = (xs - x0)[None, :, None]
    out = rows[:, x0] * (1 - fx) + rows[:, x1] * fx
    return out.astype(np.float32)


def patch_pixels(image: SourceImage, patch: PatchRecord) -> np.ndarray:
    return image.pixels[patch.y : patch.y + patch.side, patch.x : patch.x + patch.side, :]


def build_manifest(images: Iterable[SourceImage], config: ExtractConfig, out_dir) -> Path:
    """Extract, split, and persist patches; returns the manifest path.

    Output is deterministic for identical inputs: stable patch ids, patch
    rows in image order then grid order, lossless PNG per patch.
    """
    out_dir = Path(out_dir)
    patch_dir = out_dir / PATCH_DIR
    patch_dir.mkdir(parents=True, exist_ok=True)
    kept: list[PatchRecord] = []
    for image in images:
        if image.image_id in config.exclude_image_ids:
            continue
        if image.target_range_m > config.max_range_m:
            continue
        try:
            side = config.side_for(image.eye)
            patches = extract_patches(image, side, config.stride_fraction)
            width = image.pixels.shape[1]
            for patch in patches:
                split = assign_split(patch, width, config.left_fraction)
                if split is Split.DISCARD:
                    continue
                record = replace(patch, split=split)
                Image.fromarray(patch_pixels(image, record)).save(patch_dir / f"{record.patch_id}.png")
                kept.append(record)
        except Exception as exc:  # noqa: BLE001 - one bad image must not kill the run
            log.warning("skipping image %s: %s", image.image_id, exc)
    if not kept:
        raise ValueError("no patches extracted from any input image")
    manifest_path = out_dir / MANIFEST_NAME
    write_manifest(kept, manifest_path)
    return manifest_path


def write_manifest(records: Sequence[PatchRecord], path) -> None:
    lines = ["\t".join(MANIFEST_HEADER)]
    for r in records:
        lines.append(
            "\t".join(
                [r.patch_id, r.image_id, str(r.sol), str(r.site), str(r.drive), r.eye.value,
                 str(r.x), str(r.y), str(r.side), r.split.value]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> list[PatchRecord]:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or tuple(lines[0].split("\t")) != MANIFEST_HEADER:
        raise ValueError(f"{path}: not a patch manifest")
    records = []
    seen = set()
    for ln, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != len(MANIFEST_HEADER):
            raise ValueError(f"{path}:{ln}: expected {len(MANIFEST_HEADER)} fields")
        pid, image_id, sol, site, drive, eye, x, y, side, split = fields
        if pid in seen:
            raise ValueError(f"{path}:{ln}: duplicate patch_id {pid}")
        seen.add(pid)
        records.append(
            PatchRecord(
                patch_id=pid, image_id=image_id, sol=int(sol), site=int(site), drive=int(drive),
                eye=Eye(eye), x=int(x), y=int(y), side=int(side), split=Split(split),
            )
        )
    return records


def load_patch_image(manifest_path, patch_id: str) -> np.ndarray:
    path = Path(manifest_path).parent / PATCH_DIR / f"{patch_id}.png"
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


META_HEADER = ("image_id", "sol", "site", "drive", "eye", "target_range_m")


def load_source_images(images_dir, meta_path) -> Iterable[SourceImage]:
    """Yield source images listed in a metadata TSV; skip unreadable files."""
    images_dir = Path(images_dir)
    lines = Path(meta_path).read_text(encoding="utf-8").splitlines()
    if not lines or tuple(lines[0].split("\t")) != META_HEADER:
        raise ValueError(f"{meta_path}: expected header {' '.join(META_HEADER)}")
    for ln, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        image_id, sol, site, drive, eye, rng = line.split("\t")
        path = images_dir / f"{image_id}.png"
        try:
            with Image.open(path) as im:
                pixels = np.asarray(im.convert("RGB"))
        except Exception as exc:  # noqa: BLE001
            log.warning("skipping unreadable image %s: %s", path, exc)
            continue
        yield SourceImage(
            image_id=image_id, pixels=pixels, sol=int(sol), site=int(site),
            drive=int(drive), eye=Eye(eye), target_range_m=float(rng),
        )
