"""Synthetic texture corpus for end-to-end validation.

Eight texture families rendered as wide source images, one family per
image: four oriented gratings (0, 45, 90, 135 degrees), blob fields at two
scales, and granular noise at two scales. All families share the same mean
intensity, with per-image brightness and tint jitter uncorrelated with the
class, so the class signal lives in texture rather than color statistics.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .patchex import Eye, PatchRecord, SourceImage
from .taxonomy import TerrainClass, parse

CLASS_NAMES = {
    1: "grating 0 degrees",
    2: "grating 45 degrees",
    3: "grating 90 degrees",
    4: "grating 135 degrees",
    5: "blob field, small blobs",
    6: "blob field, large blobs",
    7: "granular noise, fine",
    8: "granular noise, coarse",
}

# display codes for report tables; class identity is the class id
_DISPLAY_CODES = (
    "A-G1-T2-L3-N1-F1", "A-G2-T1-L3-N1-F1", "A-G2-T1-L3-N1-F3u", "A-G2-T1-L2-N1-F1",
    "B1-G2-T1", "C1", "C2", "D1",
)


def corpus_classes() -> dict[int, TerrainClass]:
    return {
        cid: TerrainClass(class_id=cid, code=parse(_DISPLAY_CODES[cid - 1]), description=name)
        for cid, name in CLASS_NAMES.items()
    }


def _grating(rng, h, w, orientation_deg):
    theta = np.deg2rad(orientation_deg + rng.uniform(-8, 8))
    freq = rng.uniform(3.0, 7.0) / 64.0
    phase = rng.uniform(0, 2 * np.pi)
    ys, xs = np.mgrid[0:h, 0:w]
    wave = np.sin(2 * np.pi * freq * (xs * np.cos(theta) + ys * np.sin(theta)) + phase)
    contrast = rng.uniform(0.55, 0.9)
    return 0.5 + 0.5 * contrast * wave


def _blob_field(rng, h, w, radius):
    r = radius * rng.uniform(0.85, 1.15)
    count = int(1.1 * h * w / (np.pi * r * r))
    field = np.zeros((h, w))
    ys, xs = np.mgrid[0:h, 0:w]
    for _ in range(count):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        field += np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (2 * r * r))
    field -= field.min()
    peak = field.max()
    if peak > 0:
        field /= peak
    return 0.15 + 0.7 * field


def _granular(rng, h, w, grain):
    noise = rng.normal(size=(h + 2 * grain, w + 2 * grain))
    kernel = np.ones(grain) / grain
    for axis in (0, 1):
        noise = np.apply_along_axis(lambda m: np.convolve(m, kernel, mode="same"), axis, noise)
    noise = noise[grain : grain + h, grain : grain + w]
    noise = (noise - noise.mean()) / (noise.std() + 1e-9)
    return np.clip(0.5 + 0.22 * noise, 0.0, 1.0)


def _render(rng, class_id, h, w):
    if class_id == 1:
        return _grating(rng, h, w, 0)
    if class_id == 2:
        return _grating(rng, h, w, 45)
    if class_id == 3:
        return _grating(rng, h, w, 90)
    if class_id == 4:
        return _grating(rng, h, w, 135)
    if class_id == 5:
        return _blob_field(rng, h, w, radius=3.0)
    if class_id == 6:
        return _blob_field(rng, h, w, radius=9.0)
    if class_id == 7:
        return _granular(rng, h, w, grain=2)
    if class_id == 8:
        return _granular(rng, h, w, grain=7)
    raise ValueError(f"unknown texture class {class_id}")


def make_corpus(
    seed: int, images_per_class: int = 40, width: int = 320, height: int = 128
) -> tuple[list[SourceImage], dict[str, int]]:
    """Render source images; returns (images, image_id -> class_id)."""
    rng = np.random.default_rng(seed)
    images: list[SourceImage] = []
    image_class: dict[str, int] = {}
    site = 0
    for class_id in sorted(CLASS_NAMES):
        for i in range(images_per_class):
            field = _render(rng, class_id, height, width)
            brightness = rng.uniform(-0.06, 0.06)
            pixels = np.empty((height, width, 3), dtype=np.uint8)
            for c in range(3):
                tint = rng.uniform(-0.05, 0.05)
                channel = np.clip(field + brightness + tint, 0.0, 1.0)
                pixels[:, :, c] = np.round(channel * 255).astype(np.uint8)
            image_id = f"tex{class_id}_{i:03d}"
            images.append(
                SourceImage(
                    image_id=image_id, pixels=pixels, sol=i, site=site, drive=0,
                    eye=Eye.RIGHT, target_range_m=5.0,
                )
            )
            image_class[image_id] = class_id
            site += 1
    return images, image_class


def patch_labels(
    records: Sequence[PatchRecord], image_class: Mapping[str, int]
) -> dict[str, TerrainClass]:
    """Ground-truth generator labels propagated from source image to patch."""
    classes = corpus_classes()
    return {r.patch_id: classes[image_class[r.image_id]] for r in records}
