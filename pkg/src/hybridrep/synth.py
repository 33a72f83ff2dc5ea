"""Deterministic synthetic texture dataset used by tests and the toy pipeline.

Each class is defined by small local motifs placed on a shared nuisance
background (smooth gradient + noise + global brightness jitter), so global
mean-pooled features are deliberately weaker than local region features.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .datamodel import Box, DatasetManifest, ImageRecord, save_manifest

FRAME = 256
MOTIF_SIDE = 48
MOTIFS_PER_IMAGE = 4
CLASS_NAMES = ("plateau", "basin", "ridge")


def _background(rng: np.random.Generator) -> np.ndarray:
    base = rng.uniform(90, 150)
    gx, gy = rng.uniform(-40, 40, size=2)
    yy, xx = np.mgrid[0:FRAME, 0:FRAME] / FRAME
    img = base + gx * (xx - 0.5) + gy * (yy - 0.5)
    img += rng.normal(0, 8, size=(FRAME, FRAME))
    return img


def _paint_motif(img: np.ndarray, cls: int, x: int, y: int, rng: np.random.Generator):
    s = MOTIF_SIDE
    region = img[y : y + s, x : x + s]
    delta = rng.uniform(70, 100)
    if cls == 0:  # raised plateau
        region += delta
    elif cls == 1:  # sunken basin
        region -= delta
    else:  # half-raised / half-sunken ridge
        region[:, : s // 2] += delta
        region[:, s // 2 :] -= delta


def make_image(cls: int, rng: np.random.Generator):
    """Returns (pixels uint8 (256,256,3), motif boxes)."""
    img = _background(rng)
    boxes = []
    for _ in range(MOTIFS_PER_IMAGE):
        x = int(rng.integers(8, FRAME - MOTIF_SIDE - 8))
        y = int(rng.integers(8, FRAME - MOTIF_SIDE - 8))
        _paint_motif(img, cls, x, y, rng)
        boxes.append((x, y))
    img += rng.uniform(-30, 30)  # global brightness nuisance
    pixels = np.clip(img, 0, 255).astype(np.uint8)
    return np.repeat(pixels[:, :, None], 3, axis=2), boxes


def _proposals(motif_xy, rng: np.random.Generator) -> list[Box]:
    boxes = []
    for x, y in motif_xy:
        for _ in range(4):  # jittered boxes around each motif
            side = int(rng.integers(64, 128))
            cx = x + MOTIF_SIDE // 2 + int(rng.integers(-12, 13))
            cy = y + MOTIF_SIDE // 2 + int(rng.integers(-12, 13))
            x1 = int(np.clip(cx - side // 2, 0, FRAME - side))
            y1 = int(np.clip(cy - side // 2, 0, FRAME - side))
            boxes.append(Box(x1, y1, x1 + side, y1 + side))
    for _ in range(8):  # background distractors
        side = int(rng.integers(60, 140))
        x1 = int(rng.integers(0, FRAME - side))
        y1 = int(rng.integers(0, FRAME - side))
        boxes.append(Box(x1, y1, x1 + side, y1 + side))
    return boxes


def generate_dataset(
    out_dir,
    n_classes: int = 3,
    per_class: int = 40,
    seed: int = 0,
    domains: int = 1,
    train_fraction: float = 0.625,
) -> DatasetManifest:
    """Write images/ PNGs and manifest.json under out_dir; returns the manifest.

    With domains=2 the second domain gets a fixed brightness/contrast shift and
    records alternate between domains, giving a two-domain DA testbed.
    """
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    train_ids, test_ids = [], []
    n_train = int(round(per_class * train_fraction))
    for cls in range(n_classes):
        for i in range(per_class):
            pixels, motif_xy = make_image(cls, rng)
            domain = None
            if domains == 2:
                domain = "src" if i % 2 == 0 else "tgt"
                if domain == "tgt":
                    shifted = pixels.astype(np.float64) * 0.85 + 25.0
                    pixels = np.clip(shifted, 0, 255).astype(np.uint8)
            rid = f"c{cls}_{i:03d}"
            rel = f"images/{rid}.png"
            Image.fromarray(pixels).save(out_dir / rel)
            records.append(
                ImageRecord(
                    id=rid,
                    label=cls,
                    image_path=rel,
                    domain=domain,
                    proposals=_proposals(motif_xy, rng),
                )
            )
            (train_ids if i < n_train else test_ids).append(rid)
    class_names = [
        CLASS_NAMES[c] if c < len(CLASS_NAMES) else f"class{c}" for c in range(n_classes)
    ]
    manifest = DatasetManifest(
        classes=class_names,
        records=records,
        splits={"default": (train_ids, test_ids)},
    )
    save_manifest(manifest, out_dir / "manifest.json")
    return manifest
