"""Feature extraction contract: synthetic deterministic extractor and store-backed lookup.

The synthetic extractor stands in for a trained CNN so the whole pipeline runs
without any deep-learning dependency: each region is mean-pooled to an 8x8 RGB
patch and pushed through a seeded Gaussian random projection.  Region / FC
pathways clamp at zero (ReLU-like); the conv pathway does not.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from PIL import Image

from .datamodel import Box, FeatureTensor, ImageRecord, load_store_index, resolve_pixels

PATCH_SIDE = 8  # downsample target for the synthetic pathway
PATCH_DIM = PATCH_SIDE * PATCH_SIDE * 3
CENTRAL_CROP = 224
CONV_PATCH = 32
CONV_STRIDE = 16

_PATHWAYS = {"region": 0, "fcr1": 1, "fcr2": 2, "conv": 3}


@dataclass(frozen=True)
class ExtractorSpec:
    kind: str  # "synthetic" | "store"
    d: int
    seed: int = 0
    store_paths: tuple[str, ...] = ()

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("output dimensionality must be >= 1")
        if self.kind not in ("synthetic", "store"):
            raise ValueError(f"unknown extractor kind {self.kind!r}")


def grid_side(frame: int, square: int, stride: int) -> int:
    """Number of dense-grid positions per side; partial border windows are dropped."""
    if square > frame:
        raise ValueError(f"square {square} exceeds frame {frame}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    return (frame - square) // stride + 1


def mean_pool_patch(pixels: np.ndarray) -> np.ndarray:
    """Mean-pool an (h, w, 3) uint8 crop to a flat 8x8x3 float vector in [0, 1]."""
    patch = np.asarray(pixels, dtype=np.float64)
    for axis in (0, 1):
        if patch.shape[axis] < PATCH_SIDE:
            reps = -(-PATCH_SIDE // patch.shape[axis])
            patch = np.repeat(patch, reps, axis=axis)
    h, w = patch.shape[:2]
    if h % PATCH_SIDE == 0 and w % PATCH_SIDE == 0:
        pooled = patch.reshape(
            PATCH_SIDE, h // PATCH_SIDE, PATCH_SIDE, w // PATCH_SIDE, 3
        ).mean(axis=(1, 3))
    else:
        pooled = np.empty((PATCH_SIDE, PATCH_SIDE, 3))
        rows = np.array_split(np.arange(h), PATCH_SIDE)
        cols = np.array_split(np.arange(w), PATCH_SIDE)
        for i, ri in enumerate(rows):
            for j, cj in enumerate(cols):
                pooled[i, j] = patch[np.ix_(ri, cj)].mean(axis=(0, 1))
    return pooled.ravel() / 255.0


@lru_cache(maxsize=32)
def _projection(seed: int, d: int, pathway: str) -> np.ndarray:
    rng = np.random.default_rng([seed, _PATHWAYS[pathway], d])
    return rng.standard_normal((d, PATCH_DIM)) / np.sqrt(PATCH_DIM)


def _resize(pixels: np.ndarray, side: int) -> np.ndarray:
    if side == pixels.shape[0] == pixels.shape[1]:
        return pixels
    img = Image.fromarray(pixels).resize((side, side), Image.BILINEAR)
    return np.asarray(img, dtype=np.uint8)


class SyntheticExtractor:
    """Seeded random-projection extractor; pure function of (spec, pixels, geometry)."""

    def __init__(self, spec: ExtractorSpec):
        self.spec = spec

    def _project(self, crop: np.ndarray, pathway: str, relu: bool) -> np.ndarray:
        x = mean_pool_patch(crop)
        y = _projection(self.spec.seed, self.spec.d, pathway) @ x
        if relu:
            y = np.maximum(y, 0.0)
        return y.astype(np.float32)

    def extract_region(self, image: ImageRecord, box: Box) -> np.ndarray:
        pixels = resolve_pixels(image)
        if box.x2 > pixels.shape[1] or box.y2 > pixels.shape[0]:
            raise ValueError(f"box {box} outside image bounds")
        crop = pixels[box.y1 : box.y2, box.x1 : box.x2]
        return self._project(crop, "region", relu=True)

    def extract_dense_grid(self, image: ImageRecord, square: int, stride: int) -> FeatureTensor:
        pixels = resolve_pixels(image)
        frame = pixels.shape[0]
        side = grid_side(frame, square, stride)
        out = np.empty((self.spec.d, side, side), dtype=np.float32)
        for i in range(side):
            for j in range(side):
                box = Box(j * stride, i * stride, j * stride + square, i * stride + square)
                out[:, i, j] = self.extract_region(image, box)
        return FeatureTensor(out)

    def extract_conv(self, image: ImageRecord, scale: float, scale_index: int = 0) -> FeatureTensor:
        pixels = resolve_pixels(image)
        side = max(int(round(pixels.shape[0] * scale)), CONV_PATCH)
        scaled = _resize(pixels, side)
        n = grid_side(side, CONV_PATCH, CONV_STRIDE)
        # all 32x32 windows at once: (n, n, 3, 32, 32) -> pooled (n*n, 192)
        windows = np.lib.stride_tricks.sliding_window_view(
            scaled, (CONV_PATCH, CONV_PATCH), axis=(0, 1)
        )[::CONV_STRIDE, ::CONV_STRIDE]
        blk = CONV_PATCH // PATCH_SIDE
        pooled = (
            windows.astype(np.float64)
            .reshape(n, n, 3, PATCH_SIDE, blk, PATCH_SIDE, blk)
            .mean(axis=(4, 6))
            .transpose(0, 1, 3, 4, 2)  # (n, n, 8, 8, 3) matches mean_pool_patch layout
            .reshape(n * n, PATCH_DIM)
            / 255.0
        )
        proj = _projection(self.spec.seed, self.spec.d, "conv")
        out = (pooled @ proj.T).reshape(n, n, self.spec.d).transpose(2, 0, 1)
        return FeatureTensor(out.astype(np.float32), scale_id=scale_index)

    def extract_fcr(self, image: ImageRecord, crop: str = "whole", layer: int = 2) -> np.ndarray:
        if crop not in ("whole", "central"):
            raise ValueError(f"unknown crop {crop!r}")
        pixels = resolve_pixels(image)
        if crop == "central":
            off = (pixels.shape[0] - CENTRAL_CROP) // 2
            pixels = pixels[off : off + CENTRAL_CROP, off : off + CENTRAL_CROP]
        return self._project(pixels, f"fcr{layer}", relu=True)


class StoreExtractor:
    """Serves features dumped offline into HFRS stores, keyed by the shared scheme."""

    def __init__(self, spec: ExtractorSpec):
        if not spec.store_paths:
            raise ValueError("store-backed extractor needs store paths")
        self.spec = spec
        self.index = load_store_index(spec.store_paths)

    def _lookup(self, key: str):
        if key not in self.index:
            raise KeyError(f"feature store has no entry {key!r}")
        return self.index[key]

    def extract_region(self, image: ImageRecord, box: Box) -> np.ndarray:
        key = f"{image.id}#box:{box.x1},{box.y1},{box.x2},{box.y2}"
        return np.asarray(self._lookup(key), dtype=np.float32)

    def extract_dense_grid(self, image: ImageRecord, square: int, stride: int) -> FeatureTensor:
        side = grid_side(256, square, stride)
        out = np.empty((self.spec.d, side, side), dtype=np.float32)
        for i in range(side):
            for j in range(side):
                box = Box(j * stride, i * stride, j * stride + square, i * stride + square)
                out[:, i, j] = self.extract_region(image, box)
        return FeatureTensor(out)

    def extract_conv(self, image: ImageRecord, scale: float, scale_index: int = 0) -> FeatureTensor:
        value = self._lookup(f"{image.id}#conv:s{scale_index}")
        if not isinstance(value, FeatureTensor):
            raise ValueError(f"conv entry for {image.id!r} is not rank 3")
        return FeatureTensor(value.data, scale_id=scale_index)

    def extract_fcr(self, image: ImageRecord, crop: str = "whole", layer: int = 2) -> np.ndarray:
        return np.asarray(
            self._lookup(f"{image.id}#fcr{layer}:{crop[0]}"), dtype=np.float32
        )


def make_extractor(spec: ExtractorSpec):
    if spec.kind == "synthetic":
        return SyntheticExtractor(spec)
    return StoreExtractor(spec)
