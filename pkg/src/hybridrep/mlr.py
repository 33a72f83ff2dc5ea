"""Mid-level local representation: dense multi-scale grids -> per-location LLC
codes -> spatial-pyramid max-pooling -> concatenation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coding import LlcParams, llc_approx
from .datamodel import FeatureTensor, ImageRecord
from .dictionary import PartDictionary

DEFAULT_SQUARES = (128, 92, 64)
DEFAULT_STRIDE = 32


@dataclass(frozen=True)
class SpmLayout:
    levels: tuple[tuple[int, int], ...] = ((1, 1), (2, 2), (3, 1))

    @property
    def cells(self) -> int:
        return sum(r * c for r, c in self.levels)


@dataclass
class MlrConfig:
    squares: tuple[int, ...] = DEFAULT_SQUARES
    stride: int = DEFAULT_STRIDE
    llc: LlcParams = field(default_factory=LlcParams)
    layout: SpmLayout = field(default_factory=SpmLayout)
    normalize: bool = True  # L2-normalize the block before assembly

    def __post_init__(self):
        if not self.squares:
            raise ValueError("at least one square size required")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")


def code_maps(tensor: FeatureTensor, dictionary: PartDictionary, llc: LlcParams) -> FeatureTensor:
    """LLC-code every spatial position, yielding K feature maps."""
    if tensor.d != dictionary.dim:
        raise ValueError(f"tensor dim {tensor.d} vs dictionary dim {dictionary.dim}")
    out = np.empty((dictionary.size, tensor.h, tensor.w), dtype=np.float32)
    for i in range(tensor.h):
        for j in range(tensor.w):
            out[:, i, j] = llc_approx(tensor.data[:, i, j], dictionary, llc)
    return FeatureTensor(out, scale_id=tensor.scale_id)


def _cell_range(idx: int, parts: int, extent: int) -> tuple[int, int]:
    lo = idx * extent // parts
    hi = (idx + 1) * extent // parts
    if hi <= lo:  # grid smaller than the pyramid level: clamp to a non-empty cell
        lo = min(lo, extent - 1)
        hi = lo + 1
    return lo, hi


def spm_pool(maps: FeatureTensor, layout: SpmLayout = SpmLayout()) -> np.ndarray:
    """Per-channel max within each pyramid cell; cells ordered level-major,
    row-major, channels contiguous within a cell.  Output length K * cells."""
    data = maps.data
    k, h, w = data.shape
    pooled = []
    for rows, cols in layout.levels:
        for r in range(rows):
            r0, r1 = _cell_range(r, rows, h)
            for c in range(cols):
                c0, c1 = _cell_range(c, cols, w)
                pooled.append(data[:, r0:r1, c0:c1].max(axis=(1, 2)))
    return np.concatenate(pooled).astype(np.float32)


def encode_mlr(
    image: ImageRecord,
    extractor,
    dictionary: PartDictionary,
    cfg: MlrConfig | None = None,
) -> np.ndarray:
    """Grid -> code -> pool per square size, concatenated in square order.

    Output dimension is |squares| * K * cells (24K with the defaults).
    """
    cfg = cfg or MlrConfig()
    parts = []
    for square in cfg.squares:
        tensor = extractor.extract_dense_grid(image, square, cfg.stride)
        parts.append(spm_pool(code_maps(tensor, dictionary, cfg.llc), cfg.layout))
    vec = np.concatenate(parts)
    if cfg.normalize:
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec = vec / norm
    return vec.astype(np.float32)


def mlr_dim(n_squares: int, dict_size: int, layout: SpmLayout = SpmLayout()) -> int:
    return n_squares * dict_size * layout.cells
