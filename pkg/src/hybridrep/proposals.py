"""Stage-1 part discovery: proposal filtering, the joint spatial/feature similarity
graph, spectral clustering, prototype selection, context padding, and the
variance filter used in domain adaptation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import Box
from .dictionary import kmeans

MIN_AREA = 60 * 60
MAX_AREA = 160 * 160
MAX_ASPECT = 3.0
DEFAULT_SIGMA = 1.0
DEFAULT_CLUSTERS = 10
DEFAULT_TOP = 5
DEFAULT_PAD = 16
DEFAULT_VAR_THRESHOLD = 125.0
_DEGREE_EPS = 1e-12


class SpectralError(Exception):
    """Eigensolver failed to converge on the similarity graph."""


@dataclass
class SimilarityGraph:
    weights: np.ndarray  # (n, n) symmetric
    lambda_b: float
    lambda_f: float
    sigma: float

    @property
    def n(self) -> int:
        return self.weights.shape[0]


def filter_proposals(boxes: list[Box]) -> list[Box]:
    """Keep boxes with area in [60*60, 160*160] and aspect ratio below 3."""
    kept = []
    for b in boxes:
        aspect = max(b.width / b.height, b.height / b.width)
        if MIN_AREA <= b.area <= MAX_AREA and aspect < MAX_ASPECT:
            kept.append(b)
    return kept


def box_iou(b1: Box, b2: Box) -> float:
    ix = max(0, min(b1.x2, b2.x2) - max(b1.x1, b2.x1))
    iy = max(0, min(b1.y2, b2.y2) - max(b1.y1, b2.y1))
    inter = ix * iy
    union = b1.area + b2.area - inter
    return inter / union


def feature_affinity(f1: np.ndarray, f2: np.ndarray, sigma: float = DEFAULT_SIGMA) -> float:
    f1 = np.asarray(f1, dtype=np.float64)
    f2 = np.asarray(f2, dtype=np.float64)
    if f1.shape != f2.shape:
        raise ValueError(f"dimension mismatch {f1.shape} vs {f2.shape}")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return float(np.exp(-np.sum((f1 - f2) ** 2) / (2.0 * sigma**2)))


def build_graph(
    boxes: list[Box],
    feats,
    lambda_b: float,
    lambda_f: float,
    sigma: float = DEFAULT_SIGMA,
) -> SimilarityGraph:
    """W = lambda_b * W_iou + lambda_f * W_rbf, with lambda_b + lambda_f = 1."""
    if abs(lambda_b + lambda_f - 1.0) > 1e-9:
        raise ValueError("lambda_b + lambda_f must equal 1")
    n = len(boxes)
    if feats is None:
        if lambda_f != 0.0:
            raise ValueError("features required when lambda_f > 0")
        feats = np.zeros((n, 1))
    feats = np.asarray(feats, dtype=np.float64)
    if feats.shape[0] != n:
        raise ValueError(f"{n} boxes but {feats.shape[0]} feature rows")
    w_b = np.empty((n, n))
    for i in range(n):
        w_b[i, i] = 1.0
        for j in range(i + 1, n):
            w_b[i, j] = w_b[j, i] = box_iou(boxes[i], boxes[j])
    sq = np.sum(feats**2, axis=1)
    d2 = np.maximum(sq[:, None] - 2.0 * feats @ feats.T + sq[None, :], 0.0)
    w_f = np.exp(-d2 / (2.0 * sigma**2))
    w = lambda_b * w_b + lambda_f * w_f
    return SimilarityGraph((w + w.T) / 2.0, lambda_b, lambda_f, sigma)


def spectral_cluster(graph: SimilarityGraph, q: int, seed: int = 0) -> np.ndarray:
    """Normalized-symmetric-Laplacian embedding + seeded k-means (10 restarts)."""
    n = graph.n
    if not 1 <= q <= n:
        raise ValueError(f"q={q} out of range for {n} nodes")
    if q == n:
        return np.arange(n)
    w = graph.weights.copy()
    np.fill_diagonal(w, 0.0)
    deg = np.maximum(w.sum(axis=1), _DEGREE_EPS)
    dinv = 1.0 / np.sqrt(deg)
    lap = np.eye(n) - dinv[:, None] * w * dinv[None, :]
    try:
        _, vecs = np.linalg.eigh((lap + lap.T) / 2.0)
    except np.linalg.LinAlgError as exc:
        raise SpectralError(f"eigensolver failed on {n}-node graph: {exc}") from exc
    emb = vecs[:, :q]
    norms = np.linalg.norm(emb, axis=1)
    emb = emb / np.where(norms > 0, norms, 1.0)[:, None]
    _, labels = kmeans(emb, q, seed=seed, n_init=10)
    return labels


def select_prototypes(labels, boxes: list[Box], t: int, seed: int = 0) -> list[Box]:
    """One seeded uniform draw from each of the top-t clusters by member count."""
    labels = np.asarray(labels, dtype=int)
    sizes = {c: int(np.sum(labels == c)) for c in set(labels.tolist())}
    order = sorted(sizes, key=lambda c: (-sizes[c], c))
    rng = np.random.default_rng(seed)
    picks = []
    for c in order[: min(t, len(order))]:
        members = np.flatnonzero(labels == c)
        picks.append(boxes[int(rng.choice(members))])
    return picks


def context_pad(box: Box, pad: int = DEFAULT_PAD, bounds: tuple[int, int] = (256, 256)) -> Box:
    """Grow the box by `pad` on every side, clamped to (width, height) bounds."""
    width, height = bounds
    return Box(
        max(box.x1 - pad, 0),
        max(box.y1 - pad, 0),
        min(box.x2 + pad, width),
        min(box.y2 + pad, height),
    )


def grayscale(pixels: np.ndarray) -> np.ndarray:
    rgb = np.asarray(pixels, dtype=np.float64)
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def variance_filter(pixels: np.ndarray, box: Box, threshold: float = DEFAULT_VAR_THRESHOLD) -> bool:
    """Keep the prototype iff the population variance of its grayscale crop
    reaches the threshold; low-variance crops are background."""
    crop = pixels[box.y1 : box.y2, box.x1 : box.x2]
    if crop.size == 0:
        raise ValueError(f"box {box} outside image")
    return float(np.var(grayscale(crop))) >= threshold


def dedupe_boxes(boxes: list[Box]) -> list[Box]:
    """Drop exact duplicates, preserving first occurrence; identical rows make
    the spectral embedding degenerate."""
    seen = set()
    out = []
    for b in boxes:
        key = (b.x1, b.y1, b.x2, b.y2)
        if key not in seen:
            seen.add(key)
            out.append(b)
    return out
