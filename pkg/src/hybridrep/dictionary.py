"""Part-dictionary learning: seeded k-means and class-specific / class-mixture builds."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .datamodel import write_feature_store, read_feature_store

CLASS_SPECIFIC = "class_specific"
CLASS_MIXTURE = "class_mixture"


@dataclass
class PartDictionary:
    atoms: np.ndarray  # (K, d) float32
    mode: str
    per_class_k: int = 0
    class_ranges: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.atoms = np.ascontiguousarray(self.atoms, dtype=np.float32)
        if self.atoms.ndim != 2 or self.atoms.shape[0] < 1:
            raise ValueError("atoms must be a non-empty K x d matrix")
        if not np.all(np.isfinite(self.atoms)):
            raise ValueError("atoms contain non-finite values")
        if self.mode not in (CLASS_SPECIFIC, CLASS_MIXTURE):
            raise ValueError(f"unknown dictionary mode {self.mode!r}")
        if self.mode == CLASS_SPECIFIC:
            flat = [i for lo, hi in self.class_ranges for i in range(lo, hi)]
            if flat != list(range(self.atoms.shape[0])):
                raise ValueError("class_ranges must partition [0, K) in order")

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    closest = np.sum((points - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            centers[j] = points[rng.integers(n)]
            continue
        idx = int(rng.choice(n, p=closest / total))
        centers[j] = points[idx]
        closest = np.minimum(closest, np.sum((points - centers[j]) ** 2, axis=1))
    return centers


def _assign(points: np.ndarray, centers: np.ndarray):
    # squared distances; argmin breaks ties toward the lower center index
    d2 = (
        np.sum(points**2, axis=1)[:, None]
        - 2.0 * points @ centers.T
        + np.sum(centers**2, axis=1)[None, :]
    )
    labels = np.argmin(d2, axis=1)
    return labels, np.maximum(d2[np.arange(len(points)), labels], 0.0)


def _lloyd(points, centers, max_iter, tol, scale):
    inertia = np.inf
    labels = np.zeros(len(points), dtype=int)
    for _ in range(max_iter):
        labels, costs = _assign(points, centers)
        # refill empty clusters from the point currently worst-served
        for j in range(len(centers)):
            if not np.any(labels == j):
                far = int(np.argmax(costs))
                centers[j] = points[far]
                labels[far] = j
                costs[far] = 0.0
        new_inertia = float(costs.sum())
        assert new_inertia <= inertia + 1e-8 * (1.0 + inertia), "inertia increased"
        new_centers = np.stack(
            [points[labels == j].mean(axis=0) for j in range(len(centers))]
        )
        shift = np.max(np.linalg.norm(new_centers - centers, axis=1))
        centers = new_centers
        inertia = new_inertia
        if shift < tol * scale:
            break
    labels, costs = _assign(points, centers)
    return centers, labels, float(costs.sum())


def kmeans(
    points,
    k: int,
    seed: int = 0,
    max_iter: int = 100,
    tol: float = 1e-4,
    n_init: int = 1,
    init_centers: np.ndarray | None = None,
):
    """Seeded k-means++ / Lloyd clustering.

    Returns (centers (k, d), labels (n,)).  Empty clusters are re-seeded with the
    point farthest from its center; assignment ties go to the lower center index.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValueError("points must be a non-empty n x d matrix")
    if not 1 <= k <= points.shape[0]:
        raise ValueError(f"k={k} out of range for {points.shape[0]} points")
    scale = 1.0 + float(np.mean(np.linalg.norm(points, axis=1)))
    rng = np.random.default_rng(seed)
    if init_centers is not None:
        return _lloyd(points, np.asarray(init_centers, dtype=np.float64).copy(),
                      max_iter, tol, scale)[:2]
    best = None
    for _ in range(max(n_init, 1)):
        centers0 = _kmeans_pp_init(points, k, rng)
        centers, labels, inertia = _lloyd(points, centers0, max_iter, tol, scale)
        if best is None or inertia < best[2]:
            best = (centers, labels, inertia)
    return best[0], best[1]


def build_dictionary(
    prototypes,
    labels,
    mode: str = CLASS_SPECIFIC,
    per_class_k: int = 10,
    seed: int = 0,
) -> PartDictionary:
    """Cluster prototype features into a part dictionary.

    prototypes: (n, d) feature matrix; labels: class index per prototype.
    class_specific clusters each class separately and concatenates the centers in
    class order; class_mixture pools everything into one k-means run.
    """
    prototypes = np.asarray(prototypes, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    if prototypes.shape[0] == 0:
        raise ValueError("no prototypes to cluster")
    if per_class_k < 1:
        raise ValueError("per_class_k must be >= 1")
    class_ids = sorted(set(labels.tolist()))
    if mode == CLASS_MIXTURE:
        k = min(per_class_k * len(class_ids), prototypes.shape[0])
        centers, _ = kmeans(prototypes, k, seed=seed)
        return PartDictionary(centers, CLASS_MIXTURE, per_class_k=per_class_k)
    chunks = []
    ranges = []
    start = 0
    for c in class_ids:
        pts = prototypes[labels == c]
        k = per_class_k
        if len(pts) < k:
            warnings.warn(
                f"class {c}: only {len(pts)} prototypes, clamping k from {per_class_k}"
            )
            k = len(pts)
        centers, _ = kmeans(pts, k, seed=seed + c)
        chunks.append(centers)
        ranges.append((start, start + k))
        start += k
    return PartDictionary(
        np.concatenate(chunks, axis=0), CLASS_SPECIFIC,
        per_class_k=per_class_k, class_ranges=ranges,
    )


def save_dictionary(dictionary: PartDictionary, store_path, sidecar_path) -> None:
    entries = [(f"dict#atom:{k}", dictionary.atoms[k]) for k in range(dictionary.size)]
    write_feature_store(store_path, entries)
    with open(sidecar_path, "w") as fh:
        json.dump(
            {
                "mode": dictionary.mode,
                "per_class_k": dictionary.per_class_k,
                "class_ranges": [list(r) for r in dictionary.class_ranges],
            },
            fh,
        )


def load_dictionary(store_path, sidecar_path) -> PartDictionary:
    entries = dict(read_feature_store(store_path))
    atoms = np.stack([entries[f"dict#atom:{k}"] for k in range(len(entries))])
    with open(sidecar_path) as fh:
        meta = json.load(fh)
    return PartDictionary(
        atoms,
        meta["mode"],
        per_class_k=meta["per_class_k"],
        class_ranges=[tuple(r) for r in meta["class_ranges"]],
    )
