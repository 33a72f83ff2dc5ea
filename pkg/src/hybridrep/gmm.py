"""Diagonal-covariance Gaussian mixture trained by EM, with the
scale-proportional descriptor sampling used before Fisher-vector coding."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .datamodel import FeatureTensor, read_feature_store, write_feature_store

DEFAULT_COMPONENTS = 64
DEFAULT_MAX_ITER = 100
DEFAULT_TOL = 1e-5
DEFAULT_BUDGET = 256_000
VAR_FLOOR_FRACTION = 1e-4


@dataclass
class GmmModel:
    weights: np.ndarray  # (M,)
    means: np.ndarray  # (M, d)
    variances: np.ndarray  # (M, d), diagonal

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        if abs(self.weights.sum() - 1.0) > 1e-6:
            raise ValueError("mixture weights must sum to 1")
        if np.any(self.weights <= 0):
            raise ValueError("mixture weights must be positive")
        if np.any(self.variances <= 0):
            raise ValueError("variances must be positive")

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def log_prob_components(self, points: np.ndarray) -> np.ndarray:
        """Per-component joint log density log(w_i) + log N(x | mu_i, var_i), (n, M)."""
        points = np.asarray(points, dtype=np.float64)
        d = self.dim
        const = -0.5 * d * np.log(2.0 * np.pi) - 0.5 * np.sum(
            np.log(self.variances), axis=1
        )
        # (n, M) Mahalanobis terms for diagonal covariances
        quad = (
            np.sum(self.means**2 / self.variances, axis=1)[None, :]
            - 2.0 * points @ (self.means / self.variances).T
            + points**2 @ (1.0 / self.variances).T
        )
        return np.log(self.weights)[None, :] + const[None, :] - 0.5 * quad

    def responsibilities(self, points: np.ndarray) -> tuple[np.ndarray, float]:
        """Posterior (n, M) and mean log-likelihood, via log-sum-exp."""
        joint = self.log_prob_components(points)
        norm = logsumexp(joint, axis=1)
        return np.exp(joint - norm[:, None]), float(norm.mean())


def sample_descriptors(tensors_per_image, budget: int, seed: int = 0) -> np.ndarray:
    """Draw descriptors proportionally to each scale's descriptor count.

    tensors_per_image: list (one item per image) of lists of FeatureTensor.
    The global budget is split evenly across images; within an image each scale s
    gets round(budget_i * n_s / sum(n)) draws, uniform without replacement.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if not tensors_per_image:
        raise ValueError("no descriptors available")
    rng = np.random.default_rng(seed)
    per_image = max(budget // len(tensors_per_image), 1)
    out = []
    for tensors in tensors_per_image:
        counts = np.array([t.h * t.w for t in tensors])
        total = counts.sum()
        for tensor, n_s in zip(tensors, counts):
            quota = min(int(round(per_image * n_s / total)), int(n_s))
            if quota == 0:
                continue
            rows = tensor.vectors()
            idx = rng.choice(len(rows), size=quota, replace=False)
            out.append(rows[np.sort(idx)])
    if not out:
        raise ValueError("sampling produced no descriptors")
    return np.concatenate(out).astype(np.float64)


def scale_quotas(counts, budget: int) -> list[int]:
    """Per-scale draw counts for one image: round(budget * n_s / sum), clamped."""
    counts = np.asarray(counts)
    total = counts.sum()
    return [min(int(round(budget * n / total)), int(n)) for n in counts]


def train_gmm(
    descriptors,
    n_components: int = DEFAULT_COMPONENTS,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
) -> GmmModel:
    """EM from a k-means initialization; log-likelihood asserted non-decreasing."""
    from .dictionary import kmeans

    points = np.asarray(descriptors, dtype=np.float64)
    n, d = points.shape
    if n < n_components:
        raise ValueError(f"{n} descriptors < {n_components} components")
    data_var = np.var(points, axis=0)
    floor = np.maximum(VAR_FLOOR_FRACTION * data_var, 1e-10)

    centers, labels = kmeans(points, n_components, seed=seed)
    weights = np.array(
        [max(np.sum(labels == i), 1) for i in range(n_components)], dtype=np.float64
    )
    weights /= weights.sum()
    variances = np.stack(
        [
            np.maximum(np.var(points[labels == i], axis=0), floor)
            if np.any(labels == i)
            else data_var.copy()
            for i in range(n_components)
        ]
    )
    variances = np.maximum(variances, floor)
    model = GmmModel(weights, centers, variances)

    prev_ll = -np.inf
    skip_assert = False
    for _ in range(max_iter):
        resp, ll = model.responsibilities(points)
        if not skip_assert:
            assert ll >= prev_ll - 1e-8, f"log-likelihood decreased: {prev_ll} -> {ll}"
        skip_assert = False
        if ll - prev_ll < tol and np.isfinite(prev_ll):
            break
        prev_ll = ll
        mass = resp.sum(axis=0)
        collapsed = mass < 1e-10 * n
        weights = np.maximum(mass, 1e-12)
        means = (resp.T @ points) / weights[:, None]
        variances = np.maximum(
            (resp.T @ points**2) / weights[:, None] - means**2, floor
        )
        weights = weights / weights.sum()
        if np.any(collapsed):
            # re-seed dead components from the worst-explained points
            joint = model.log_prob_components(points)
            order = np.argsort(logsumexp(joint, axis=1))
            for rank, i in enumerate(np.flatnonzero(collapsed)):
                means[i] = points[order[rank % n]]
                variances[i] = np.maximum(data_var, floor)
                weights[i] = 1.0 / n
            weights = weights / weights.sum()
            skip_assert = True
        model = GmmModel(weights, means, variances)
    return model


def save_gmm(model: GmmModel, store_path, sidecar_path) -> None:
    entries = [("gmm#w", model.weights.astype(np.float32))]
    for m in range(model.n_components):
        entries.append((f"gmm#mu:{m}", model.means[m].astype(np.float32)))
        entries.append((f"gmm#var:{m}", model.variances[m].astype(np.float32)))
    write_feature_store(store_path, entries)
    with open(sidecar_path, "w") as fh:
        json.dump(
            {"M": model.n_components, "d": model.dim, "floor": VAR_FLOOR_FRACTION}, fh
        )


def load_gmm(store_path, sidecar_path) -> GmmModel:
    with open(sidecar_path) as fh:
        meta = json.load(fh)
    entries = dict(read_feature_store(store_path))
    weights = np.asarray(entries["gmm#w"], dtype=np.float64)
    weights = weights / weights.sum()  # f32 round-trip can drift off the simplex
    means = np.stack([entries[f"gmm#mu:{m}"] for m in range(meta["M"])])
    variances = np.stack([entries[f"gmm#var:{m}"] for m in range(meta["M"])])
    return GmmModel(weights, means, variances)
