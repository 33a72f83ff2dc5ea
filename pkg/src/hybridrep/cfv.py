"""Fisher-vector encoding of multi-scale conv tensors: per-scale gradients,
L2 normalization, cross-scale max-pooling, then power and L2 normalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import FeatureTensor, ImageRecord
from .gmm import GmmModel

SQRT2 = np.sqrt(2.0)
FIVE_SCALES = tuple(SQRT2**e for e in range(5))
TEN_SCALES = tuple(SQRT2**e for e in range(-6, 4))


@dataclass
class FvConfig:
    scales: tuple[float, ...] = FIVE_SCALES
    power: float = 0.5
    include_weight_grad: bool = False

    def __post_init__(self):
        if not self.scales or min(self.scales) <= 0:
            raise ValueError("scales must be non-empty and positive")
        if not 0.0 < self.power <= 1.0:
            raise ValueError("power exponent must be in (0, 1]")


def fv_encode_scale(
    tensor: FeatureTensor, gmm: GmmModel, include_weight_grad: bool = False
) -> np.ndarray:
    """Averaged improved-FV gradient blocks for one scale's descriptors.

    Mean block   G_mu,i  = (1 / (N sqrt(w_i)))   sum_n g_n(i) (x_n - mu_i) / sig_i
    Var block    G_sig,i = (1 / (N sqrt(2 w_i))) sum_n g_n(i) ((x_n - mu_i)^2 / sig_i^2 - 1)
    Weight block G_w,i   = (1 / (N sqrt(w_i)))   sum_n (g_n(i) - w_i)        [optional]

    with g_n(i) the posterior responsibility of component i for descriptor x_n.
    """
    if tensor.d != gmm.dim:
        raise ValueError(f"tensor dim {tensor.d} vs GMM dim {gmm.dim}")
    points = tensor.vectors().astype(np.float64)  # (N, d)
    n = points.shape[0]
    resp, _ = gmm.responsibilities(points)  # (N, M)
    sigma = np.sqrt(gmm.variances)  # (M, d)
    sqrt_w = np.sqrt(gmm.weights)

    mass = resp.sum(axis=0)  # (M,)
    sum_x = resp.T @ points  # (M, d)
    sum_x2 = resp.T @ points**2  # (M, d)

    centered = sum_x - mass[:, None] * gmm.means
    g_mu = centered / sigma / (n * sqrt_w[:, None])
    second = (
        sum_x2 - 2.0 * gmm.means * sum_x + mass[:, None] * gmm.means**2
    ) / gmm.variances - mass[:, None]
    g_sig = second / (n * sqrt_w[:, None] * SQRT2)

    blocks = [g_mu.ravel(), g_sig.ravel()]
    if include_weight_grad:
        blocks.append((mass / n - gmm.weights) / sqrt_w)
    return np.concatenate(blocks).astype(np.float32)


def l2_normalize(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    return v if norm == 0 else (v / norm).astype(np.float32)


def msp_pool(per_scale: list[np.ndarray]) -> np.ndarray:
    """L2-normalize each scale's Fisher vector, then elementwise max across scales."""
    if not per_scale:
        raise ValueError("need at least one scale")
    dims = {v.shape for v in per_scale}
    if len(dims) != 1:
        raise ValueError(f"inconsistent Fisher-vector dims {dims}")
    return np.max(np.stack([l2_normalize(v) for v in per_scale]), axis=0)


def power_l2(v: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    v = np.asarray(v, dtype=np.float64)
    z = np.sign(v) * np.abs(v) ** alpha
    norm = np.linalg.norm(z)
    if norm > 0:
        z = z / norm
    return z.astype(np.float32)


def encode_cfv(
    image: ImageRecord, extractor, gmm: GmmModel, cfg: FvConfig | None = None
) -> np.ndarray:
    """Per scale: conv descriptors -> FV gradients; then pyramid max-pool and
    power/L2 normalization.  Output dimension 2 M d (plus M with weight grads)."""
    cfg = cfg or FvConfig()
    per_scale = [
        fv_encode_scale(
            extractor.extract_conv(image, scale, scale_index=idx),
            gmm,
            cfg.include_weight_grad,
        )
        for idx, scale in enumerate(cfg.scales)
    ]
    return power_l2(msp_pool(per_scale), cfg.power)


def cfv_dim(gmm: GmmModel, include_weight_grad: bool = False) -> int:
    base = 2 * gmm.n_components * gmm.dim
    return base + (gmm.n_components if include_weight_grad else 0)
