"""Descriptor coding against a codebook: exact and approximated
locality-constrained linear coding, plus the VLAD baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .dictionary import PartDictionary


@dataclass(frozen=True)
class LlcParams:
    lam: float = 1e-4
    tau: float = 1.0
    knn: int = 5

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("regularization weight must be >= 0")
        if self.tau <= 0:
            raise ValueError("locality bandwidth must be positive")
        if self.knn < 1:
            raise ValueError("knn must be >= 1")


def default_tau(atoms: np.ndarray) -> float:
    """10 x (mean pairwise atom distance)^2, the conventional bandwidth choice."""
    atoms = np.asarray(atoms, dtype=np.float64)
    k = atoms.shape[0]
    if k < 2:
        return 1.0
    sq = np.sum(atoms**2, axis=1)
    d2 = np.maximum(sq[:, None] - 2.0 * atoms @ atoms.T + sq[None, :], 0.0)
    mean_dist = np.sqrt(d2)[np.triu_indices(k, 1)].mean()
    return float(10.0 * mean_dist**2) or 1.0


def _atom_sq_dists(x: np.ndarray, atoms: np.ndarray) -> np.ndarray:
    diff = atoms - x[None, :]
    return np.sum(diff**2, axis=1)


def llc_exact(x, dictionary: PartDictionary, params: LlcParams) -> np.ndarray:
    """Closed-form minimizer of the locality-regularized reconstruction:

        v* = argmin ||x - D v||^2 + lam ||dist (.) v||^2,
        dist_k = exp(||x - d_k||^2 / tau)

    solved as (D^T D + lam diag(dist^2)) v = D^T x via Cholesky.
    """
    x = np.asarray(x, dtype=np.float64)
    atoms = dictionary.atoms.astype(np.float64)  # (K, d)
    if x.shape != (atoms.shape[1],):
        raise ValueError(f"descriptor dim {x.shape} vs atom dim {atoms.shape[1]}")
    dist = np.exp(_atom_sq_dists(x, atoms) / params.tau)
    gram = atoms @ atoms.T
    system = gram + params.lam * np.diag(dist**2)
    rhs = atoms @ x
    try:
        factor = scipy.linalg.cho_factor(system)
        v = scipy.linalg.cho_solve(factor, rhs)
    except scipy.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"singular LLC system (lam={params.lam}, K={atoms.shape[0]}): {exc}"
        ) from exc
    return v.astype(np.float32)


def llc_approx(x, dictionary: PartDictionary, params: LlcParams) -> np.ndarray:
    """Approximated LLC: constrained least squares over the knn nearest atoms,
    coefficients summing to one, scattered into a K-vector."""
    x = np.asarray(x, dtype=np.float64)
    atoms = dictionary.atoms.astype(np.float64)
    k_total = atoms.shape[0]
    if params.knn > k_total:
        raise ValueError(f"knn={params.knn} exceeds dictionary size {k_total}")
    if x.shape != (atoms.shape[1],):
        raise ValueError(f"descriptor dim {x.shape} vs atom dim {atoms.shape[1]}")
    d2 = _atom_sq_dists(x, atoms)
    nearest = np.argsort(d2, kind="stable")[: params.knn]
    z = atoms[nearest] - x[None, :]  # shift to origin
    cov = z @ z.T
    cov += np.eye(params.knn) * (1e-4 * np.trace(cov) if np.trace(cov) > 0 else 1e-12)
    w = np.linalg.solve(cov, np.ones(params.knn))
    w /= w.sum()
    code = np.zeros(k_total, dtype=np.float32)
    code[nearest] = w
    return code


def vlad_encode(descriptors, centers) -> np.ndarray:
    """Aggregate residuals to each descriptor's nearest center (Md-dim output)."""
    centers = np.asarray(centers, dtype=np.float64)
    m, d = centers.shape
    out = np.zeros((m, d))
    for x in descriptors:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (d,):
            raise ValueError(f"descriptor dim {x.shape} vs center dim {d}")
        j = int(np.argmin(_atom_sq_dists(x, centers)))
        out[j] += x - centers[j]
    return out.ravel().astype(np.float32)
