"""Dense linear-algebra building blocks: DCT dictionaries, spectral norms,
and the proximal maps used by the sparse coding solvers."""

from __future__ import annotations

import numpy as np

__all__ = ["dct_dictionary", "spectral_norm", "prox_l1", "prox_l0_topk"]


def dct_dictionary(signal_dim: int, atom_count: int) -> np.ndarray:
    """Overcomplete DCT-II dictionary of shape (signal_dim, atom_count).

    Atom m sampled at position n is cos(pi * (2n + 1) * m / (2 * atom_count));
    every column is rescaled to unit l2 norm.  For atom_count == signal_dim
    this reduces to the orthonormal DCT basis.
    """
    if signal_dim < 1:
        raise ValueError(f"signal_dim must be >= 1, got {signal_dim}")
    if atom_count < signal_dim:
        raise ValueError(
            f"atom_count ({atom_count}) must be >= signal_dim ({signal_dim})"
        )
    n = np.arange(signal_dim)[:, None]
    m = np.arange(atom_count)[None, :]
    d = np.cos(np.pi * (2 * n + 1) * m / (2.0 * atom_count))
    d /= np.linalg.norm(d, axis=0)
    return d


def spectral_norm(matrix: np.ndarray, tol: float = 1e-8, max_iters: int = 1000) -> float:
    """Largest singular value of a dense matrix via power iteration on X^T X.

    The start vector is the normalized all-ones vector so repeated calls are
    bit-reproducible; if that start happens to lie in the kernel of X, a
    fixed-seed random restart is used instead.  Iteration stops when the
    relative change of the Rayleigh quotient drops below ``tol``.
    """
    x = np.asarray(matrix, dtype=float)
    if x.ndim != 2 or x.size == 0:
        raise ValueError("spectral_norm expects a nonempty 2-d matrix")
    if not np.all(np.isfinite(x)):
        raise ValueError("spectral_norm expects finite entries")

    v = np.ones(x.shape[1]) / np.sqrt(x.shape[1])
    lam = 0.0
    for attempt in range(2):
        lam = 0.0
        for _ in range(max_iters):
            w = x @ v
            lam_new = float(w @ w)  # Rayleigh quotient of X^T X at unit v
            if lam_new == 0.0:
                break
            u = x.T @ w
            v = u / np.linalg.norm(u)
            if abs(lam_new - lam) <= tol * max(lam_new, 1e-300):
                return float(np.sqrt(lam_new))
            lam = lam_new
        if lam > 0.0:
            break
        if attempt == 0 and np.any(x != 0.0):
            # all-ones start was annihilated by X; deterministic restart
            v = np.random.default_rng(0).standard_normal(x.shape[1])
            v /= np.linalg.norm(v)
        else:
            break
    return float(np.sqrt(lam))


def prox_l1(v: np.ndarray, threshold: float) -> np.ndarray:
    """Soft threshold: sign(v_i) * max(|v_i| - threshold, 0) element-wise."""
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)


def prox_l0_topk(v: np.ndarray, sparsity: int) -> np.ndarray:
    """Keep the ``sparsity`` largest-magnitude entries of v, zero the rest.

    Magnitude ties are broken in favour of the lowest index.
    """
    v = np.asarray(v, dtype=float)
    if not 1 <= sparsity <= v.shape[0]:
        raise ValueError(
            f"sparsity must be in [1, {v.shape[0]}], got {sparsity}"
        )
    # stable sort on -|v| keeps the earliest index first among ties
    order = np.argsort(-np.abs(v), axis=0, kind="stable")
    out = np.zeros_like(v)
    if v.ndim == 1:
        keep = order[:sparsity]
        out[keep] = v[keep]
    else:
        keep = order[:sparsity]
        cols = np.arange(v.shape[1])[None, :]
        out[keep, cols] = v[keep, cols]
    return out
