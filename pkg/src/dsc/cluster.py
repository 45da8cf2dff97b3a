"""Student's-t clustering head: centroid init, soft/target assignments,
KL self-training loss with analytic gradients, and the stopping rule."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .baselines import kmeans_fit
from .errors import ConfigError, DegenerateDataError, NumericError

EMPTY_FLOOR = 1e-12


@dataclass
class ClusterState:
    centroids: np.ndarray
    soft: np.ndarray
    target: np.ndarray
    labels: np.ndarray
    alpha: float = 1.0


def init_centroids(embeddings, k: int, restarts: int = 20, seed: int = 0) -> np.ndarray:
    """k-means on the latent rows; best of ``restarts`` by SSE."""
    emb = np.asarray(embeddings, dtype=np.float64)
    if k < 2 or k >= len(emb):
        raise ConfigError(f"need 2 <= k < T, got k={k}, T={len(emb)}")
    if np.ptp(emb, axis=0).max() == 0:
        raise DegenerateDataError("all embeddings are identical; cannot seed centroids")
    centroids, _, _ = kmeans_fit(emb, k, restarts=restarts, seed=seed)
    return centroids


def _kernel(embeddings, centroids, alpha):
    diff = embeddings[:, None, :] - centroids[None, :, :]
    sq = np.einsum("tkm,tkm->tk", diff, diff)
    base = 1.0 + sq / alpha
    return diff, base


def soft_assign(embeddings, centroids, alpha: float = 1.0) -> np.ndarray:
    """q_ij proportional to (1 + |E_i - C_j|^2 / alpha)^(-(alpha+1)/2), row-normalized."""
    if alpha <= 0:
        raise ConfigError("alpha must be positive")
    _, base = _kernel(np.asarray(embeddings), np.asarray(centroids), alpha)
    # normalize against the row's nearest centroid so far rows do not underflow to 0/0
    logu = -(alpha + 1.0) / 2.0 * np.log(base)
    u = np.exp(logu - logu.max(axis=1, keepdims=True))
    return u / u.sum(axis=1, keepdims=True)


def target_distribution(q) -> np.ndarray:
    """Sharpened target p_ij = (q_ij^2 / f_j) / sum_l (q_il^2 / f_l), f_j = sum_i q_ij."""
    q = np.asarray(q)
    freq = q.sum(axis=0)
    if np.any(freq <= 0):
        warnings.warn("empty soft cluster; flooring its frequency", RuntimeWarning, stacklevel=2)
    weight = q * q / np.maximum(freq, EMPTY_FLOOR)
    return weight / weight.sum(axis=1, keepdims=True)


def kl_loss(p, q) -> float:
    """Mean over rows of KL(P_i || Q_i), with 0 log 0 = 0."""
    p, q = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    pos = p > 0
    if np.any(q[pos] <= 0):
        raise NumericError("q is zero where p is positive")
    terms = np.zeros_like(p)
    terms[pos] = p[pos] * np.log(p[pos] / q[pos])
    return float(terms.sum() / len(p))


def kl_gradients(p, q, embeddings, centroids, alpha: float = 1.0):
    """Gradients of ``kl_loss(p, soft_assign(E, C))`` with ``p`` held fixed.

    Returns ``(grad_embeddings, grad_centroids)``. Per row i:
    dL/dE_i = (alpha+1)/alpha / T * sum_j (p_ij - q_ij) (1 + d_ij/alpha)^-1 (E_i - C_j)
    and dL/dC_j is minus the same terms summed over rows.
    """
    p, q = np.asarray(p), np.asarray(q)
    diff, base = _kernel(np.asarray(embeddings), np.asarray(centroids), alpha)
    coef = (alpha + 1.0) / alpha / len(p) * (p - q) / base
    terms = coef[:, :, None] * diff
    return terms.sum(axis=1), -terms.sum(axis=0)


def hard_assign(q) -> np.ndarray:
    """Row argmax; ties go to the lowest cluster index."""
    return np.asarray(q).argmax(axis=1)


def converged(history, patience: int = 5) -> bool:
    """True once the last ``patience + 1`` label vectors are identical."""
    if not history:
        raise ValueError("history is empty")
    if len(history) < patience + 1:
        return False
    last = history[-1]
    return all(np.array_equal(last, h) for h in history[-(patience + 1):-1])
