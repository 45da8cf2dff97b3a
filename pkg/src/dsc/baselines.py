"""Classical clustering on flattened observations: k-means and Ward
agglomerative clustering."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError


def _check_k(x: np.ndarray, k: int) -> None:
    if x.ndim != 2:
        raise ConfigError(f"expected a (T, D) matrix, got shape {x.shape}")
    if not 1 <= k < len(x):
        raise ConfigError(f"need 1 <= k < T, got k={k}, T={len(x)}")


def _sq_dists(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d = (x * x).sum(1)[:, None] - 2.0 * x @ centroids.T + (centroids * centroids).sum(1)[None, :]
    return np.maximum(d, 0.0)


def kmeans_plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: each new center drawn with probability proportional
    to squared distance from the nearest chosen one."""
    centers = [x[rng.integers(len(x))]]
    closest = _sq_dists(x, centers[0][None])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(len(x))
        else:
            idx = rng.choice(len(x), p=closest / total)
        centers.append(x[idx])
        closest = np.minimum(closest, _sq_dists(x, x[idx][None])[:, 0])
    return np.array(centers)


def lloyd(x: np.ndarray, centroids: np.ndarray, max_iter: int = 300):
    """Lloyd iterations from the given centroids.

    Returns ``(centroids, labels, sse, sse_history)``. An emptied cluster
    is re-seeded at the point farthest from its assigned centroid.
    """
    centroids = centroids.copy()
    k = len(centroids)
    history = []
    labels = None
    for _ in range(max_iter):
        d = _sq_dists(x, centroids)
        new_labels = d.argmin(axis=1)
        sse = float(d[np.arange(len(x)), new_labels].sum())
        history.append(sse)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = labels == j
            if members.any():
                centroids[j] = x[members].mean(axis=0)
            else:
                far = d[np.arange(len(x)), labels].argmax()
                centroids[j] = x[far]
                labels[far] = j
                d[far] = 0.0
    labels = _sq_dists(x, centroids).argmin(axis=1)
    resid = x - centroids[labels]
    sse = float((resid * resid).sum())
    return centroids, labels, sse, history


def kmeans_fit(x, k: int, restarts: int = 10, max_iter: int = 300, seed: int = 0):
    """Best-of-``restarts`` k-means++/Lloyd. Returns ``(centroids, labels, sse)``."""
    x = np.asarray(x, dtype=np.float64)
    _check_k(x, k)
    if restarts < 1 or max_iter < 1:
        raise ConfigError("restarts and max_iter must be >= 1")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        init = kmeans_plusplus(x, k, rng)
        centroids, labels, sse, _ = lloyd(x, init, max_iter)
        if best is None or sse < best[2]:
            best = (centroids, labels, sse)
    return best


def hierarchical_fit(x, k: int) -> np.ndarray:
    """Agglomerative Ward clustering via Lance-Williams updates.

    Works on squared Euclidean distances so the Ward recurrence is exact;
    ties are broken by the smallest (i, j) pair. Labels are numbered in
    order of each cluster's first member.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_k(x, k)
    t = len(x)
    sq = (x * x).sum(1)
    d = np.maximum(sq[:, None] - 2.0 * x @ x.T + sq[None, :], 0.0)
    # Ward merge cost between singletons is half the squared distance
    d = d / 2.0
    np.fill_diagonal(d, np.inf)
    size = np.ones(t)
    active = np.ones(t, dtype=bool)
    owner = np.arange(t)
    for _ in range(t - k):
        flat = int(np.argmin(d))
        i, j = divmod(flat, t)
        if i > j:
            i, j = j, i
        ni, nj = size[i], size[j]
        nk = size
        dij = d[i, j]
        upd = ((ni + nk) * d[i] + (nj + nk) * d[j] - nk * dij) / (ni + nj + nk)
        upd[~active] = np.inf
        upd[i] = np.inf
        d[i] = upd
        d[:, i] = upd
        d[j] = np.inf
        d[:, j] = np.inf
        size[i] = ni + nj
        active[j] = False
        owner[owner == j] = i
    _, labels = np.unique(owner, return_inverse=True)
    # relabel by first appearance so the numbering does not depend on merge order
    order = {}
    out = np.empty(t, dtype=int)
    for idx, lab in enumerate(labels):
        out[idx] = order.setdefault(lab, len(order))
    return out
