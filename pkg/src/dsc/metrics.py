"""Internal cluster-validity metrics, external indices against ground truth,
and a power-iteration PCA for 2-D export.

All distances are Euclidean. Every metric takes the ``(T, D)`` data matrix
and an integer label vector; clusters are identified by their label value,
so results do not depend on how labels are numbered.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from itertools import combinations

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.metrics import adjusted_rand_score, normalized_mutual_info_score

from .errors import DegenerateDataError, DimensionError, MetricError


@dataclass
class MetricsReport:
    silhouette: float
    davies_bouldin: float
    rmse_mean: float
    avg_intercluster_distance: float
    avg_variance_literal: float
    avg_variance_per_feature: float
    space: str = "input"
    ari: float | None = None
    nmi: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _prep(x, labels):
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    if x.ndim != 2 or len(labels) != len(x):
        raise DimensionError(f"data {x.shape} and labels {labels.shape} disagree")
    return x, labels


def _members(labels, j):
    idx = np.flatnonzero(labels == j)
    if idx.size == 0:
        raise MetricError(f"cluster {j} is empty")
    return idx


def intercluster_distance(x, labels, a, b) -> float:
    """Single-linkage distance: closest cross pair between clusters ``a`` and ``b``."""
    x, labels = _prep(x, labels)
    if a == b:
        raise MetricError("clusters must differ")
    return float(cdist(x[_members(labels, a)], x[_members(labels, b)]).min())


def avg_intercluster_distance(x, labels) -> float:
    x, labels = _prep(x, labels)
    clusters = np.unique(labels)
    if len(clusters) < 2:
        raise MetricError("need at least two clusters")
    dist = cdist(x, x)
    vals = [dist[np.ix_(labels == a, labels == b)].min() for a, b in combinations(clusters, 2)]
    return float(np.mean(vals))


def cluster_variance(x, labels, j) -> float:
    """Mean squared distance of cluster ``j``'s members to their mean."""
    x, labels = _prep(x, labels)
    pts = x[_members(labels, j)]
    resid = pts - pts.mean(axis=0)
    return float((resid * resid).sum() / len(pts))


def avg_variance(x, labels) -> tuple[float, float]:
    """Average cluster variance, literally and divided by the feature count."""
    x, labels = _prep(x, labels)
    literal = float(np.mean([cluster_variance(x, labels, j) for j in np.unique(labels)]))
    return literal, literal / x.shape[1]


def rmse_mean(x, labels) -> float:
    x, labels = _prep(x, labels)
    total = 0.0
    for j in np.unique(labels):
        pts = x[labels == j]
        resid = pts - pts.mean(axis=0)
        total += float((resid * resid).sum())
    return float(np.sqrt(total / len(x)))


def silhouette(x, labels) -> float:
    x, labels = _prep(x, labels)
    clusters = np.unique(labels)
    if len(clusters) < 2:
        raise MetricError("silhouette needs at least two clusters")
    dist = cdist(x, x)
    onehot = labels[:, None] == clusters[None, :]
    counts = onehot.sum(axis=0)
    sums = dist @ onehot
    own = np.searchsorted(clusters, labels)
    rows = np.arange(len(x))
    own_size = counts[own]
    a = np.where(own_size > 1, sums[rows, own] / np.maximum(own_size - 1, 1), 0.0)
    means = sums / counts
    means[rows, own] = np.inf
    b = means.min(axis=1)
    s = np.where(own_size > 1, (b - a) / np.maximum(np.maximum(a, b), 1e-300), 0.0)
    return float(s.mean())


def davies_bouldin(x, labels) -> float:
    x, labels = _prep(x, labels)
    clusters = np.unique(labels)
    if len(clusters) < 2:
        raise MetricError("Davies-Bouldin needs at least two clusters")
    cents = np.array([x[labels == j].mean(axis=0) for j in clusters])
    scatter = np.array([np.linalg.norm(x[labels == j] - c, axis=1).mean()
                        for j, c in zip(clusters, cents)])
    sep = cdist(cents, cents)
    np.fill_diagonal(sep, np.inf)
    if np.any(sep == 0):
        raise MetricError("two cluster centroids coincide")
    ratio = (scatter[:, None] + scatter[None, :]) / sep
    return float(ratio.max(axis=1).mean())


def ari(labels, truth) -> float:
    if len(labels) != len(truth):
        raise DimensionError("label vectors differ in length")
    return float(adjusted_rand_score(truth, labels))


def nmi(labels, truth) -> float:
    if len(labels) != len(truth):
        raise DimensionError("label vectors differ in length")
    return float(normalized_mutual_info_score(truth, labels))


def evaluate(x, labels, truth=None, space: str = "input") -> MetricsReport:
    """Compute the full metric suite for one labeling."""
    literal, per_feature = avg_variance(x, labels)
    report = MetricsReport(
        silhouette=silhouette(x, labels),
        davies_bouldin=davies_bouldin(x, labels),
        rmse_mean=rmse_mean(x, labels),
        avg_intercluster_distance=avg_intercluster_distance(x, labels),
        avg_variance_literal=literal,
        avg_variance_per_feature=per_feature,
        space=space,
    )
    if truth is not None:
        report.ari = ari(labels, truth)
        report.nmi = nmi(labels, truth)
    return report


# --- projection --------------------------------------------------------------

def _top_eigvec(matvec, dim, rng, exclude, tol=1e-13, max_iter=2000):
    v = rng.standard_normal(dim)
    for u in exclude:
        v -= (v @ u) * u
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = matvec(v)
        for u in exclude:
            w -= (w @ u) * u
        norm = np.linalg.norm(w)
        if norm == 0:
            return v, 0.0
        w /= norm
        done = np.linalg.norm(w - v) < 1e-10 or abs(norm - lam) <= tol * norm
        v, lam = w, norm
        if done:
            break
    return v, lam


def pca_2d(x, seed: int = 0):
    """Top-two principal axes by power iteration with deflation.

    Returns ``(projection (T, 2), components (2, D), explained_ratio (2,))``.
    The covariance is never formed; each iteration applies ``X^T X v``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or len(x) < 3:
        raise DimensionError("pca needs a (T, D) matrix with T >= 3")
    xc = x - x.mean(axis=0)
    total = float((xc * xc).sum()) / (len(x) - 1)
    if total == 0:
        raise DegenerateDataError("data has zero variance")
    rng = np.random.default_rng(seed)

    def matvec(v):
        return xc.T @ (xc @ v) / (len(x) - 1)

    comps, lams = [], []
    for _ in range(2):
        if x.shape[1] == len(comps):
            break
        v, lam = _top_eigvec(matvec, x.shape[1], rng, comps)
        # fix the sign so the largest-magnitude loading is positive
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        comps.append(v)
        lams.append(lam)
    while len(comps) < 2:
        comps.append(np.zeros(x.shape[1]))
        lams.append(0.0)
    comps = np.array(comps)
    return xc @ comps.T, comps, np.array(lams) / total


def pca_project_2d(x, seed: int = 0) -> np.ndarray:
    return pca_2d(x, seed)[0]
