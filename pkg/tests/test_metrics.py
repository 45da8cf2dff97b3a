import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import davies_bouldin_score, silhouette_score

from dsc import metrics as mt
from dsc.errors import DegenerateDataError, MetricError

PAIRS = np.array([[0.0, 0], [0, 1], [10, 0], [10, 1]])
PAIR_LABELS = np.array([0, 0, 1, 1])


def test_intercluster_examples():
    x = np.array([[0.0, 0], [3, 4]])
    assert mt.intercluster_distance(x, [0, 1], 0, 1) == 5.0
    dup = np.array([[1.0, 1], [1, 1], [5, 5]])
    assert mt.intercluster_distance(dup, [0, 1, 1], 0, 1) == 0.0
    tri = np.array([[0.0, 0], [1, 0], [0.5, np.sqrt(3) / 2]])
    assert abs(mt.avg_intercluster_distance(tri, [0, 1, 2]) - 1.0) < 1e-12
    with pytest.raises(MetricError):
        mt.intercluster_distance(x, [0, 0], 0, 1)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_merging_closest_pair_keeps_single_linkage_to_third(seed):
    x, _ = labelled_cloud(seed)
    labels = np.arange(len(x)) % 3
    pairs = {(a, b): mt.intercluster_distance(x, labels, a, b) for a, b in [(0, 1), (0, 2), (1, 2)]}
    a, b = min(pairs, key=pairs.get)
    c = ({0, 1, 2} - {a, b}).pop()
    merged = np.where(labels == b, a, labels)
    after = mt.avg_intercluster_distance(x, merged)
    assert after == min(pairs[tuple(sorted((a, c)))], pairs[tuple(sorted((b, c)))])
    assert after <= max(pairs.values())


def test_variance_examples():
    x = np.array([[0.0, 0], [2, 0]])
    assert mt.avg_variance(x, [0, 0]) == (1.0, 0.5)
    assert mt.cluster_variance(np.array([[3.0, 4]]), [0], 0) == 0.0
    assert mt.cluster_variance(np.ones((4, 2)), [0] * 4, 0) == 0.0


def test_rmse_examples():
    assert mt.rmse_mean(np.array([[0.0], [2.0]]), [0, 0]) == 1.0
    assert mt.rmse_mean(PAIRS, [0, 1, 2, 3]) == 0.0


def test_silhouette_and_db_fixtures():
    assert abs(mt.silhouette(PAIRS, PAIR_LABELS) - 0.9002) < 1e-4
    assert abs(mt.davies_bouldin(PAIRS, PAIR_LABELS) - 0.1) < 1e-12
    far = np.array([[0.0, 0], [50, 0], [0, 80]])
    assert mt.davies_bouldin(far, [0, 1, 2]) == 0.0


def test_silhouette_interleaved_is_not_positive():
    x = np.array([[0.0], [1.0], [0.0], [1.0]])
    assert mt.silhouette(x, [0, 0, 1, 1]) <= 0


def test_silhouette_tends_to_one():
    x = np.array([[0.0], [1e-6], [1e6], [1e6 + 1e-6]])
    assert mt.silhouette(x, [0, 0, 1, 1]) > 1 - 1e-9


def test_single_cluster_rejected():
    with pytest.raises(MetricError):
        mt.silhouette(PAIRS, [0] * 4)
    with pytest.raises(MetricError):
        mt.evaluate(PAIRS, [0] * 4)
    with pytest.raises(MetricError):
        mt.davies_bouldin(np.array([[0.0], [2.0], [1.0]]), [0, 0, 1])


def labelled_cloud(seed):
    r = np.random.default_rng(seed)
    k = r.integers(2, 5)
    labels = np.r_[np.arange(k), r.integers(0, k, size=20)]
    x = r.normal(size=(len(labels), 3)) + labels[:, None] * 2.0
    return x, labels


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=50, deadline=None)
def test_against_sklearn(seed):
    x, labels = labelled_cloud(seed)
    assert abs(mt.silhouette(x, labels) - silhouette_score(x, labels)) < 1e-9
    assert abs(mt.davies_bouldin(x, labels) - davies_bouldin_score(x, labels)) < 1e-9


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=50, deadline=None)
def test_metric_invariants(seed):
    x, labels = labelled_cloud(seed)
    rep = mt.evaluate(x, labels)
    assert -1 <= rep.silhouette <= 1 and rep.davies_bouldin >= 0
    sizes = np.bincount(labels)
    var = [mt.cluster_variance(x, labels, j) for j in range(len(sizes))]
    assert abs(rep.rmse_mean ** 2 * len(x) - np.dot(sizes, var)) < 1e-9
    assert rep.avg_variance_per_feature == pytest.approx(rep.avg_variance_literal / 3)

    r = np.random.default_rng(seed)
    perm = r.permutation(len(x))
    names = r.permutation(10)[:labels.max() + 1] * 7
    other = mt.evaluate(x[perm], names[labels][perm])
    for field in ("silhouette", "davies_bouldin", "rmse_mean", "avg_intercluster_distance",
                  "avg_variance_literal"):
        assert getattr(other, field) == pytest.approx(getattr(rep, field), rel=1e-9, abs=1e-12)


def test_external_indices():
    truth = np.array([0, 0, 1, 1, 2, 2])
    assert mt.ari(truth, truth) == 1.0 and mt.nmi(truth, truth) == pytest.approx(1.0)
    assert mt.ari(np.array([5, 5, 9, 9, 1, 1]), truth) == 1.0
    assert mt.ari(np.zeros(4, int), np.array([0, 0, 1, 1])) == 0.0
    rep = mt.evaluate(PAIRS, PAIR_LABELS, truth=[1, 1, 0, 0])
    assert rep.ari == 1.0 and rep.space == "input"


def test_pca_matches_eigh(rng):
    x = rng.normal(size=(60, 5)) @ rng.normal(size=(5, 5))
    proj, comps, ratios = mt.pca_2d(x)
    xc = x - x.mean(0)
    vals, vecs = np.linalg.eigh(np.cov(xc, rowvar=False))
    for i in range(2):
        ref = vecs[:, -1 - i]
        assert abs(abs(comps[i] @ ref) - 1) < 1e-8
        assert ratios[i] == pytest.approx(vals[-1 - i] / vals.sum(), rel=1e-8)
    assert ratios.sum() <= 1 + 1e-12
    np.testing.assert_allclose(proj, xc @ comps.T)


def test_pca_collinear():
    t = np.linspace(0, 1, 10)
    _, _, ratios = mt.pca_2d(np.c_[t, 2 * t])
    assert ratios[0] == pytest.approx(1.0) and abs(ratios[1]) < 1e-12


def test_pca_preserves_distances_in_2d(rng):
    x = rng.normal(size=(12, 2))
    proj = mt.pca_project_2d(x)
    d = lambda a: np.linalg.norm(a[:, None] - a[None], axis=-1)
    np.testing.assert_allclose(d(proj), d(x), atol=1e-9)


def test_pca_deterministic_and_degenerate(rng):
    x = rng.normal(size=(10, 4))
    np.testing.assert_array_equal(mt.pca_project_2d(x, seed=1), mt.pca_project_2d(x, seed=1))
    with pytest.raises(DegenerateDataError):
        mt.pca_2d(np.ones((5, 3)))
