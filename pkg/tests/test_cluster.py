import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dsc.cluster import (converged, hard_assign, init_centroids, kl_gradients, kl_loss,
                         soft_assign, target_distribution)
from dsc.errors import ConfigError, DegenerateDataError
from dsc.gradcheck import check_kl_gradients


def test_init_centroids_matches_enumeration():
    emb = np.array([[0.0], [1.0], [10.0], [11.0]])
    cents = np.sort(init_centroids(emb, 2, restarts=5, seed=0).ravel())
    np.testing.assert_allclose(cents, [0.5, 10.5])


def test_init_centroids_in_hull_and_deterministic(rng):
    emb = rng.normal(size=(6, 3))
    a = init_centroids(emb, 5, restarts=3, seed=4)
    assert np.all(a >= emb.min(0) - 1e-12) and np.all(a <= emb.max(0) + 1e-12)
    np.testing.assert_array_equal(a, init_centroids(emb, 5, restarts=3, seed=4))


def test_init_centroids_errors():
    with pytest.raises(ConfigError):
        init_centroids(np.eye(3), 3)
    with pytest.raises(DegenerateDataError):
        init_centroids(np.ones((5, 2)), 2)


def test_soft_assign_examples():
    np.testing.assert_allclose(soft_assign([[1.0]], [[0.0], [2.0]]), [[0.5, 0.5]])
    np.testing.assert_allclose(soft_assign([[0.0]], [[0.0], [2.0]]), [[5 / 6, 1 / 6]])
    prev = 0.0
    for far in (2.0, 5.0, 20.0, 100.0):
        q = soft_assign([[0.0]], [[0.0], [far]])[0, 0]
        assert q > prev
        prev = q
    assert prev > 0.9999


def test_soft_assign_general_alpha_hand_value():
    # alpha = 3: kernel (1 + d^2/3)^-2 -> centroids at 0 and 3 give 1 and 1/16
    q = soft_assign([[0.0]], [[0.0], [3.0]], alpha=3.0)
    np.testing.assert_allclose(q, [[16 / 17, 1 / 17]])


def test_target_distribution_examples():
    q = np.array([[0.9, 0.1], [0.6, 0.4]])
    np.testing.assert_allclose(target_distribution(q), [[0.9643, 0.0357], [0.4286, 0.5714]], atol=1e-4)
    np.testing.assert_allclose(target_distribution([[0.3, 0.7]]), [[0.3, 0.7]])
    np.testing.assert_allclose(target_distribution(np.full((4, 3), 1 / 3)), np.full((4, 3), 1 / 3))


def test_target_distribution_empty_column_warns():
    with pytest.warns(RuntimeWarning):
        p = target_distribution(np.array([[1.0, 0.0], [1.0, 0.0]]))
    assert np.all(np.isfinite(p))


def test_kl_loss_examples():
    q = np.array([[0.2, 0.8], [0.5, 0.5]])
    assert kl_loss(q, q) == 0
    assert abs(kl_loss([[1.0, 0.0]], [[0.5, 0.5]]) - np.log(2)) < 1e-12


@given(st.integers(1, 8), st.integers(2, 5), st.integers(0, 2**31 - 1))
@settings(max_examples=100, deadline=None)
def test_kl_non_negative_and_rows_stochastic(t, k, seed):
    r = np.random.default_rng(seed)
    emb, cent = r.normal(size=(t, 3)) * 3, r.normal(size=(k, 3)) * 3
    q = soft_assign(emb, cent)
    p = target_distribution(q)
    np.testing.assert_allclose(q.sum(1), 1, atol=1e-9)
    np.testing.assert_allclose(p.sum(1), 1, atol=1e-9)
    assert np.all((q > 0) & (q < 1))
    # non-negative up to summation rounding
    assert kl_loss(p, q) >= -1e-12
    assert kl_loss(r.dirichlet(np.ones(k), t), q) >= -1e-12


def test_kl_gradients_zero_at_target(rng):
    emb, cent = rng.normal(size=(5, 3)), rng.normal(size=(2, 3))
    q = soft_assign(emb, cent)
    ge, gc = kl_gradients(q, q, emb, cent)
    assert np.abs(ge).max() <= 1e-10 and np.abs(gc).max() <= 1e-10


@pytest.mark.parametrize("alpha", [1.0, 2.5])
def test_kl_gradients_finite_differences(alpha):
    rng = np.random.default_rng(11)
    for _ in range(10):
        assert check_kl_gradients(rng, alpha=alpha) <= 1e-4


def test_kl_gradient_direction_hand_case():
    # E=0 between C={0,2}; a sharper target [1,0] must push E back toward 0
    q = soft_assign([[0.0]], [[0.0], [2.0]])
    ge, _ = kl_gradients(np.array([[1.0, 0.0]]), q, [[0.0]], [[0.0], [2.0]])
    assert ge[0, 0] > 0


def test_kl_gradients_mirror_symmetry():
    emb = np.array([[-1.0, 0.5], [1.0, 0.5]])
    cent = np.array([[-2.0, 0.0], [2.0, 0.0]])
    q = soft_assign(emb, cent)
    p = target_distribution(q)
    _, gc = kl_gradients(p, q, emb, cent)
    np.testing.assert_allclose(gc[0] * [-1, 1], gc[1], atol=1e-15)


def test_hard_assign():
    assert hard_assign([[0.2, 0.7, 0.1]])[0] == 1
    assert hard_assign([[0.5, 0.5]])[0] == 0


@given(arrays(np.float64, (6, 3), elements=st.floats(0.01, 1.0)))
@settings(max_examples=50, deadline=None)
def test_hard_assign_invariant_to_monotone_rescale_and_permutation(q):
    q = q / q.sum(1, keepdims=True)
    base = hard_assign(q)
    np.testing.assert_array_equal(hard_assign(np.exp(3 * q) + 1), base)
    perm = np.random.default_rng(0).permutation(len(q))
    np.testing.assert_array_equal(hard_assign(q[perm]), base[perm])


def test_soft_assign_translation_invariant(rng):
    emb, cent = rng.normal(size=(7, 4)), rng.normal(size=(3, 4))
    shift = rng.normal(size=4) * 5
    np.testing.assert_allclose(soft_assign(emb + shift, cent + shift), soft_assign(emb, cent), atol=1e-12)


def test_converged_rule():
    same = [np.array([0, 1, 1])] * 6
    assert converged(same, patience=5)
    flipped = same[:-1] + [np.array([0, 1, 0])]
    assert not converged(flipped, patience=5)
    assert converged([np.array([1, 0]), np.array([1, 0])], patience=0)
    assert not converged(same[:5], patience=5)
    with pytest.raises(ValueError):
        converged([], 5)
