import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_blobs
from mcdnn.clustering import ClusterModel, assign_nearest, kmeans_fit, select_k, silhouette_mean
from mcdnn.errors import ValidationError


def brute_silhouette(X, labels):
    n = len(X)
    s = []
    for i in range(n):
        own = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not own:
            s.append(0.0)
            continue
        a = sum(math.dist(X[i], X[j]) for j in own) / len(own)
        b = min(
            sum(math.dist(X[i], X[j]) for j in range(n) if labels[j] == c) / sum(labels[j] == c for j in range(n))
            for c in set(labels) if c != labels[i]
        )
        s.append((b - a) / max(a, b) if max(a, b) > 0 else 0.0)
    return sum(s) / n


def permutation_accuracy(truth, pred, k):
    best = 0.0
    for perm in itertools.permutations(range(k)):
        best = max(best, float((np.array(perm)[pred] == truth).mean()))
    return best


def test_two_points_exact_fit():
    X = np.array([[0.0, 0.0], [3.0, 4.0]])
    m = kmeans_fit(X, 2, seed=0)
    assert sorted(map(tuple, m.centroids)) == [(0.0, 0.0), (3.0, 4.0)]
    assert m.inertia == 0.0


def test_k_below_two_rejected():
    with pytest.raises(ValidationError):
        kmeans_fit(np.zeros((5, 2)), 1)


def test_fewer_rows_than_k_rejected():
    with pytest.raises(ValidationError):
        kmeans_fit(np.zeros((2, 2)), 3)


def test_blob_centroids_recovered():
    X, y, centers = make_blobs(0, n_per=200, sigma=0.05)
    m = kmeans_fit(X, 4, seed=0, n_init=10)
    d = np.sqrt(((m.centroids[:, None, :] - centers[None]) ** 2).sum(-1))
    match = d.argmin(axis=1)
    assert sorted(match.tolist()) == [0, 1, 2, 3]
    assert d.min(axis=1).max() <= 0.05


def test_blob_labels_match_identity():
    X, y, _ = make_blobs(1, n_per=200, sigma=0.05)
    m = kmeans_fit(X, 4, seed=3, n_init=10)
    assert permutation_accuracy(y, assign_nearest(m, X), 4) >= 0.99


def test_inertia_history_non_increasing():
    X, _, _ = make_blobs(2, n_per=100, sigma=0.3)
    for seed in range(5):
        h = np.array(kmeans_fit(X, 5, seed=seed).inertia_history)
        assert len(h) >= 2
        assert np.all(np.diff(h) <= 1e-9 * h[0])


def test_kmeans_is_seeded():
    X, _, _ = make_blobs(3, sigma=0.4)
    a = kmeans_fit(X, 4, seed=11, n_init=3)
    b = kmeans_fit(X, 4, seed=11, n_init=3)
    assert np.array_equal(a.centroids, b.centroids)


def test_empty_cluster_reseeded():
    from mcdnn.clustering import _lloyd

    # duplicate starting centres leave cluster 1 empty; it must move to the farthest point
    X = np.vstack([np.zeros((10, 2)), np.ones((10, 2)), [[5.0, 5.0]]])
    centers, inertia, _, _ = _lloyd(X, np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]]), 100, 1e-9)
    assert np.all(np.isfinite(centers))
    assert sorted(map(tuple, centers)) == [(0.0, 0.0), (1.0, 1.0), (5.0, 5.0)]
    assert inertia == 0.0


def test_centroid_maps_to_itself():
    X, _, _ = make_blobs(4)
    m = kmeans_fit(X, 4, seed=0)
    assert assign_nearest(m, m.centroids).tolist() == [0, 1, 2, 3]


def test_tie_goes_to_lowest_index():
    m = ClusterModel(3, np.array([[0.0, 0.0], [5.0, 5.0], [2.0, 0.0]]), 0.0)
    assert assign_nearest(m, np.array([[1.0, 0.0]])).tolist() == [0]


def test_assign_dimension_mismatch():
    m = ClusterModel(2, np.zeros((2, 3)), 0.0)
    with pytest.raises(ValidationError):
        assign_nearest(m, np.zeros((4, 2)))


def test_silhouette_hand_computed():
    X = np.array([[0.0], [0.1], [10.0], [10.1]])
    labels = np.array([0, 0, 1, 1])
    # point 0: a=0.1, b=(10+10.1)/2
    s0 = (10.05 - 0.1) / 10.05
    s1 = (9.95 - 0.1) / 9.95
    expected = (s0 + s1 + s1 + s0) / 4
    assert abs(silhouette_mean(X, labels) - expected) <= 1e-12
    assert abs(silhouette_mean(X, labels) - brute_silhouette(X.tolist(), labels.tolist())) <= 1e-12


def test_silhouette_semantics():
    X = np.array([[0.0, 0.0], [0.0, 0.1], [10.0, 0.0], [10.0, 0.1]])
    assert silhouette_mean(X, [0, 0, 1, 1]) > 0.9
    assert silhouette_mean(X, [0, 1, 0, 1]) < 0


def test_silhouette_singleton_contributes_zero():
    X = np.array([[0.0], [0.2], [5.0]])
    labels = [0, 0, 1]
    assert abs(silhouette_mean(X, labels) - brute_silhouette(X.tolist(), labels)) <= 1e-12


def test_silhouette_needs_two_clusters():
    with pytest.raises(ValidationError):
        silhouette_mean(np.zeros((4, 2)), [1, 1, 1, 1])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(3, 25), k=st.integers(2, 4))
def test_silhouette_matches_brute_force(seed, n, k):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    labels = rng.integers(0, k, n)
    labels[:2] = [0, 1]
    got = silhouette_mean(X, labels, chunk=4)
    assert -1.0 <= got <= 1.0
    assert abs(got - brute_silhouette(X.tolist(), labels.tolist())) <= 1e-12


def test_silhouette_agrees_with_sklearn():
    metrics = pytest.importorskip("sklearn.metrics")
    X, _, _ = make_blobs(5, n_per=60, sigma=0.3)
    labels = assign_nearest(kmeans_fit(X, 3, seed=0), X)
    assert abs(silhouette_mean(X, labels) - metrics.silhouette_score(X, labels)) <= 1e-12


def test_select_k_four_blobs_4d():
    X, _, _ = make_blobs(6, n_per=100, sigma=0.05, dim=4)
    report = select_k(X, seed=0)
    assert report.best_k == 4
    assert set(report.scores) == set(range(2, 8))
    assert all(-1 <= s <= 1 for s in report.scores.values())


def test_select_k_two_blobs():
    X, _, _ = make_blobs(7, n_per=100, sigma=0.05, centers=[[0, 0], [1, 1]])
    report = select_k(X, seed=0)
    assert report.best_k == 2
    assert report.scores[2] == max(report.scores.values())


def test_select_k_ties_prefer_smaller_k(monkeypatch):
    import mcdnn.clustering as cl

    monkeypatch.setattr(cl, "silhouette_mean", lambda X, labels, chunk=512: 0.5)
    X, _, _ = make_blobs(8, n_per=10)
    assert cl.select_k(X, n_init=1).best_k == 2


def test_select_k_preconditions():
    X = np.random.default_rng(0).normal(size=(7, 2))
    with pytest.raises(ValidationError):
        select_k(X)
    with pytest.raises(ValidationError):
        select_k(np.random.default_rng(0).normal(size=(50, 2)), kmax=1)


def test_select_k_subsamples_large_inputs():
    X, _, _ = make_blobs(9, n_per=400, sigma=0.05)
    full = select_k(X, seed=1, n_init=2, kmax=5)
    sub = select_k(X, seed=1, n_init=2, kmax=5, sample_size=300)
    assert full.best_k == sub.best_k == 4


def test_select_k_row_order_invariant():
    X, _, _ = make_blobs(10, n_per=50, sigma=0.05, dim=4)
    perm = np.random.default_rng(0).permutation(len(X))
    a = select_k(X, seed=2, kmax=5)
    b = select_k(X[perm], seed=2, kmax=5)
    assert a.best_k == b.best_k


def test_cluster_model_round_trip():
    m = kmeans_fit(make_blobs(11)[0], 4, seed=0, feature_ids=("a", "b"))
    back = ClusterModel.from_dict(m.to_dict())
    assert np.array_equal(back.centroids, m.centroids)
    assert (back.k, back.inertia, back.feature_ids) == (m.k, m.inertia, m.feature_ids)
