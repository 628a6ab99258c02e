import numpy as np
import pytest

from libsmanifold.cluster_eval import ClusteringError, davies_bouldin, dbi_sweep, kmeans

HAND = np.array([[0.0, 0.0], [0.0, 2.0], [10.0, 0.0], [10.0, 2.0]])
HAND_LABELS = np.array([0, 0, 1, 1])


def blobs(seed=0, per=40, spread=0.3):
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 0.0], [20.0, 0.0], [0.0, 20.0], [20.0, 20.0]])
    X = np.vstack([c + spread * rng.normal(size=(per, 2)) for c in centers])
    return X, np.repeat(np.arange(4), per), centers


def same_partition(a, b):
    """Partitions agree up to relabelling."""
    pairs = set(zip(np.asarray(a).tolist(), np.asarray(b).tolist()))
    return len(pairs) == len(set(a.tolist())) == len(set(b.tolist()))


def test_dbi_hand_case():
    assert davies_bouldin(HAND, HAND_LABELS) == pytest.approx(0.2, abs=1e-12)


@pytest.mark.parametrize("t", [1.0, 2.0, 10.0])
def test_dbi_inverse_in_separation(t):
    X = HAND.copy()
    X[2:, 0] *= t
    assert davies_bouldin(X, HAND_LABELS) == pytest.approx(0.2 / t, abs=1e-12)


def test_dbi_permuted_labels_worse():
    X, truth, _ = blobs()
    good = davies_bouldin(X, truth)
    shuffled = np.random.default_rng(1).permutation(truth)
    assert davies_bouldin(X, shuffled) > good


def test_dbi_errors():
    with pytest.raises(ClusteringError):
        davies_bouldin(HAND, [0, 0, 0, 0])
    X = np.array([[0.0], [2.0], [1.0], [1.0]])
    with pytest.raises(ClusteringError, match="coincident"):
        davies_bouldin(X, [0, 0, 1, 1])


def test_kmeans_recovers_blobs():
    X, truth, centers = blobs()
    rep = kmeans(X, 4, seed=0, restarts=10)
    # oracle: nearest true center
    oracle = np.argmin(((X[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)
    assert same_partition(rep.assignments, oracle)
    assert same_partition(rep.assignments, truth)
    hist = rep.objective_history
    assert all(b <= a * (1 + 1e-9) for a, b in zip(hist, hist[1:]))


def test_kmeans_singletons_have_zero_scatter():
    X = np.random.default_rng(2).normal(size=(7, 3))
    rep = kmeans(X, 7, restarts=2)
    assert sorted(rep.assignments.tolist()) == list(range(7))
    assert np.all(rep.within_scatter == 0) and rep.objective == 0


def test_kmeans_deterministic_across_threads():
    X, _, _ = blobs(3, spread=4.0)
    a = kmeans(X, 5, seed=9, restarts=6, threads=1)
    b = kmeans(X, 5, seed=9, restarts=6, threads=3)
    assert np.array_equal(a.assignments, b.assignments)
    assert a.objective == b.objective


def test_kmeans_duplicate_points_no_empty_clusters():
    X = np.vstack([np.zeros((6, 2)), np.ones((2, 2))])
    rep = kmeans(X, 3, restarts=3)
    assert np.all(np.bincount(rep.assignments, minlength=3) > 0)


def test_kmeans_bad_cluster_count():
    with pytest.raises(ClusteringError):
        kmeans(np.zeros((3, 2)), 4)


def test_dbi_sweep_cells():
    X, _, _ = blobs()
    rows = dbi_sweep([("pca", None, X), ("iso", 8, X[:, :1])], [2, 4], [1, 2], restarts=3)
    assert len(rows) == 8
    bad = [r for r in rows if r.error]
    assert {(r.method, r.d) for r in bad} == {("iso", 2)}
    assert all(r.dbi is None for r in bad)
    assert all(r.dbi > 0 for r in rows if not r.error)
