"""Compiled core against the pure-Python fallback, and both against simple oracles."""
import os

import numpy as np
import pytest
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from libsmanifold import BACKEND, _fallback
from libsmanifold.manifold_embed import knn_graph

kernels = pytest.importorskip("libsmanifold._kernels")
SOLVERS = [kernels.smo_solve, _fallback.smo_solve]
DIJKSTRA = [kernels.dijkstra_rows, _fallback.dijkstra_rows]


@pytest.mark.skipif(os.environ.get("LIBSMANIFOLD_PURE") == "1", reason="fallback forced")
def test_compiled_backend_selected():
    assert BACKEND == "cython"


@pytest.mark.parametrize("dijkstra", DIJKSTRA)
def test_dijkstra_matches_scipy(dijkstra):
    X = np.random.default_rng(0).normal(size=(70, 3))
    g = knn_graph(X, 4)
    indptr, indices, weights = g.csr()
    out = np.empty((70, 70))
    dijkstra(indptr, indices, weights, np.arange(70, dtype=np.int64), out)
    ref = shortest_path(csr_matrix((weights, indices, indptr), shape=(70, 70)), directed=False)
    np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("dijkstra", DIJKSTRA)
def test_dijkstra_unreachable_is_inf(dijkstra):
    indptr = np.array([0, 1, 2, 2], dtype=np.int64)
    indices = np.array([1, 0], dtype=np.int64)
    out = np.empty((1, 3))
    dijkstra(indptr, indices, np.array([0.5, 0.5]), np.array([0], dtype=np.int64), out)
    assert out.tolist() == [[0.0, 0.5, np.inf]]
    with pytest.raises(ValueError):
        dijkstra(indptr, indices, np.array([0.5, 0.5]), np.array([0], dtype=np.int64), np.empty((2, 3)))


def test_dijkstra_backends_identical():
    X = np.random.default_rng(1).normal(size=(50, 5))
    indptr, indices, weights = knn_graph(X, 3).csr()
    src = np.arange(50, dtype=np.int64)
    a, b = np.empty((50, 50)), np.empty((50, 50))
    kernels.dijkstra_rows(indptr, indices, weights, src, a)
    _fallback.dijkstra_rows(indptr, indices, weights, src, b)
    assert np.array_equal(a, b)


def _problem(seed, n=80, degree=3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    y = np.where(X[:, 0] + 0.5 * rng.normal(size=n) > 0, 1.0, -1.0)
    return np.ascontiguousarray((X @ X.T) ** degree), y


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("second_order,shrinking", [(False, False), (True, False), (True, True)])
def test_smo_backends_identical(seed, second_order, shrinking):
    K, y = _problem(seed, n=60 + 30 * seed)
    results = []
    for solve in SOLVERS:
        alpha, G = np.zeros(y.size), -np.ones(y.size)
        it, gap = solve(K, y, 1.0, 1e-3, 10 ** 6, alpha, G, second_order, shrinking)
        results.append((it, gap, alpha, G))
    (i1, g1, a1, G1), (i2, g2, a2, G2) = results
    assert (i1, g1) == (i2, g2)
    assert np.array_equal(a1, a2) and np.array_equal(G1, G2)
    assert g1 < 1e-3


@pytest.mark.parametrize("solve", SOLVERS)
def test_smo_final_gradient_exact_after_shrinking(solve):
    K, y = _problem(7, n=150, degree=5)
    alpha, G = np.zeros(y.size), -np.ones(y.size)
    solve(K, y, 1.0, 1e-3, 10 ** 7, alpha, G, True, True)
    exact = (y[:, None] * y[None, :] * K) @ alpha - 1.0
    np.testing.assert_allclose(G, exact, rtol=1e-6, atol=1e-6 * np.abs(K).max())
    assert np.all((alpha >= 0) & (alpha <= 1.0))
    assert abs(alpha @ y) < 1e-9
