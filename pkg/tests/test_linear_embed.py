import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import pdist, squareform
from scipy.stats import pearsonr

from libsmanifold.linear_embed import (DistanceMatrix, EmbeddingError, cmds, euclidean_distances, pca,
                                       residual_variance)


def procrustes_residual(A, B):
    """Root-sum-square misfit after the best rigid motion (rotation/reflection + translation) of B onto A."""
    A = A - A.mean(0)
    B = B - B.mean(0)
    U, _, Vt = np.linalg.svd(B.T @ A)
    return float(np.linalg.norm(A - B @ (U @ Vt)))


def align_signs(A, B):
    s = np.sign(np.sum(A * B, axis=0))
    s[s == 0] = 1
    return B * s


def test_pca_line_in_10d():
    rng = np.random.default_rng(0)
    u = rng.normal(size=10)
    u /= np.linalg.norm(u)
    t = np.linspace(-3, 5, 30)
    X = t[:, None] * u + rng.normal(size=10)
    emb = pca(X, 1)
    np.testing.assert_allclose(emb.explained_variance, [1.0], atol=1e-12)
    arc = t - t.mean()
    assert min(np.abs(emb.coords[:, 0] - arc).max(), np.abs(emb.coords[:, 0] + arc).max()) < 1e-10


def test_pca_isotropic_symmetric_fixture():
    a = 1 / np.sqrt(2)
    X = np.array([[1, 0], [-1, 0], [0, 1], [0, -1], [a, a], [-a, -a], [a, -a], [-a, a]])
    oracle = np.linalg.eigvalsh(np.cov(X.T))[::-1]
    emb = pca(X, 2)
    np.testing.assert_allclose(emb.eigenvalues, oracle, atol=1e-12)
    np.testing.assert_allclose(emb.explained_variance, oracle / oracle.sum(), atol=1e-12)
    np.testing.assert_allclose(emb.explained_variance, [0.5, 0.5], atol=1e-12)


@pytest.mark.parametrize("shape", [(40, 6), (12, 50)])
def test_pca_eigenvalues_match_covariance_oracle(shape):
    rng = np.random.default_rng(sum(shape))
    X = rng.normal(size=shape) * rng.uniform(0.5, 3, size=shape[1])
    d = min(shape[0] - 1, shape[1])
    emb = pca(X, d)
    oracle = np.sort(np.linalg.eigvalsh(np.cov(X.T)))[::-1][:d]
    np.testing.assert_allclose(emb.eigenvalues[:d], oracle, rtol=1e-9, atol=1e-12)
    assert emb.meta["solver"] == ("gram" if shape[1] > shape[0] else "covariance")
    assert np.all(np.diff(emb.eigenvalues) <= 0)
    assert emb.explained_variance.sum() <= 1 + 1e-9


def test_gram_and_covariance_paths_agree():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(15, 20))
    wide = pca(X, 5)
    assert wide.meta["solver"] == "gram"
    Xc = X - X.mean(0)
    lam, V = np.linalg.eigh(Xc.T @ Xc / 14)
    V = V[:, ::-1][:, :5]
    ref = Xc @ V
    np.testing.assert_allclose(np.abs(wide.coords), np.abs(ref), atol=1e-9)


def test_pca_sign_convention_and_translation():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(25, 4))
    a = pca(X, 3)
    b = pca(X + np.array([100.0, -3.0, 7.0, 0.5]), 3)
    np.testing.assert_allclose(a.coords, b.coords, atol=1e-9)


def test_pca_full_rank_preserves_distances():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(10, 4))
    emb = pca(X, 4)
    np.testing.assert_allclose(pdist(emb.coords), pdist(X), atol=1e-8)


def test_pca_errors():
    with pytest.raises(EmbeddingError):
        pca(np.ones((5, 3)), 5)
    X = np.ones((5, 3))
    X[0, 0] = np.nan
    with pytest.raises(EmbeddingError):
        pca(X, 1)


def test_cmds_unit_square():
    P = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    emb = cmds(euclidean_distances(P), 2)
    assert procrustes_residual(P, emb.coords) < 1e-8


def test_cmds_zero_matrix():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        emb = cmds(DistanceMatrix(np.zeros((4, 4))), 2)
    assert np.all(emb.coords == 0) and np.all(emb.eigenvalues == 0)


def test_cmds_pca_duality():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(30, 5))
    p = pca(X, 5)
    c = cmds(euclidean_distances(X), 5)
    np.testing.assert_allclose(c.eigenvalues[:5], 29 * p.eigenvalues[:5], rtol=1e-9)
    np.testing.assert_allclose(align_signs(p.coords, c.coords), p.coords, atol=1e-8)


def test_cmds_recovers_distances_at_affine_rank():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(20, 3))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        emb = cmds(euclidean_distances(X), 3)
    np.testing.assert_allclose(pdist(emb.coords), pdist(X), atol=1e-8)


def test_cmds_non_euclidean_warns_and_clamps():
    D = np.array([[0, 1, 1, 5], [1, 0, 1, 1], [1, 1, 0, 1], [5, 1, 1, 0]], dtype=float)
    with pytest.warns(RuntimeWarning, match="negative eigenvalues"):
        emb = cmds(DistanceMatrix(D), 2)
    assert emb.meta["negative_eigenvalues_clamped"] >= 1
    assert np.all(emb.eigenvalues >= 0)
    assert emb.explained_variance.sum() <= 1 + 1e-12


def test_cmds_pads_when_rank_short():
    P = np.column_stack([np.arange(5.0), np.zeros(5)])
    with pytest.warns(RuntimeWarning, match="padding"):
        emb = cmds(euclidean_distances(P), 3)
    assert np.all(emb.coords[:, 1:] == 0)


def test_distance_matrix_validation():
    with pytest.raises(EmbeddingError):
        DistanceMatrix(np.array([[0, 1], [2, 0]]))
    with pytest.raises(EmbeddingError):
        DistanceMatrix(np.array([[1, 1], [1, 0]]))
    with pytest.raises(EmbeddingError):
        DistanceMatrix(np.array([[0, -1], [-1, 0]]))


def test_residual_variance_exact_reproduction_is_zero():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(15, 2))
    rv = residual_variance(euclidean_distances(X), X, [2])
    assert rv[2] < 1e-12


def test_residual_variance_against_pearson_oracle():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(25, 6))
    Dm = euclidean_distances(X)
    emb = cmds(Dm, 6)
    rv = residual_variance(Dm, emb, range(1, 7))
    for d in range(1, 7):
        r = pearsonr(pdist(X), pdist(emb.coords[:, :d]))[0]
        assert rv[d] == pytest.approx(1 - r * r, abs=1e-12)
    values = [rv[d] for d in range(1, 7)]
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(5, 25), st.integers(2, 6))
def test_residual_variance_bounds_and_full_rank(seed, N, D):
    # 1 - r^2 need not fall monotonically with d, but it is a fraction and vanishes at full affine rank
    X = np.random.default_rng(seed).normal(size=(N, D))
    Dm = euclidean_distances(X)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        emb = cmds(Dm, N - 1)
    full = min(N - 1, D)
    rv = residual_variance(Dm, emb, range(1, full + 1))
    assert all(0.0 <= v <= 1.0 for v in rv.values())
    assert rv[full] < 1e-9


def test_residual_variance_degenerate():
    P = np.array([[0.0, 0], [1, 0], [0.5, np.sqrt(3) / 2]])  # equilateral: constant distances
    with pytest.raises(EmbeddingError, match="constant"):
        residual_variance(euclidean_distances(P), P, [1])
