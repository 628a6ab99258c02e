"""PCA and classical MDS with explained- and residual-variance diagnostics."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform

_NEG_EIG_RTOL = 1e-10


class EmbeddingError(ValueError):
    pass


@dataclass(frozen=True)
class Embedding:
    """N x d coordinates plus the spectrum and diagnostics of the method that made them."""

    coords: np.ndarray
    method: str
    params: dict = field(default_factory=dict)
    eigenvalues: np.ndarray | None = None
    explained_variance: np.ndarray | None = None
    residual_variance: dict[int, float] | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def d(self) -> int:
        return self.coords.shape[1]

    def truncate(self, d: int) -> "Embedding":
        """Leading ``d`` columns; every method here produces nested embeddings."""
        if not 1 <= d <= self.d:
            raise EmbeddingError(f"cannot truncate a {self.d}-D embedding to d={d}")
        ev = None if self.explained_variance is None else self.explained_variance[:d]
        rv = None if self.residual_variance is None else {k: v for k, v in self.residual_variance.items() if k <= d}
        return Embedding(self.coords[:, :d], self.method, {**self.params, "d": d}, self.eigenvalues, ev, rv, self.meta)


@dataclass(frozen=True)
class DistanceMatrix:
    values: np.ndarray
    metric: str = "euclidean"

    def __post_init__(self):
        D = np.asarray(self.values, dtype=float)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise EmbeddingError("distance matrix must be square")
        if not np.all(np.isfinite(D)):
            raise EmbeddingError("distance matrix has non-finite entries")
        scale = max(1.0, float(np.abs(D).max())) if D.size else 1.0
        if np.abs(D - D.T).max(initial=0.0) > 1e-9 * scale:
            raise EmbeddingError("distance matrix is not symmetric")
        if np.any(np.diag(D) != 0):
            raise EmbeddingError("distance matrix has a non-zero diagonal")
        if np.any(D < 0):
            raise EmbeddingError("distance matrix has negative entries")
        D = 0.5 * (D + D.T)
        D.setflags(write=False)
        object.__setattr__(self, "values", D)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def condensed(self) -> np.ndarray:
        return squareform(self.values, checks=False)


def euclidean_distances(X) -> DistanceMatrix:
    X = np.asarray(X, dtype=float)
    return DistanceMatrix(squareform(pdist(X)), "euclidean")


def _check_finite(X: np.ndarray):
    if not np.all(np.isfinite(X)):
        raise EmbeddingError("input contains non-finite values")


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so each column's largest-magnitude entry is positive."""
    if vectors.size == 0:
        return np.ones(vectors.shape[1])
    pick = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pick, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def pca(X, d: int) -> Embedding:
    """Project column-centered ``X`` onto its top-``d`` covariance eigenvectors.

    Covariance uses 1/(N-1). When D > N the N x N Gram matrix is decomposed
    instead of the D x D covariance; both give the same scores.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise EmbeddingError("X must be 2-D")
    _check_finite(X)
    N, D = X.shape
    if not 1 <= d <= min(N - 1, D):
        raise EmbeddingError(f"d={d} outside [1, min(N-1, D)={min(N - 1, D)}]")
    Xc = X - X.mean(axis=0)
    total = float(np.sum(Xc * Xc)) / (N - 1)
    if D > N:
        mu, U = np.linalg.eigh(Xc @ Xc.T)
        mu, U = np.clip(mu[::-1], 0.0, None), U[:, ::-1]
        lam = mu / (N - 1)
        top = U[:, :d]
        root = np.sqrt(mu[:d])
        with np.errstate(divide="ignore", invalid="ignore"):
            loadings = np.where(root > 0, (Xc.T @ top) / np.where(root > 0, root, 1.0), 0.0)
        scores = top * root
        path = "gram"
    else:
        lam, V = np.linalg.eigh((Xc.T @ Xc) / (N - 1))
        lam, V = np.clip(lam[::-1], 0.0, None), V[:, ::-1]
        loadings = V[:, :d]
        scores = Xc @ loadings
        path = "covariance"
    signs = _fix_signs(loadings)
    coords = scores * signs
    ev = lam[:d] / total if total > 0 else np.zeros(d)
    return Embedding(
        coords=coords,
        method="pca",
        params={"d": d},
        eigenvalues=lam[: min(N, D)].copy(),
        explained_variance=ev,
        meta={"solver": path, "loadings_sign_rule": "largest |loading| positive", "total_variance": total},
    )


def double_center(D2: np.ndarray) -> np.ndarray:
    """-1/2 J D2 J with J the centering operator."""
    row = D2.mean(axis=1, keepdims=True)
    col = D2.mean(axis=0, keepdims=True)
    return -0.5 * (D2 - row - col + D2.mean())


def cmds(Dm: DistanceMatrix, d: int, method: str = "cmds") -> Embedding:
    """Classical MDS: top-``d`` eigenpairs of the double-centered squared distances.

    Negative eigenvalues are clamped to zero and left out of explained
    variance. If fewer than ``d`` eigenvalues are positive the extra columns
    are zero and a warning is issued.
    """
    if not isinstance(Dm, DistanceMatrix):
        Dm = DistanceMatrix(Dm)
    N = Dm.n
    if not 1 <= d <= N - 1:
        raise EmbeddingError(f"d={d} outside [1, N-1={N - 1}]")
    B = double_center(Dm.values ** 2)
    lam, V = np.linalg.eigh(B)
    lam, V = lam[::-1], V[:, ::-1]
    scale = float(np.abs(lam).max(initial=0.0))
    n_negative = int(np.count_nonzero(lam < -_NEG_EIG_RTOL * scale)) if scale > 0 else 0
    if n_negative:
        warnings.warn(f"cMDS: {n_negative} negative eigenvalues clamped to zero (non-Euclidean input)",
                      RuntimeWarning, stacklevel=2)
    lam = np.clip(lam, 0.0, None)
    positive = lam > _NEG_EIG_RTOL * scale if scale > 0 else np.zeros_like(lam, dtype=bool)
    n_pos = int(np.count_nonzero(positive))
    if d > n_pos:
        warnings.warn(f"cMDS: requested d={d} but only {n_pos} positive eigenvalues; padding with zeros",
                      RuntimeWarning, stacklevel=2)
    top = V[:, :d] * _fix_signs(V[:, :d])
    coords = top * np.sqrt(np.where(positive[:d], lam[:d], 0.0))
    pos_total = float(lam[positive].sum())
    ev = np.where(positive[:d], lam[:d], 0.0) / pos_total if pos_total > 0 else np.zeros(d)
    return Embedding(
        coords=coords,
        method=method,
        params={"d": d},
        eigenvalues=lam,
        explained_variance=ev,
        meta={"metric": Dm.metric, "negative_eigenvalues_clamped": n_negative,
              "explained_variance_denominator": "positive eigenvalues only"},
    )


def residual_variance(Dm: DistanceMatrix, emb: Embedding | np.ndarray, dims) -> dict[int, float]:
    """1 - r^2 between reference distances and Euclidean distances in the first d coordinates."""
    if not isinstance(Dm, DistanceMatrix):
        Dm = DistanceMatrix(Dm)
    coords = emb.coords if isinstance(emb, Embedding) else np.asarray(emb, dtype=float)
    dims = [int(x) for x in dims]
    if not dims:
        return {}
    if max(dims) > coords.shape[1] or min(dims) < 1:
        raise EmbeddingError(f"embedding has {coords.shape[1]} columns; requested dims {dims}")
    if coords.shape[0] != Dm.n:
        raise EmbeddingError("embedding and distance matrix disagree on N")
    ref = Dm.condensed()
    if ref.size < 2 or np.ptp(ref) <= 1e-12 * np.abs(ref).max():
        raise EmbeddingError("reference distances are constant; correlation undefined")
    out = {}
    for d in dims:
        emb_d = pdist(coords[:, :d])
        if np.ptp(emb_d) <= 1e-12 * np.abs(emb_d).max():
            raise EmbeddingError(f"embedding distances at d={d} are constant; correlation undefined")
        r = np.corrcoef(ref, emb_d)[0, 1]
        out[d] = float(max(0.0, 1.0 - r * r))
    return out
