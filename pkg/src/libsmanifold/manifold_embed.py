"""k-NN graphs, geodesic distances, ISOMAP, LLE and neighborhood-size sweeps."""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import pdist, squareform

from . import _backend
from .linear_embed import DistanceMatrix, Embedding, EmbeddingError, _fix_signs, cmds, residual_variance


class DisconnectedGraphError(EmbeddingError):
    """The k-NN graph has more than one connected component."""

    def __init__(self, k: int, component_sizes: list[int]):
        self.k = k
        self.component_sizes = component_sizes
        super().__init__(
            f"k={k} neighborhood graph is disconnected: {len(component_sizes)} components "
            f"of sizes {component_sizes}"
        )

    @property
    def component_count(self) -> int:
        return len(self.component_sizes)


@dataclass(frozen=True)
class NeighborhoodGraph:
    """Union-symmetrized k-NN graph.

    ``edges`` holds each undirected edge once as (i, j) with i < j;
    ``neighbors`` holds the directed k nearest neighbors of every node.
    """

    n_nodes: int
    k: int
    edges: np.ndarray
    weights: np.ndarray
    neighbors: np.ndarray
    components: np.ndarray
    component_count: int
    symmetrization: str = "union"

    @property
    def connected(self) -> bool:
        return self.component_count == 1

    @property
    def component_sizes(self) -> list[int]:
        return np.bincount(self.components, minlength=self.component_count).tolist()

    def csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Both edge directions as (indptr, indices, weights); zero weights kept."""
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        w = np.concatenate([self.weights, self.weights])
        order = np.lexsort((dst, src))
        src, dst, w = src[order], dst[order], w[order]
        indptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=self.n_nodes), out=indptr[1:])
        return indptr, dst.astype(np.int64), np.ascontiguousarray(w, dtype=float)

    def degree(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n_nodes)


@dataclass(frozen=True)
class ReconstructionWeights:
    W: sp.csr_matrix
    k: int
    reg_scale: float
    neighbors: np.ndarray


def _check_k(k: int, N: int):
    if not 1 <= k <= N - 1:
        raise EmbeddingError(f"k={k} outside [1, N-1={N - 1}]")


def _nearest(X: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    D = squareform(pdist(X))
    np.fill_diagonal(D, np.inf)
    # stable sort: equal distances resolved by smaller index
    nbrs = np.argsort(D, axis=1, kind="stable")[:, :k]
    return nbrs, np.take_along_axis(D, nbrs, axis=1)


def knn_graph(X, k: int) -> NeighborhoodGraph:
    """Directed Euclidean k-NN, symmetrized by union, with component census."""
    X = np.asarray(X, dtype=float)
    N = X.shape[0]
    _check_k(k, N)
    nbrs, dist = _nearest(X, k)
    i = np.repeat(np.arange(N), k)
    j = nbrs.ravel()
    w = dist.ravel()
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    keys, first = np.unique(lo * N + hi, return_index=True)
    edges = np.column_stack([keys // N, keys % N]).astype(np.int64)
    weights = w[first]
    adj = sp.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(N, N))
    count, raw = connected_components(adj, directed=False)
    # relabel components by first appearance so labels are canonical
    _, first_seen = np.unique(raw, return_index=True)
    relabel = np.empty(count, dtype=np.int64)
    relabel[np.argsort(first_seen)] = np.arange(count)
    return NeighborhoodGraph(N, k, edges, weights, nbrs, relabel[raw], int(count))


def geodesic_distances(g: NeighborhoodGraph, threads: int = 1) -> DistanceMatrix:
    """All-pairs shortest paths over the graph, one priority-queue search per source."""
    if not g.connected:
        raise DisconnectedGraphError(g.k, g.component_sizes)
    indptr, indices, weights = g.csr()
    N = g.n_nodes
    out = np.empty((N, N))
    chunks = [c for c in np.array_split(np.arange(N, dtype=np.int64), max(1, threads)) if c.size]

    def run(sources: np.ndarray):
        buf = np.empty((sources.size, N))
        _backend.dijkstra_rows(indptr, indices, weights, sources, buf)
        out[sources[0]: sources[-1] + 1] = buf

    if len(chunks) == 1:
        run(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            list(pool.map(run, chunks))
    geo = np.minimum(out, out.T)
    np.fill_diagonal(geo, 0.0)
    return DistanceMatrix(geo, "geodesic")


def isomap(X, k: int, d: int, threads: int = 1) -> Embedding:
    """cMDS on geodesic distances of the k-NN graph; residual variance against those geodesics."""
    g = knn_graph(X, k)
    geo = geodesic_distances(g, threads=threads)
    if not 1 <= d <= g.n_nodes - 1:
        raise EmbeddingError(f"d={d} outside [1, N-1={g.n_nodes - 1}]")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        base = cmds(geo, d, method="isomap")
    for w in caught:
        if "negative eigenvalues" not in str(w.message):
            warnings.warn(w.message, w.category, stacklevel=2)
    rv = residual_variance(geo, base, range(1, d + 1))
    return Embedding(
        coords=base.coords,
        method="isomap",
        params={"k": k, "d": d},
        eigenvalues=base.eigenvalues,
        explained_variance=base.explained_variance,
        residual_variance=rv,
        meta={**base.meta, "symmetrization": g.symmetrization,
              "shortest_paths": "per-source binary-heap Dijkstra",
              "residual_reference": "geodesic", "backend": _backend.BACKEND},
    )


def lle_weights(X, k: int, reg_scale: float = 1e-3, neighbors: np.ndarray | None = None) -> ReconstructionWeights:
    """Sum-to-one weights reconstructing each point from its k nearest neighbors.

    The local Gram matrix gets ``reg_scale * trace / k`` added to its
    diagonal (``reg_scale`` alone when the trace is zero), which keeps the
    system solvable when k exceeds the local dimension.
    """
    X = np.asarray(X, dtype=float)
    N = X.shape[0]
    _check_k(k, N)
    nbrs = _nearest(X, k)[0] if neighbors is None else np.asarray(neighbors)
    rows = np.empty((N, k))
    ones = np.ones(k)
    for i in range(N):
        Z = X[nbrs[i]] - X[i]
        C = Z @ Z.T
        tr = np.trace(C)
        C.flat[:: k + 1] += reg_scale * tr / k if tr > 0 else reg_scale
        w = scipy.linalg.solve(C, ones, assume_a="pos")
        rows[i] = w / w.sum()
    W = sp.csr_matrix((rows.ravel(), nbrs.ravel(), np.arange(0, N * k + 1, k)), shape=(N, N))
    return ReconstructionWeights(W, k, reg_scale, nbrs)


def lle(X, k: int, d: int, reg_scale: float = 1e-3) -> Embedding:
    """Bottom eigenvectors of (I-W)^T (I-W), skipping the constant one, scaled by sqrt(N)."""
    X = np.asarray(X, dtype=float)
    N = X.shape[0]
    _check_k(k, N)
    if not 1 <= d <= N - 2:
        raise EmbeddingError(f"d={d} outside [1, N-2={N - 2}]")
    g = knn_graph(X, k)
    if not g.connected:
        warnings.warn(f"LLE: k={k} graph has {g.component_count} components; embedding may be degenerate",
                      RuntimeWarning, stacklevel=2)
    rw = lle_weights(X, k, reg_scale, neighbors=g.neighbors)
    IW = (sp.identity(N, format="csr") - rw.W).toarray()
    M = IW.T @ IW
    try:
        lam0, bottom = scipy.linalg.eigh(M, subset_by_index=[0, 0])
        # W rows sum to 1, so M annihilates the constant vector exactly. Solve in its
        # orthogonal complement (Householder basis) so near-null directions cannot mix with it.
        u = np.full(N, 1.0 / np.sqrt(N))
        u[0] -= 1.0
        u /= np.linalg.norm(u)
        Mu = M @ u
        HMH = M - 2.0 * np.outer(u, Mu) - 2.0 * np.outer(Mu, u) + 4.0 * (u @ Mu) * np.outer(u, u)
        mu, U = scipy.linalg.eigh(HMH[1:, 1:], subset_by_index=[0, d - 1])
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise EmbeddingError(f"LLE eigensolver failed: {exc}") from exc
    bottom = bottom[:, 0]
    cosine = abs(bottom.sum()) / (np.sqrt(N) * np.linalg.norm(bottom))
    scale = max(float(np.abs(M).max()), 1e-300)
    if lam0[0] > 1e-8 * scale:
        warnings.warn(f"LLE: bottom eigenvalue {lam0[0]:.3e} is not numerically zero", RuntimeWarning, stacklevel=2)
    vecs = np.vstack([np.zeros((1, d)), U]) - 2.0 * np.outer(u, u[1:] @ U)
    lam = np.concatenate([lam0, mu])
    coords = vecs * _fix_signs(vecs) * np.sqrt(N)
    return Embedding(
        coords=coords,
        method="lle",
        params={"k": k, "d": d, "reg_scale": reg_scale},
        eigenvalues=lam[: d + 1].copy(),
        meta={"bottom_eigenvalue": float(lam[0]), "bottom_cosine_to_ones": float(cosine),
              "connected": g.connected, "component_count": g.component_count},
    )


@dataclass
class SweepCell:
    method: str
    k: int
    d: int
    connected: bool
    component_count: int
    residual_variance: float | None = None
    eigenvalues: list[float] = field(default_factory=list)
    embedding: Embedding | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _embed_for_k(X, method: str, k: int, dmax: int, threads: int, reg_scale: float):
    """Return (graph census, embedding or None, error or None) for one neighborhood size."""
    N = X.shape[0]
    try:
        _check_k(k, N)
    except EmbeddingError as exc:
        return False, 0, None, str(exc)
    g = knn_graph(X, k)
    if method == "isomap":
        if not g.connected:
            return False, g.component_count, None, str(DisconnectedGraphError(k, g.component_sizes))
        try:
            return True, 1, isomap(X, k, min(dmax, N - 1), threads=threads), None
        except EmbeddingError as exc:
            return True, 1, None, str(exc)
    if method == "lle":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            try:
                emb = lle(X, k, min(dmax, N - 2), reg_scale=reg_scale)
            except EmbeddingError as exc:
                return g.connected, g.component_count, None, str(exc)
        if not g.connected:
            return False, g.component_count, emb, str(DisconnectedGraphError(k, g.component_sizes))
        return True, 1, emb, None
    raise ValueError(f"unknown manifold method {method!r}")


def neighborhood_sweep(X, k_values, d_values, method: str, threads: int = 1,
                       reg_scale: float = 1e-3) -> list[SweepCell]:
    """One cell per (k, d), in the given k order then d order.

    Each k is embedded once at the largest requested d and truncated, since
    both methods produce nested coordinates. Disconnected graphs and other
    per-cell failures are recorded on the cell and never stop the sweep.
    """
    X = np.asarray(X, dtype=float)
    k_values, d_values = list(k_values), list(d_values)
    if not k_values or not d_values:
        raise ValueError("k_values and d_values must be non-empty")
    if method not in ("isomap", "lle"):
        raise ValueError(f"unknown manifold method {method!r}")
    dmax = max(d_values)
    cells = []
    for k in k_values:
        connected, ncomp, emb, err = _embed_for_k(X, method, int(k), dmax, threads, reg_scale)
        for d in d_values:
            cell = SweepCell(method, int(k), int(d), connected, ncomp, error=err)
            if emb is not None and err is None:
                if d > emb.d:
                    cell.error = f"d={d} exceeds available dimensions {emb.d}"
                else:
                    cell.embedding = emb.truncate(d)
                    if emb.residual_variance is not None:
                        cell.residual_variance = emb.residual_variance[d]
                    cell.eigenvalues = [float(v) for v in emb.eigenvalues[: max(d_values) + 1]]
            cells.append(cell)
    return cells
