"""k-means with careful seeding and the Davies-Bouldin index."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np


class ClusteringError(ValueError):
    pass


@dataclass
class ClusterReport:
    n_clusters: int
    assignments: np.ndarray
    centroids: np.ndarray
    within_scatter: np.ndarray
    objective: float
    seed: int
    restarts: int
    iterations: int
    objective_history: list[float] = field(default_factory=list)
    dbi: float | None = None
    meta: dict = field(default_factory=lambda: {"dbi_q": 1, "dbi_p": 2, "init": "k-means++"})


def _sqdist(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _plus_plus(X: np.ndarray, n_clusters: int, rng: np.random.Generator) -> np.ndarray:
    N = X.shape[0]
    centers = [int(rng.integers(N))]
    closest = ((X - X[centers[0]]) ** 2).sum(1)
    for _ in range(1, n_clusters):
        total = closest.sum()
        if total > 0:
            nxt = int(rng.choice(N, p=closest / total))
        else:
            # every point sits on a center already; take the first unused index
            used = set(centers)
            nxt = next(i for i in range(N) if i not in used)
        centers.append(nxt)
        closest = np.minimum(closest, ((X - X[nxt]) ** 2).sum(1))
    return X[centers].copy()


def _repair_empty(X, labels, centroids, n_clusters):
    """Give each empty cluster the farthest member of the currently largest cluster."""
    counts = np.bincount(labels, minlength=n_clusters)
    for c in np.flatnonzero(counts == 0):
        big = int(np.argmax(counts))
        members = np.flatnonzero(labels == big)
        far = members[int(np.argmax(((X[members] - centroids[big]) ** 2).sum(1)))]
        labels[far] = c
        centroids[c] = X[far]
        counts[big] -= 1
        counts[c] += 1
        centroids[big] = X[labels == big].mean(0)
    return labels, centroids


def _objective(X, labels, centroids) -> float:
    return float(((X - centroids[labels]) ** 2).sum())


def _lloyd(X, n_clusters, rng, max_iter):
    centroids = _plus_plus(X, n_clusters, rng)
    labels = np.argmin(_sqdist(X, centroids), axis=1)
    labels, centroids = _repair_empty(X, labels, centroids, n_clusters)
    history = [_objective(X, labels, centroids)]
    it = 0
    while it < max_iter:
        it += 1
        centroids = np.vstack([X[labels == c].mean(0) for c in range(n_clusters)])
        after_update = _objective(X, labels, centroids)
        new = np.argmin(_sqdist(X, centroids), axis=1)
        # keep current assignment on exact ties so the loop terminates
        cur = ((X - centroids[labels]) ** 2).sum(1)
        best = ((X - centroids[new]) ** 2).sum(1)
        new = np.where(best < cur, new, labels)
        new, centroids = _repair_empty(X, new, centroids, n_clusters)
        obj = _objective(X, new, centroids)
        slack = 1e-9 * max(history[-1], 1e-300)
        if after_update > history[-1] + slack or obj > after_update + slack:
            raise ClusteringError(f"k-means objective increased at iteration {it}")
        history.append(obj)
        if np.array_equal(new, labels):
            labels = new
            break
        labels = new
    centroids = np.vstack([X[labels == c].mean(0) for c in range(n_clusters)])
    return labels, centroids, _objective(X, labels, centroids), it, history


def kmeans(emb, n_clusters: int, seed: int = 0, restarts: int = 10, max_iter: int = 300,
           threads: int = 1) -> ClusterReport:
    """Best of ``restarts`` seeded Lloyd runs by total within-cluster squared distance.

    Restart r draws from ``SeedSequence(seed).spawn(restarts)[r]``; ties on
    the objective go to the lower restart index, so results do not depend
    on ``threads``.
    """
    X = np.asarray(getattr(emb, "coords", emb), dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    N = X.shape[0]
    if not 1 <= n_clusters <= N:
        raise ClusteringError(f"n_clusters={n_clusters} outside [1, N={N}]")
    seqs = np.random.SeedSequence(seed).spawn(restarts)

    def run(ss):
        return _lloyd(X, n_clusters, np.random.default_rng(ss), max_iter)

    if threads > 1 and restarts > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, seqs))
    else:
        results = [run(ss) for ss in seqs]
    best = min(range(restarts), key=lambda r: (results[r][2], r))
    labels, centroids, obj, iters, history = results[best]
    scatter = np.array([
        np.linalg.norm(X[labels == c] - centroids[c], axis=1).mean() for c in range(n_clusters)
    ])
    return ClusterReport(n_clusters, labels, centroids, scatter, obj, seed, restarts, iters, history)


def davies_bouldin(emb, assignments) -> float:
    """Mean over clusters of the worst (S_i + S_j) / M_ij.

    S_i is the mean Euclidean distance of cluster members to their centroid;
    M_ij the Euclidean distance between centroids.
    """
    X = np.asarray(getattr(emb, "coords", emb), dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    labels = np.asarray(assignments)
    ids = np.unique(labels)
    if ids.size < 2:
        raise ClusteringError("Davies-Bouldin index needs at least two non-empty clusters")
    cents = np.vstack([X[labels == c].mean(0) for c in ids])
    S = np.array([np.linalg.norm(X[labels == c] - cents[m], axis=1).mean() for m, c in enumerate(ids)])
    worst = np.empty(ids.size)
    for a in range(ids.size):
        best = -np.inf
        for b in range(ids.size):
            if a == b:
                continue
            M = float(np.linalg.norm(cents[a] - cents[b]))
            if M == 0:
                raise ClusteringError(f"clusters {ids[a]} and {ids[b]} have coincident centroids")
            best = max(best, (S[a] + S[b]) / M)
        worst[a] = best
    return float(worst.mean())


@dataclass
class DbiRow:
    method: str
    k: int | None
    d: int
    n_clusters: int
    dbi: float | None
    error: str | None = None
    report: ClusterReport | None = None


def dbi_sweep(embeddings, cluster_range, dims, seed: int = 0, restarts: int = 10,
              threads: int = 1) -> list[DbiRow]:
    """k-means + DBI for every (embedding, d, n_clusters).

    ``embeddings`` is an iterable of ``(method, k, Embedding-or-array)``;
    ``k`` may be None for linear methods. Failing cells carry an error.
    """
    cluster_range, dims = list(cluster_range), list(dims)
    if not cluster_range or not dims:
        raise ValueError("cluster_range and dims must be non-empty")
    jobs = []
    for method, k, emb in embeddings:
        coords = np.asarray(getattr(emb, "coords", emb), dtype=float)
        for d in dims:
            for nc in cluster_range:
                jobs.append((method, k, coords, int(d), int(nc)))

    def run(job):
        method, k, coords, d, nc = job
        try:
            if d > coords.shape[1]:
                raise ClusteringError(f"embedding has {coords.shape[1]} dims, requested {d}")
            rep = kmeans(coords[:, :d], nc, seed=seed, restarts=restarts)
            rep.dbi = davies_bouldin(coords[:, :d], rep.assignments)
            return DbiRow(method, k, d, nc, rep.dbi, None, rep)
        except (ClusteringError, ValueError) as exc:
            return DbiRow(method, k, d, nc, None, str(exc))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, jobs))
    return [run(j) for j in jobs]
