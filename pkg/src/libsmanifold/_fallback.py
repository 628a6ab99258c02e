"""Pure-Python implementations of the compiled kernels in ``_kernels.pyx``.

Used when the extension is unavailable or when ``LIBSMANIFOLD_PURE=1``.
"""
from __future__ import annotations

import heapq
import math

import numpy as np


def dijkstra_rows(indptr, indices, weights, sources, out):
    n = len(indptr) - 1
    if out.shape != (len(sources), n):
        raise ValueError("output buffer has the wrong shape")
    ptr = indptr.tolist()
    nbr = indices.tolist()
    wts = weights.tolist()
    for r, s in enumerate(sources.tolist()):
        dist = [math.inf] * n
        done = [False] * n
        dist[s] = 0.0
        heap = [(0.0, s)]
        while heap:
            d, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            for e in range(ptr[u], ptr[u + 1]):
                v = nbr[e]
                if done[v]:
                    continue
                nd = d + wts[e]
                if nd < dist[v]:
                    dist[v] = nd
                    heapq.heappush(heap, (nd, v))
        out[r, :] = dist


def smo_solve(K, y, C, tol, max_iter, alpha, G, second_order=False, shrinking=False):
    tau = 1e-12
    n = y.size
    it = 0
    pos = y > 0
    neg = ~pos
    diagK = np.diag(K).copy()
    act = np.arange(n)
    every = n if n < 1000 else 1000
    counter = every
    while True:
        ya, aa = y[act], alpha[act]
        v = -ya * G[act]
        up = (pos[act] & (aa < C)) | (neg[act] & (aa > 0))
        low = (pos[act] & (aa > 0)) | (neg[act] & (aa < C))
        empty = not up.any() or not low.any()
        if not empty:
            pi = int(np.argmax(np.where(up, v, -np.inf)))
            pj = int(np.argmin(np.where(low, v, np.inf)))
            gmax, gmin = v[pi], v[pj]
            i, j = int(act[pi]), int(act[pj])
        gap = 0.0 if empty else float(gmax - gmin)
        done = empty or gap < tol or it >= max_iter
        if done and act.size < n:
            off = np.ones(n, dtype=bool)
            off[act] = False
            g = np.full(n, -1.0)
            for q in np.flatnonzero(alpha != 0):
                g += (y * y[q]) * K[:, q] * alpha[q]
            G[off] = g[off]
            act = np.arange(n)
            counter = 1
            continue
        if done:
            break
        if shrinking:
            counter -= 1
            if counter == 0:
                counter = every
                drop = (up & ~low & (v < gmin)) | (low & ~up & (v > gmax))
                act = act[~drop]
        it += 1
        if second_order:
            ya, aa = y[act], alpha[act]
            low = (pos[act] & (aa > 0)) | (neg[act] & (aa < C))
            b = gmax + ya * G[act]
            a = K[i, i] + diagK[act] - 2.0 * K[i, act]
            a = np.where(a <= 0, tau, a)
            obj = np.where(low & (b > 0), -(b * b) / a, np.inf)
            j = int(act[int(np.argmin(obj))])

        yi, yj = y[i], y[j]
        qii, qjj = K[i, i], K[j, j]
        qij = (yi * yj) * K[i, j]
        old_ai, old_aj = alpha[i], alpha[j]
        ai, aj = old_ai, old_aj
        if yi != yj:
            quad = qii + qjj + 2.0 * qij
            if quad <= 0:
                quad = tau
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            quad = qii + qjj - 2.0 * qij
            if quad <= 0:
                quad = tau
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            ai -= delta
            aj += delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i] = ai
        alpha[j] = aj
        ya = y[act]
        G[act] += (ya * yi) * K[act, i] * (ai - old_ai) + (ya * yj) * K[act, j] * (aj - old_aj)
    return it, gap
