# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: single-source shortest paths and the SMO dual solver.

Both functions release the GIL, so callers may fan work out over threads.
Semantics match :mod:`libsmanifold._fallback` operation for operation.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()

ctypedef cnp.int64_t idx_t


cdef inline void _heap_push(double* keys, idx_t* vals, idx_t* size,
                            double key, idx_t val) noexcept nogil:
    cdef idx_t pos = size[0]
    cdef idx_t parent
    size[0] += 1
    while pos > 0:
        parent = (pos - 1) >> 1
        if keys[parent] < key or (keys[parent] == key and vals[parent] <= val):
            break
        keys[pos] = keys[parent]
        vals[pos] = vals[parent]
        pos = parent
    keys[pos] = key
    vals[pos] = val


cdef inline void _heap_pop(double* keys, idx_t* vals, idx_t* size,
                           double* key_out, idx_t* val_out) noexcept nogil:
    cdef idx_t n, pos, child
    cdef double last_key
    cdef idx_t last_val
    key_out[0] = keys[0]
    val_out[0] = vals[0]
    size[0] -= 1
    n = size[0]
    if n == 0:
        return
    last_key = keys[n]
    last_val = vals[n]
    pos = 0
    while True:
        child = 2 * pos + 1
        if child >= n:
            break
        if child + 1 < n and (keys[child + 1] < keys[child] or
                              (keys[child + 1] == keys[child] and vals[child + 1] < vals[child])):
            child += 1
        if last_key < keys[child] or (last_key == keys[child] and last_val <= vals[child]):
            break
        keys[pos] = keys[child]
        vals[pos] = vals[child]
        pos = child
    keys[pos] = last_key
    vals[pos] = last_val


def dijkstra_rows(const idx_t[::1] indptr, const idx_t[::1] indices,
                  const double[::1] weights, const idx_t[::1] sources,
                  double[:, ::1] out):
    """Fill ``out[r]`` with shortest-path lengths from ``sources[r]``.

    The graph is CSR (``indptr``, ``indices``, ``weights``); unreachable
    nodes get ``inf``. Zero-weight edges are honoured.
    """
    cdef idx_t n = indptr.shape[0] - 1
    cdef idx_t n_edges = indices.shape[0]
    cdef idx_t cap = n_edges + n + 1
    cdef idx_t r, s, u, v, e, size
    cdef double d, nd
    cdef double* keys
    cdef idx_t* vals
    cdef char* done

    if out.shape[0] != sources.shape[0] or out.shape[1] != n:
        raise ValueError("output buffer has the wrong shape")

    keys = <double*> malloc(cap * sizeof(double))
    vals = <idx_t*> malloc(cap * sizeof(idx_t))
    done = <char*> malloc(n * sizeof(char))
    if keys == NULL or vals == NULL or done == NULL:
        free(keys); free(vals); free(done)
        raise MemoryError()
    try:
        with nogil:
            for r in range(sources.shape[0]):
                s = sources[r]
                for u in range(n):
                    out[r, u] = INFINITY
                    done[u] = 0
                out[r, s] = 0.0
                size = 0
                _heap_push(keys, vals, &size, 0.0, s)
                while size > 0:
                    _heap_pop(keys, vals, &size, &d, &u)
                    if done[u]:
                        continue
                    done[u] = 1
                    for e in range(indptr[u], indptr[u + 1]):
                        v = indices[e]
                        if done[v]:
                            continue
                        nd = d + weights[e]
                        if nd < out[r, v]:
                            out[r, v] = nd
                            _heap_push(keys, vals, &size, nd, v)
    finally:
        free(keys)
        free(vals)
        free(done)


cdef inline bint _in_up(double y, double a, double C) noexcept nogil:
    return (y > 0 and a < C) or (y < 0 and a > 0)


cdef inline bint _in_low(double y, double a, double C) noexcept nogil:
    return (y > 0 and a > 0) or (y < 0 and a < C)


def smo_solve(const double[:, ::1] K, const double[::1] y, double C,
              double tol, idx_t max_iter, double[::1] alpha, double[::1] G,
              bint second_order=False, bint shrinking=False):
    """SMO on a precomputed kernel matrix.

    The first index is always the maximal violator. The second is the
    opposite-side maximal violator, or with ``second_order`` the candidate
    with the largest guaranteed decrease of the dual objective.
    With ``shrinking``, bounded variables that cannot take part in a
    violating pair are periodically set aside; their gradient entries are
    rebuilt from scratch before the final stopping test.
    ``alpha`` and ``G`` (gradient of the dual objective) are updated in
    place. Returns ``(iterations, gap)`` where ``gap`` is the final
    maximal KKT violation ``m(alpha) - M(alpha)`` over all variables.
    """
    cdef idx_t n = y.shape[0]
    cdef idx_t it = 0
    cdef idx_t p, q, t, i, j, n_act, counter, every
    cdef double gmax, gmin, v, gap, g
    cdef double qii, qjj, qij, quad, delta, diff, total
    cdef double ai, aj, old_ai, old_aj, dai, daj, yi, yj
    cdef double tau = 1e-12
    cdef double b, a, obj, obj_min
    cdef bint up, low, done
    cdef idx_t* act = <idx_t*> malloc((n + 1) * sizeof(idx_t))
    cdef char* on = <char*> malloc((n + 1) * sizeof(char))
    if act == NULL or on == NULL:
        free(act); free(on)
        raise MemoryError()
    for t in range(n):
        act[t] = t
        on[t] = 1
    n_act = n
    every = n if n < 1000 else 1000
    counter = every

    try:
        with nogil:
            while True:
                gmax = -INFINITY
                gmin = INFINITY
                i = -1
                j = -1
                for p in range(n_act):
                    t = act[p]
                    v = -y[t] * G[t]
                    if _in_up(y[t], alpha[t], C) and v > gmax:
                        gmax = v
                        i = t
                    if _in_low(y[t], alpha[t], C) and v < gmin:
                        gmin = v
                        j = t
                gap = gmax - gmin if (i >= 0 and j >= 0) else 0.0
                done = i < 0 or j < 0 or gap < tol or it >= max_iter
                if done and n_act < n:
                    # rebuild the set-aside gradient entries, then retest on everything
                    for t in range(n):
                        if on[t]:
                            continue
                        g = -1.0
                        for q in range(n):
                            if alpha[q] != 0:
                                g = g + (y[t] * y[q]) * K[t, q] * alpha[q]
                        G[t] = g
                        on[t] = 1
                    for t in range(n):
                        act[t] = t
                    n_act = n
                    counter = 1
                    continue
                if done:
                    break
                if shrinking:
                    counter -= 1
                    if counter == 0:
                        counter = every
                        q = 0
                        for p in range(n_act):
                            t = act[p]
                            v = -y[t] * G[t]
                            up = _in_up(y[t], alpha[t], C)
                            low = _in_low(y[t], alpha[t], C)
                            if (up and not low and v < gmin) or (low and not up and v > gmax):
                                on[t] = 0
                            else:
                                act[q] = t
                                q += 1
                        n_act = q
                it += 1
                if second_order:
                    obj_min = INFINITY
                    for p in range(n_act):
                        t = act[p]
                        if _in_low(y[t], alpha[t], C):
                            b = gmax + y[t] * G[t]
                            if b > 0:
                                a = K[i, i] + K[t, t] - 2.0 * K[i, t]
                                if a <= 0:
                                    a = tau
                                obj = -(b * b) / a
                                if obj < obj_min:
                                    obj_min = obj
                                    j = t

                yi = y[i]
                yj = y[j]
                qii = K[i, i]
                qjj = K[j, j]
                qij = (yi * yj) * K[i, j]
                old_ai = alpha[i]
                old_aj = alpha[j]
                ai = old_ai
                aj = old_aj
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
                            aj = 0.0
                            ai = diff
                    else:
                        if ai < 0:
                            ai = 0.0
                            aj = -diff
                    if diff > 0:
                        if ai > C:
                            ai = C
                            aj = C - diff
                    else:
                        if aj > C:
                            aj = C
                            ai = C + diff
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
                            ai = C
                            aj = total - C
                    else:
                        if aj < 0:
                            aj = 0.0
                            ai = total
                    if total > C:
                        if aj > C:
                            aj = C
                            ai = total - C
                    else:
                        if ai < 0:
                            ai = 0.0
                            aj = total
                alpha[i] = ai
                alpha[j] = aj
                dai = ai - old_ai
                daj = aj - old_aj
                for p in range(n_act):
                    t = act[p]
                    G[t] += (y[t] * yi) * K[t, i] * dai + (y[t] * yj) * K[t, j] * daj
    finally:
        free(act)
        free(on)
    return it, gap
