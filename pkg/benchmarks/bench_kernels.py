"""Compiled core vs pure-Python fallback on the two hot kernels.

    python benchmarks/bench_kernels.py [--n 400] [--k 10] [--repeat 3]

Both backends run the same inputs; the script checks that outputs agree
bit for bit before reporting timings.
"""
import argparse
import time

import numpy as np

from libsmanifold import _fallback
from libsmanifold.manifold_embed import knn_graph
from libsmanifold.synthetic import make_swiss_roll

try:
    from libsmanifold import _kernels
except ImportError:  # extension not built
    _kernels = None


def best_of(repeat, fn):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_dijkstra(n, k, repeat):
    X, _ = make_swiss_roll(n, seed=0)
    indptr, indices, weights = knn_graph(X, k).csr()
    src = np.arange(n, dtype=np.int64)

    def run(mod):
        out = np.empty((n, n))
        mod.dijkstra_rows(indptr, indices, weights, src, out)
        return out

    return {name: best_of(repeat, lambda m=mod: run(m)) for name, mod in backends()}


def bench_smo(n, repeat):
    rng = np.random.default_rng(1)
    X = rng.normal(size=(n, 2))
    # overlapping classes under a quartic kernel: many bounded multipliers, slow convergence
    y = np.where(X[:, 0] * X[:, 1] + 1.0 * rng.normal(size=n) > 0, 1.0, -1.0)
    K = np.ascontiguousarray((X @ X.T) ** 4)

    def run(mod):
        alpha, G = np.zeros(n), -np.ones(n)
        it, gap = mod.smo_solve(K, y, 1.0, 1e-3, 10 ** 7, alpha, G, True, True)
        return alpha, it

    return {name: best_of(repeat, lambda m=mod: run(m)) for name, mod in backends()}


def backends():
    out = []
    if _kernels is not None:
        out.append(("cython", _kernels))
    out.append(("python", _fallback))
    return out


def report(title, results, same):
    print(title)
    base = results.get("python", (None,))[0]
    for name, (secs, _) in results.items():
        speed = f"  x{base / secs:7.1f}" if base and name != "python" else ""
        print(f"  {name:8s} {secs * 1e3:10.1f} ms{speed}")
    print(f"  outputs identical: {same}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=400, help="points for the shortest-path benchmark")
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--smo-n", type=int, default=300, help="training points for the SMO benchmark")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    res = bench_dijkstra(args.n, args.k, args.repeat)
    outs = [r[1] for r in res.values()]
    report(f"all-sources shortest paths, swiss roll N={args.n}, k={args.k}", res,
           all(np.array_equal(outs[0], o) for o in outs))

    res = bench_smo(args.smo_n, args.repeat)
    outs = [r[1] for r in res.values()]
    iters = outs[0][1]
    report(f"SMO, quartic kernel, n={args.smo_n} ({iters} updates)", res,
           all(np.array_equal(outs[0][0], o[0]) and outs[0][1] == o[1] for o in outs))


if __name__ == "__main__":
    main()
