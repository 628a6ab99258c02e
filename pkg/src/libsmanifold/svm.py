"""Polynomial-kernel SVMs trained by SMO, one-vs-one multiclass, cross-validated sweeps."""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import combinations

import numpy as np

from . import _backend
from .dataset import stratified_folds


class SvmError(ValueError):
    pass


class SmoConvergenceWarning(RuntimeWarning):
    """SMO stopped at its iteration cap; the message carries the remaining KKT gap."""


@dataclass(frozen=True)
class KernelSpec:
    degree: int = 1
    homogeneous: bool = True
    standardize: bool = True

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 1:
            raise SvmError(f"polynomial degree must be an integer >= 1, got {self.degree}")


def poly_kernel(x, y, spec: KernelSpec = KernelSpec()) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise SvmError(f"length mismatch: {x.shape} vs {y.shape}")
    base = float(np.dot(x, y)) + (0.0 if spec.homogeneous else 1.0)
    return base ** spec.degree


def gram(A, B, spec: KernelSpec) -> np.ndarray:
    return _power(np.asarray(A, dtype=float) @ np.asarray(B, dtype=float).T, spec)


def _power(linear: np.ndarray, spec: KernelSpec) -> np.ndarray:
    base = linear if spec.homogeneous else linear + 1.0
    # repeated products: much faster than a generic elementwise pow for small degrees
    out = base
    for _ in range(spec.degree - 1):
        out = out * base
    return out


def fit_standardizer(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature mean and population std; constant features get scale 1."""
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    return mean, scale


@dataclass
class SvmModel:
    support: np.ndarray
    support_vectors: np.ndarray
    dual_coef: np.ndarray
    b: float
    C: float
    spec: KernelSpec
    mean: np.ndarray
    scale: np.ndarray
    alpha: np.ndarray
    iterations: int = 0
    gap: float = 0.0
    converged: bool = True

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def decision_function(self, X) -> np.ndarray:
        Xs = self.transform(np.atleast_2d(X))
        if self.support.size == 0:
            return np.full(Xs.shape[0], self.b)
        return gram(Xs, self.support_vectors, self.spec) @ self.dual_coef + self.b

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision_function(X) > 0, 1, -1)


def _solve(K: np.ndarray, y: np.ndarray, C: float, tol: float, max_iter: int | None):
    n = y.size
    if max_iter is None:
        max_iter = max(10_000_000, 100 * n)
    K = np.ascontiguousarray(K, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    alpha = np.zeros(n)
    G = -np.ones(n)
    it, gap = _backend.smo_solve(K, y, float(C), float(tol), int(max_iter), alpha, G, True, True)
    converged = gap < tol
    if not converged:
        warnings.warn(f"SMO hit the iteration cap ({it}); remaining KKT gap {gap:.3e} > tol {tol:g}",
                      SmoConvergenceWarning, stacklevel=3)
    yG = y * G
    upper = alpha >= C
    lower = alpha <= 0
    free = ~(upper | lower)
    if free.any():
        rho = float(yG[free].mean())
    else:
        ub_mask = (upper & (y < 0)) | (lower & (y > 0))
        lb_mask = (upper & (y > 0)) | (lower & (y < 0))
        ub = yG[ub_mask].min() if ub_mask.any() else np.inf
        lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
        rho = float((ub + lb) / 2) if np.isfinite(ub) and np.isfinite(lb) else float(ub if np.isfinite(ub) else lb)
    return alpha, -rho, int(it), float(gap), bool(converged)


def _as_pm1(y) -> np.ndarray:
    y = np.asarray(y)
    vals = set(np.unique(y).tolist())
    if not vals <= {-1, 1}:
        raise SvmError(f"binary labels must be +1/-1, got {sorted(vals)}")
    if len(vals) < 2:
        raise SvmError("both classes must be present")
    return y.astype(float)


def smo_train(X, y, C: float = 1.0, spec: KernelSpec = KernelSpec(), tol: float = 1e-3,
              max_passes: int | None = None) -> SvmModel:
    """Train a binary SVM on +1/-1 labels with SMO (maximal violator plus second-order partner).

    ``max_passes`` caps the number of pair updates; hitting it issues an
    :class:`SmoConvergenceWarning` and the model records ``converged=False``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    yy = _as_pm1(y)
    if X.shape[0] != yy.size:
        raise SvmError("X and y disagree on the number of instances")
    if C <= 0:
        raise SvmError("C must be positive")
    if spec.standardize:
        mean, scale = fit_standardizer(X)
    else:
        mean, scale = np.zeros(X.shape[1]), np.ones(X.shape[1])
    Xs = (X - mean) / scale
    alpha, b, it, gap, ok = _solve(gram(Xs, Xs, spec), yy, C, tol, max_passes)
    sv = np.flatnonzero(alpha > 0)
    return SvmModel(sv, Xs[sv], alpha[sv] * yy[sv], b, C, spec, mean, scale, alpha, it, gap, ok)


def kkt_violations(model: SvmModel, X, y) -> np.ndarray:
    """Per-point KKT violation of a trained model on its training data."""
    yy = np.asarray(y, dtype=float)
    m = yy * model.decision_function(X)
    a = model.alpha
    v = np.zeros_like(m)
    at0 = a <= 0
    atC = a >= model.C
    free = ~(at0 | atC)
    v[at0] = np.maximum(0.0, 1.0 - m[at0])
    v[atC] = np.maximum(0.0, m[atC] - 1.0)
    v[free] = np.abs(m[free] - 1.0)
    return v


@dataclass
class PairModel:
    pos: int
    neg: int
    index: np.ndarray  # training rows used by this pair
    support: np.ndarray  # positions within the full training set
    dual_coef: np.ndarray
    b: float
    iterations: int
    gap: float
    converged: bool


@dataclass
class MulticlassModel:
    classes: list
    spec: KernelSpec
    C: float
    mean: np.ndarray
    scale: np.ndarray
    train_X: np.ndarray
    pairs: list[PairModel]

    @property
    def n_models(self) -> int:
        return len(self.pairs)

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def decision_values(self, X) -> np.ndarray:
        """n_samples x n_pairs decision values (positive favours ``pair.pos``)."""
        Xs = self.transform(np.atleast_2d(X))
        return self._decisions(gram(Xs, self.train_X, self.spec))

    def _decisions(self, K_test_train: np.ndarray) -> np.ndarray:
        out = np.empty((K_test_train.shape[0], len(self.pairs)))
        for p, pm in enumerate(self.pairs):
            out[:, p] = K_test_train[:, pm.support] @ pm.dual_coef + pm.b
        return out

    def _vote(self, dec: np.ndarray) -> np.ndarray:
        n = dec.shape[0]
        nc = len(self.classes)
        votes = np.zeros((n, nc))
        strength = np.zeros((n, nc))
        for p, pm in enumerate(self.pairs):
            f = dec[:, p]
            win = np.where(f > 0, pm.pos, pm.neg)
            votes[np.arange(n), win] += 1
            strength[np.arange(n), win] += np.abs(f)
        # most votes, then largest summed |decision|, then lowest class index
        rows = np.arange(n)
        best = np.zeros(n, dtype=np.int64)
        for c in range(1, nc):
            bv, bs = votes[rows, best], strength[rows, best]
            better = (votes[:, c] > bv) | ((votes[:, c] == bv) & (strength[:, c] > bs))
            best = np.where(better, c, best)
        return best

    def predict_codes(self, X) -> np.ndarray:
        return self._vote(self.decision_values(X))

    def predict(self, X) -> np.ndarray:
        return np.asarray(self.classes, dtype=object)[self.predict_codes(X)]


def _class_codes(labels) -> tuple[list, np.ndarray]:
    labels = list(labels)
    classes = sorted(set(labels))
    lookup = {c: i for i, c in enumerate(classes)}
    return classes, np.array([lookup[x] for x in labels], dtype=np.int64)


def _train_pairs(K: np.ndarray, codes: np.ndarray, n_classes: int, C: float, tol: float,
                 max_iter: int | None) -> list[PairModel]:
    pairs = []
    for a, b in combinations(range(n_classes), 2):
        idx = np.flatnonzero((codes == a) | (codes == b))
        if not np.any(codes[idx] == a) or not np.any(codes[idx] == b):
            raise SvmError(f"classes {a} and {b} both need at least one training instance")
        y = np.where(codes[idx] == a, 1.0, -1.0)
        alpha, bias, it, gap, ok = _solve(K[np.ix_(idx, idx)], y, C, tol, max_iter)
        sv = np.flatnonzero(alpha > 0)
        pairs.append(PairModel(a, b, idx, idx[sv], alpha[sv] * y[sv], bias, it, gap, ok))
    return pairs


def one_vs_one_train(X, labels, C_reg: float = 1.0, spec: KernelSpec = KernelSpec(), tol: float = 1e-3,
                     max_passes: int | None = None) -> MulticlassModel:
    """One binary SMO model per class pair, standardization fit once on ``X``.

    Classes are ordered by sorted label value; the lower-index class of each
    pair is the positive side.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    classes, codes = _class_codes(labels)
    if len(classes) < 2:
        raise SvmError("need at least two classes")
    if spec.standardize:
        mean, scale = fit_standardizer(X)
    else:
        mean, scale = np.zeros(X.shape[1]), np.ones(X.shape[1])
    Xs = (X - mean) / scale
    pairs = _train_pairs(gram(Xs, Xs, spec), codes, len(classes), C_reg, tol, max_passes)
    return MulticlassModel(classes, spec, C_reg, mean, scale, Xs, pairs)


@dataclass
class CvReport:
    fold_accuracies: list[float]
    mean: float
    std: float
    meta: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _cv_degrees(X, labels, degrees, folds, seed, C_reg, base: KernelSpec, tol, max_passes,
                fold_models: list | None = None) -> list[CvReport]:
    """Cross-validate several degrees, sharing folds, standardization and the linear Gram per fold."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    classes, codes = _class_codes(labels)
    split = stratified_folds(codes.tolist(), folds, seed)
    acc = {K: [] for K in degrees}
    nonconv = {K: 0 for K in degrees}
    for train, test in split:
        Xtr, Xte = X[train], X[test]
        if base.standardize:
            mean, scale = fit_standardizer(Xtr)
        else:
            mean, scale = np.zeros(X.shape[1]), np.ones(X.shape[1])
        Str, Ste = (Xtr - mean) / scale, (Xte - mean) / scale
        lin_tr, lin_te = Str @ Str.T, Ste @ Str.T
        for K in degrees:
            spec = replace(base, degree=int(K))
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", SmoConvergenceWarning)
                pairs = _train_pairs(_power(lin_tr, spec), codes[train], len(classes), C_reg, tol, max_passes)
            nonconv[K] += sum(1 for w in caught if issubclass(w.category, SmoConvergenceWarning))
            model = MulticlassModel(classes, spec, C_reg, mean, scale, Str, pairs)
            pred = model._vote(model._decisions(_power(lin_te, spec)))
            acc[K].append(float(np.mean(pred == codes[test])))
            if fold_models is not None:
                fold_models.append((K, train, model))
    reports = []
    for K in degrees:
        a = np.array(acc[K]) * 100.0
        reports.append(CvReport(
            fold_accuracies=a.tolist(),
            mean=float(a.mean()),
            std=float(a.std(ddof=1)) if a.size > 1 else 0.0,
            meta={"K": int(K), "folds": folds, "seed": seed, "C": C_reg,
                  "homogeneous": base.homogeneous, "standardize": base.standardize,
                  "std_over": "folds (sample std)", "nonconverged_pairs": nonconv[K]},
        ))
    return reports


def cross_validate(X, labels, folds: int = 10, seed: int = 0, C_reg: float = 1.0,
                   spec: KernelSpec = KernelSpec(), tol: float = 1e-3, max_passes: int | None = None,
                   fold_models: list | None = None) -> CvReport:
    """Stratified k-fold accuracy (%) of one-vs-one SMO.

    Standardization is fit on each training split only. Pass a list as
    ``fold_models`` to collect ``(degree, train_index, model)`` per fold.
    """
    return _cv_degrees(X, labels, [spec.degree], folds, seed, C_reg, spec, tol, max_passes, fold_models)[0]


@dataclass
class AccuracySweep:
    cells: list[CvReport]

    def errorbar_rows(self) -> list[tuple]:
        return [(c.meta["method"], c.meta.get("k"), c.meta["d"], c.meta["K"], c.mean, c.std)
                for c in self.cells if c.ok]

    def best_rows(self) -> list[dict]:
        """Highest mean accuracy per (method, k); tied dimensions are listed together."""
        groups: dict = {}
        for c in self.cells:
            if c.ok:
                groups.setdefault((c.meta["method"], c.meta.get("k")), []).append(c)
        out = []
        for (method, k), cells in groups.items():
            top = max(c.mean for c in cells)
            winners = [c for c in cells if c.mean == top]
            K = max(c.meta["K"] for c in winners)
            dims = sorted({c.meta["d"] for c in winners if c.meta["K"] == K}, key=lambda v: (v is None, v))
            std = min(c.std for c in winners if c.meta["K"] == K)
            out.append({"method": method, "k": k, "accuracy": top, "K": K, "dims": dims, "std": std})
        return out


def accuracy_sweep(embeddings, labels, d_values=range(1, 11), K_values=range(1, 6), folds: int = 10,
                   seed: int = 0, C_reg: float = 1.0, spec: KernelSpec = KernelSpec(), raw=None,
                   threads: int = 1, tol: float = 1e-3, max_passes: int | None = None) -> AccuracySweep:
    """CV accuracy for every (method, k, d, K) plus an optional raw-feature baseline.

    ``embeddings`` is an iterable of ``(method, k, Embedding | array | error-string)``.
    ``raw`` is the unreduced data matrix; its rows are tagged method ``raw``
    with ``d`` equal to the feature count. All cells share the same folds.
    """
    d_values, K_values = [int(d) for d in d_values], [int(K) for K in K_values]
    jobs = []
    if raw is not None:
        raw = np.asarray(raw, dtype=float)
        jobs.append(("raw", None, raw.shape[1], raw, None))
    for method, k, emb in embeddings:
        if isinstance(emb, str):
            for d in d_values:
                jobs.append((method, k, d, None, emb))
            continue
        coords = np.asarray(getattr(emb, "coords", emb), dtype=float)
        for d in d_values:
            if d > coords.shape[1]:
                jobs.append((method, k, d, None, f"embedding has {coords.shape[1]} dims, requested {d}"))
            else:
                jobs.append((method, k, d, coords[:, :d], None))

    def run(job):
        method, k, d, X, err = job
        tag = {"method": method, "k": k, "d": d}
        if err is not None:
            return [CvReport([], float("nan"), float("nan"), {**tag, "K": K}, err) for K in K_values]
        try:
            reps = _cv_degrees(X, labels, K_values, folds, seed, C_reg, spec, tol, max_passes)
        except (SvmError, ValueError) as exc:
            return [CvReport([], float("nan"), float("nan"), {**tag, "K": K}, str(exc)) for K in K_values]
        for r in reps:
            r.meta.update(tag)
        return reps

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    return AccuracySweep([c for group in results for c in group])
