"""Run configuration, seeded end-to-end orchestration and report emission.

Seeds: every stage draws from ``derive_seed(master, stage)``, i.e. the first
32-bit word of ``SeedSequence([master, STAGE_CODES[stage]])``. Stages never
share RNG state, so thread scheduling cannot perturb results.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import _backend
from .cluster_eval import dbi_sweep
from .dataset import SpectralDataset, Spectrum, load_dataset, validate_dataset
from .linear_embed import EmbeddingError, cmds, euclidean_distances, pca, residual_variance
from .manifold_embed import neighborhood_sweep
from .spectral_stats import (BRASS_LINES, LOG10_FLOOR, entropy_density, expected_intensity_table,
                             match_emission_lines, partition_regions)
from .svm import KernelSpec, accuracy_sweep

log = logging.getLogger(__name__)

STAGE_CODES = {"ingest": 1, "stats": 2, "embeddings": 3, "clustering": 4, "classification": 5}
STAGES = tuple(STAGE_CODES)

REPORT_KINDS = {
    "dataset": ("ingest", "dataset_report.json"),
    "table1": ("stats", "table1_expected_intensity.csv"),
    "histograms": ("stats", "region_histograms.csv"),
    "entropy": ("stats", "entropy_density.csv"),
    "lines": ("stats", "emission_lines.csv"),
    "table2": ("embeddings", "table2_explained_variance.csv"),
    "scree": ("embeddings", "scree_residual_variance.csv"),
    "sweep": ("embeddings", "neighborhood_sweep.csv"),
    "dbi": ("clustering", "dbi_sweep.csv"),
    "table3": ("clustering", "table3_min_dbi.csv"),
    "table4": ("classification", "table4_best_accuracy.csv"),
    "errorbar": ("classification", "errorbar_accuracy.csv"),
}


class ReportError(RuntimeError):
    pass


def derive_seed(master: int, stage: str) -> int:
    return int(np.random.SeedSequence([int(master), STAGE_CODES[stage]]).generate_state(1)[0])


@dataclass
class RunConfig:
    """All defaults reproduce the published parameter choices."""

    dataset: str = ""
    format: str = "wide-csv"
    classes: list[str] | None = None
    regions: int = 8
    bins: int = 10
    methods: list[str] = field(default_factory=lambda: ["pca", "cmds", "isomap", "lle"])
    k_values: list[int] = field(default_factory=lambda: [8, 15, 30, 100, 200])
    d_values: list[int] = field(default_factory=lambda: list(range(1, 11)))
    K_values: list[int] = field(default_factory=lambda: list(range(1, 6)))
    folds: int = 10
    cluster_counts: list[int] = field(default_factory=lambda: list(range(2, 11)))
    cluster_dims: list[int] = field(default_factory=lambda: [2, 3, 5, 7, 10])
    restarts: int = 10
    C: float = 1.0
    homogeneous: bool = True
    standardize: bool = True
    lle_reg: float = 1e-3
    line_tolerance_nm: float = 0.5
    baseline: bool = True
    seed: int = 0
    out: str = "run"

    def __post_init__(self):
        for name in ("methods", "k_values", "d_values", "K_values", "cluster_counts", "cluster_dims"):
            if not list(getattr(self, name)):
                raise ValueError(f"config list {name!r} must be non-empty")
        unknown = set(self.methods) - {"pca", "cmds", "isomap", "lle"}
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(**doc)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class StageStatus:
    status: str = "pending"
    seconds: float = 0.0
    error: str | None = None
    cell_errors: int = 0


@dataclass
class RunManifest:
    config: RunConfig
    out_dir: Path
    stages: dict[str, StageStatus] = field(default_factory=lambda: {s: StageStatus() for s in STAGES})
    files: dict[str, str] = field(default_factory=dict)
    results: dict = field(default_factory=dict, repr=False)

    def stage_ok(self, stage: str) -> bool:
        return self.stages[stage].status == "ok" and stage in self.results

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "backend": _backend.BACKEND,
            "stages": {k: asdict(v) for k, v in self.stages.items()},
            "files": dict(sorted(self.files.items())),
        }

    def write(self) -> Path:
        path = self.out_dir / "manifest.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


# ---------------------------------------------------------------- formatting

def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def csv_text(header: list[str], rows, meta: dict) -> str:
    buf = io.StringIO()
    buf.write("# " + " ".join(f"{k}={fmt(v)}" for k, v in meta.items()) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def json_text(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


# ---------------------------------------------------------------- row builders

def table1_rows(stats, part) -> list[tuple]:
    return [(s.compound, s.region + 1, part.boundaries[s.region][0], part.boundaries[s.region][1],
             s.expected_intensity, s.raw_mean) for s in stats]


TABLE1_HEADER = ["compound", "region", "region_low_nm", "region_high_nm", "EI", "raw_mean"]


def histogram_rows(stats) -> list[tuple]:
    rows = []
    for s in stats:
        for b, count in enumerate(s.counts):
            rows.append((s.compound, s.region + 1, b + 1, s.edges[b], s.edges[b + 1], int(count)))
    return rows


def entropy_rows(profiles) -> list[tuple]:
    rows = []
    for p in profiles:
        rows.extend((w, p.compound, h, lh) for w, h, lh in zip(p.wavelengths, p.h, p.log10_h))
    rows.sort(key=lambda r: (r[0], r[1]))
    return rows


def line_rows(matches_by_compound) -> list[tuple]:
    rows = []
    for comp, matches in matches_by_compound:
        for m in matches:
            rows.append((comp, m.species, m.reference_nm, m.matched, m.observed_nm, m.intensity,
                         m.prominence, m.tolerance_nm))
    return rows


LINES_HEADER = ["compound", "species", "reference_nm", "matched", "observed_nm", "intensity",
                "prominence", "tolerance_nm"]


def coords_text(ds: SpectralDataset, coords: np.ndarray, meta: dict) -> str:
    header = ["instance_id", "label"] + [f"c{j + 1}" for j in range(coords.shape[1])]
    rows = ([i, lab, *row] for i, (lab, row) in enumerate(zip(ds.labels, coords)))
    return csv_text(header, rows, meta)


def embedding_sidecar(emb, extra: dict | None = None) -> dict:
    return {
        "method": emb.method,
        "params": emb.params,
        "eigenvalues": None if emb.eigenvalues is None else [float(v) for v in emb.eigenvalues[:50]],
        "explained_variance": None if emb.explained_variance is None else [float(v) for v in emb.explained_variance],
        "residual_variance": None if emb.residual_variance is None else {str(k): v for k, v in emb.residual_variance.items()},
        "meta": emb.meta,
        **(extra or {}),
    }


# ---------------------------------------------------------------- stages

def _stage_ingest(cfg: RunConfig, m: RunManifest):
    ds = load_dataset(cfg.dataset, cfg.format, cfg.classes)
    m.results["ingest"] = {"dataset": ds, "report": validate_dataset(ds)}


def compute_stats(ds: SpectralDataset, regions: int, bins: int, tolerance_nm: float):
    part = partition_regions(ds.wavelengths, regions)
    stats = expected_intensity_table(ds, part, bins)
    profiles = [entropy_density(ds, c) for c in ds.classes if c in ds.labels]
    lines = []
    for c in ds.classes:
        rows = ds.subset(c)
        if rows.shape[0]:
            lines.append((c, match_emission_lines(Spectrum(ds.wavelengths, rows.mean(axis=0)),
                                                  BRASS_LINES, tolerance_nm)))
    return {"partition": part, "stats": stats, "entropy": profiles, "lines": lines}


def _stage_stats(cfg: RunConfig, m: RunManifest):
    ds = m.results["ingest"]["dataset"]
    m.results["stats"] = compute_stats(ds, cfg.regions, cfg.bins, cfg.line_tolerance_nm)


def compute_embeddings(X: np.ndarray, methods, k_values, dmax: int, d_values, threads: int = 1,
                       lle_reg: float = 1e-3):
    """Linear embeddings at ``dmax`` plus ISOMAP/LLE sweep cells.

    Returns ``(embeddings, sweep_cells, scree_rows)`` where ``embeddings`` is
    a list of ``(method, k, Embedding | error string)``.
    """
    N = X.shape[0]
    embeddings, cells, scree = [], [], []
    euclid = None
    for method in methods:
        if method in ("pca", "cmds"):
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    if euclid is None:
                        euclid = euclidean_distances(X)
                    d = min(dmax, N - 1) if method == "cmds" else min(dmax, N - 1, X.shape[1])
                    emb = pca(X, d) if method == "pca" else cmds(euclid, d)
                rv = residual_variance(euclid, emb, range(1, emb.d + 1))
                emb = type(emb)(emb.coords, emb.method, emb.params, emb.eigenvalues,
                                emb.explained_variance, rv, emb.meta)
                scree.extend((method, None, d_, v) for d_, v in rv.items())
                embeddings.append((method, None, emb))
            except EmbeddingError as exc:
                embeddings.append((method, None, str(exc)))
        else:
            sweep = neighborhood_sweep(X, k_values, sorted(set(d_values) | {dmax}), method,
                                       threads=threads, reg_scale=lle_reg)
            cells.extend(sweep)
            for k in k_values:
                full = [c for c in sweep if c.k == k and c.d == dmax][0]
                if full.ok:
                    embeddings.append((method, int(k), full.embedding))
                    if full.embedding.residual_variance:
                        scree.extend((method, int(k), d_, v) for d_, v in full.embedding.residual_variance.items())
                else:
                    embeddings.append((method, int(k), full.error))
    return embeddings, cells, scree


def _stage_embeddings(cfg: RunConfig, m: RunManifest, threads: int):
    ds = m.results["ingest"]["dataset"]
    dmax = max(max(cfg.d_values), max(cfg.cluster_dims))
    embeddings, cells, scree = compute_embeddings(ds.matrix, cfg.methods, cfg.k_values, dmax,
                                                  cfg.d_values, threads, cfg.lle_reg)
    m.results["embeddings"] = {"embeddings": embeddings, "cells": cells, "scree": scree, "dmax": dmax}
    m.stages["embeddings"].cell_errors = sum(1 for c in cells if not c.ok) + sum(
        1 for _, _, e in embeddings if isinstance(e, str))


def _stage_clustering(cfg: RunConfig, m: RunManifest, threads: int):
    embeddings = [(meth, k, e) for meth, k, e in m.results["embeddings"]["embeddings"] if not isinstance(e, str)]
    rows = dbi_sweep(embeddings, cfg.cluster_counts, cfg.cluster_dims, seed=derive_seed(cfg.seed, "clustering"),
                     restarts=cfg.restarts, threads=threads)
    m.results["clustering"] = {"rows": rows}
    m.stages["clustering"].cell_errors = sum(1 for r in rows if r.error)


def _stage_classification(cfg: RunConfig, m: RunManifest, threads: int):
    ds = m.results["ingest"]["dataset"]
    spec = KernelSpec(1, cfg.homogeneous, cfg.standardize)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sweep = accuracy_sweep(m.results["embeddings"]["embeddings"], ds.labels, cfg.d_values, cfg.K_values,
                               folds=cfg.folds, seed=derive_seed(cfg.seed, "classification"), C_reg=cfg.C,
                               spec=spec, raw=ds.matrix if cfg.baseline else None, threads=threads)
    m.results["classification"] = {"sweep": sweep}
    m.stages["classification"].cell_errors = sum(1 for c in sweep.cells if not c.ok)


# ---------------------------------------------------------------- reports

def _meta(cfg: RunConfig, kind: str, **extra) -> dict:
    return {"seed": cfg.seed, "kind": kind, **extra}


def sweep_rows(cells, n_eig: int) -> list[tuple]:
    rows = []
    for c in cells:
        eig = (c.eigenvalues + [None] * n_eig)[:n_eig]
        rows.append((c.method, c.k, c.d, c.connected, c.component_count, c.residual_variance,
                     f"embeddings/{c.method}_k{c.k}.csv" if c.ok else None, c.error, *eig))
    return rows


def sweep_header(n_eig: int) -> list[str]:
    return (["method", "k", "d", "connected", "component_count", "residual_variance", "coords_file", "error"]
            + [f"eigenvalue_{i + 1}" for i in range(n_eig)])


def dbi_rows(rows) -> list[tuple]:
    return [(r.method, r.k, r.d, r.n_clusters, r.dbi, r.error) for r in rows]


DBI_HEADER = ["method", "k", "d", "n_clusters", "dbi", "error"]


def table3_rows(rows) -> list[tuple]:
    best = {}
    for r in rows:
        if r.dbi is None:
            continue
        key = (r.method, r.k)
        if key not in best or r.dbi < best[key].dbi:
            best[key] = r
    return [(r.method, r.dbi, r.d, r.n_clusters, r.k) for r in best.values()]


TABLE3_HEADER = ["model", "dbi", "dimensions", "clusters", "neighborhood"]


def table4_rows(sweep) -> list[tuple]:
    return [(r["method"], r["accuracy"], r["K"], " ".join(str(d) for d in r["dims"]), r["std"], r["k"])
            for r in sweep.best_rows()]


TABLE4_HEADER = ["model", "accuracy_pct", "kernel_degree", "dimensions", "std_pct", "neighborhood"]
ERRORBAR_HEADER = ["method", "k", "d", "K", "mean", "std"]


def _render(kind: str, m: RunManifest) -> dict[str, str]:
    """Map of relative path -> file content for one report kind."""
    cfg = m.config
    stage, name = REPORT_KINDS[kind]
    if not m.stage_ok(stage):
        raise ReportError(f"report {kind!r} needs stage {stage!r}, which has status {m.stages[stage].status!r}")
    res = m.results[stage]
    if kind == "dataset":
        return {name: json_text({"seed": cfg.seed, **res["report"].to_dict()})}
    if kind == "table1":
        return {name: csv_text(TABLE1_HEADER, table1_rows(res["stats"], res["partition"]),
                               _meta(cfg, kind, regions=cfg.regions, bins=cfg.bins, ei="histogram-midpoint mean"))}
    if kind == "histograms":
        return {name: csv_text(["compound", "region", "bin", "edge_low", "edge_high", "count"],
                               histogram_rows(res["stats"]), _meta(cfg, kind, bins=cfg.bins))}
    if kind == "entropy":
        return {name: csv_text(["wavelength_nm", "compound", "h", "log10_h"], entropy_rows(res["entropy"]),
                               _meta(cfg, kind, base=2, averaging="per-instance mean",
                                     negatives="clamped to 0", log10_floor=LOG10_FLOOR))}
    if kind == "lines":
        return {name: csv_text(LINES_HEADER, line_rows(res["lines"]),
                               _meta(cfg, kind, spectrum="compound mean", prominence="5*MAD"))}
    if kind == "table2":
        rows = []
        for method, k, emb in res["embeddings"]:
            if not isinstance(emb, str) and emb.explained_variance is not None:
                rows.append((method, k, 100.0 * float(emb.explained_variance[0]), 1))
        return {name: csv_text(["model", "neighborhood", "variance_explained_pct", "components"], rows,
                               _meta(cfg, kind))}
    if kind == "scree":
        return {name: csv_text(["method", "k", "d", "residual_variance"], res["scree"], _meta(cfg, kind))}
    if kind == "sweep":
        n_eig = res["dmax"] + 1
        out = {name: csv_text(sweep_header(n_eig), sweep_rows(res["cells"], n_eig), _meta(cfg, kind))}
        ds = m.results["ingest"]["dataset"]
        for method, k, emb in res["embeddings"]:
            if isinstance(emb, str):
                continue
            stem = f"embeddings/{method}_k{k}" if k is not None else f"embeddings/{method}"
            out[stem + ".csv"] = coords_text(ds, emb.coords, _meta(cfg, "coords", method=method, k=k))
            out[stem + ".json"] = json_text({"seed": cfg.seed, **embedding_sidecar(emb)})
        return out
    if kind == "dbi":
        out = {name: csv_text(DBI_HEADER, dbi_rows(res["rows"]), _meta(cfg, kind, restarts=cfg.restarts,
                                                                       dbi_q=1, dbi_p=2))}
        for r in res["rows"]:
            if r.report is not None:
                path = f"clusters/{r.method}_k{r.k}_d{r.d}_c{r.n_clusters}.csv"
                out[path] = csv_text(["instance_id", "cluster"], enumerate(r.report.assignments.tolist()),
                                     _meta(cfg, "assignments", method=r.method, k=r.k, d=r.d,
                                           n_clusters=r.n_clusters))
        return out
    if kind == "table3":
        return {name: csv_text(TABLE3_HEADER, table3_rows(res["rows"]), _meta(cfg, kind))}
    if kind == "table4":
        return {name: csv_text(TABLE4_HEADER, table4_rows(res["sweep"]),
                               _meta(cfg, kind, folds=cfg.folds, C=cfg.C, homogeneous=cfg.homogeneous,
                                     standardize=cfg.standardize, std_over="folds"))}
    if kind == "errorbar":
        return {name: csv_text(ERRORBAR_HEADER, res["sweep"].errorbar_rows(),
                               _meta(cfg, kind, folds=cfg.folds, std="sample std over folds"))}
    raise ReportError(f"unknown report kind {kind!r}")


def emit_report(m: RunManifest, kind: str) -> Path:
    """Write one report kind (plus its per-cell side files) and record hashes. Returns the main file."""
    if kind not in REPORT_KINDS:
        raise ReportError(f"unknown report kind {kind!r}; choose from {sorted(REPORT_KINDS)}")
    for rel, text in _render(kind, m).items():
        path = m.out_dir / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        data = text.encode("utf-8")
        path.write_bytes(data)
        m.files[rel] = hashlib.sha256(data).hexdigest()
    return m.out_dir / REPORT_KINDS[kind][1]


def run_pipeline(cfg: RunConfig, threads: int = 1) -> RunManifest:
    """ingest -> stats -> embeddings -> clustering -> classification, then every report.

    A failing stage is recorded and its dependents skipped; independent
    stages still run. Only an unloadable dataset aborts the run.
    """
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    m = RunManifest(cfg, out)
    depends = {"ingest": (), "stats": ("ingest",), "embeddings": ("ingest",),
               "clustering": ("embeddings",), "classification": ("embeddings",)}
    runners = {
        "ingest": lambda: _stage_ingest(cfg, m),
        "stats": lambda: _stage_stats(cfg, m),
        "embeddings": lambda: _stage_embeddings(cfg, m, threads),
        "clustering": lambda: _stage_clustering(cfg, m, threads),
        "classification": lambda: _stage_classification(cfg, m, threads),
    }
    for stage in STAGES:
        st = m.stages[stage]
        missing = [d for d in depends[stage] if not m.stage_ok(d)]
        if missing:
            st.status = "skipped"
            st.error = f"dependency failed: {', '.join(missing)}"
            continue
        t0 = time.perf_counter()
        try:
            runners[stage]()
            st.status = "ok"
        except Exception as exc:
            if stage == "ingest":
                raise
            log.exception("stage %s failed", stage)
            st.status = "failed"
            st.error = f"{type(exc).__name__}: {exc}"
        st.seconds = round(time.perf_counter() - t0, 3)
        log.info("stage %s: %s in %.2fs", stage, st.status, st.seconds)
    for kind, (stage, _) in REPORT_KINDS.items():
        if m.stage_ok(stage):
            emit_report(m, kind)
    m.write()
    return m
