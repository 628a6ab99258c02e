"""Command-line front end: ``libsmanifold <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

from . import harness
from .cluster_eval import dbi_sweep
from .dataset import load_dataset, validate_dataset, write_dataset
from .harness import RunConfig, csv_text, json_text, run_pipeline
from .linear_embed import cmds, euclidean_distances, pca, residual_variance
from .manifold_embed import isomap, lle, neighborhood_sweep
from .spectral_stats import BRASS_LINES, match_emission_lines
from .svm import KernelSpec, accuracy_sweep


def int_list(text: str) -> list[int]:
    """Parse ``1,2,5`` or ``1..10`` (inclusive) or a mix: ``1..3,8``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            a, b = part.split("..")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"empty list {text!r}")
    return out


def str_list(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def _config(args) -> RunConfig:
    doc = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            doc = json.load(fh)
    if getattr(args, "seed", None) is not None:
        doc["seed"] = args.seed
    if getattr(args, "out", None):
        doc["out"] = args.out
    if getattr(args, "dataset", None):
        doc["dataset"] = args.dataset
    if getattr(args, "format", None):
        doc["format"] = args.format
    return RunConfig.from_dict(doc)


def _load(args, cfg: RunConfig):
    if not cfg.dataset:
        raise SystemExit("no dataset given (positional argument or 'dataset' in --config)")
    return load_dataset(cfg.dataset, cfg.format, cfg.classes)


def _emit(text: str, out: str | None, name: str) -> None:
    if out:
        path = Path(out)
        if path.suffix == "":
            path.mkdir(parents=True, exist_ok=True)
            path = path / name
        else:
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        print(path)
    else:
        sys.stdout.write(text)


def cmd_ingest(args):
    cfg = _config(args)
    ds = _load(args, cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(ds, out / "dataset.csv")
    (out / "dataset_report.json").write_text(
        json_text({"seed": cfg.seed, **validate_dataset(ds).to_dict()}), encoding="utf-8")
    print(f"{ds.n_instances} instances x {ds.n_features} wavelengths, {len(ds.classes)} classes -> {out}")


def cmd_validate(args):
    cfg = _config(args)
    ds = _load(args, cfg)
    _emit(json_text(validate_dataset(ds).to_dict()), args.out, "dataset_report.json")


def cmd_regions(args):
    cfg = _config(args)
    ds = _load(args, cfg)
    res = harness.compute_stats(ds, args.regions, args.bins, cfg.line_tolerance_nm)
    text = csv_text(harness.TABLE1_HEADER, harness.table1_rows(res["stats"], res["partition"]),
                    {"seed": cfg.seed, "kind": "table1", "regions": args.regions, "bins": args.bins})
    _emit(text, args.out, "table1_expected_intensity.csv")


def cmd_entropy(args):
    cfg = _config(args)
    ds = _load(args, cfg)
    from .spectral_stats import entropy_density
    comps = [args.compound] if args.compound else [c for c in ds.classes if c in ds.labels]
    rows = harness.entropy_rows([entropy_density(ds, c) for c in comps])
    text = csv_text(["wavelength_nm", "compound", "h", "log10_h"], rows,
                    {"seed": cfg.seed, "kind": "entropy", "base": 2, "log10_floor": -12.0})
    _emit(text, args.out, "entropy_density.csv")


def _read_refs(path) -> list[tuple[str, float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.DictReader(line for line in fh if not line.startswith("#"))]
    return [(r["species"], float(r["wavelength_nm"])) for r in rows]


def cmd_lines(args):
    cfg = _config(args)
    ds = _load(args, cfg)
    refs = _read_refs(args.refs) if args.refs else list(BRASS_LINES)
    groups = []
    if args.instance is not None:
        groups.append((f"instance:{args.instance}", match_emission_lines(ds.spectrum(args.instance), refs,
                                                                         args.tolerance, args.prominence)))
    else:
        from .dataset import Spectrum
        for c in ds.classes:
            rows = ds.subset(c)
            if rows.shape[0]:
                groups.append((c, match_emission_lines(Spectrum(ds.wavelengths, rows.mean(0)), refs,
                                                       args.tolerance, args.prominence)))
    text = csv_text(harness.LINES_HEADER, harness.line_rows(groups), {"seed": cfg.seed, "kind": "lines"})
    _emit(text, args.out, "emission_lines.csv")


def cmd_embed(args):
    cfg = _config(args)
    ds = _load(args, cfg)
    X = ds.matrix
    if args.method in ("isomap", "lle") and args.k is None:
        raise SystemExit(f"--k is required for {args.method}")
    if args.method == "pca":
        emb = pca(X, args.d)
        ref = euclidean_distances(X)
    elif args.method == "cmds":
        ref = euclidean_distances(X)
        emb = cmds(ref, args.d)
    elif args.method == "isomap":
        emb = isomap(X, args.k, args.d, threads=args.threads)
        ref = None
    else:
        emb = lle(X, args.k, args.d, reg_scale=cfg.lle_reg)
        ref = None
    extra = {}
    if ref is not None:
        extra["residual_variance"] = {str(k): v for k, v in residual_variance(ref, emb, range(1, emb.d + 1)).items()}
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{args.method}_k{args.k}" if args.k is not None else args.method
    meta = {"seed": cfg.seed, "kind": "coords", "method": args.method, "k": args.k, "d": args.d}
    (out / f"{stem}.csv").write_text(harness.coords_text(ds, emb.coords, meta), encoding="utf-8")
    side = {"seed": cfg.seed, **harness.embedding_sidecar(emb)}
    side.update(extra)
    (out / f"{stem}.json").write_text(json_text(side), encoding="utf-8")
    print(out / f"{stem}.csv")


def cmd_sweep(args):
    cfg = _config(args)
    ds = _load(args, cfg)
    out = Path(cfg.out)
    (out / "embeddings").mkdir(parents=True, exist_ok=True)
    cells = neighborhood_sweep(ds.matrix, args.k, args.dims, args.method, threads=args.threads,
                               reg_scale=cfg.lle_reg)
    n_eig = max(args.dims) + 1
    (out / "neighborhood_sweep.csv").write_text(
        csv_text(harness.sweep_header(n_eig), harness.sweep_rows(cells, n_eig),
                 {"seed": cfg.seed, "kind": "sweep", "method": args.method}), encoding="utf-8")
    dmax = max(args.dims)
    for c in cells:
        if c.ok and c.d == dmax:
            (out / f"embeddings/{c.method}_k{c.k}.csv").write_text(
                harness.coords_text(ds, c.embedding.coords,
                                    {"seed": cfg.seed, "kind": "coords", "method": c.method, "k": c.k}),
                encoding="utf-8")
    bad = sum(1 for c in cells if not c.ok)
    print(f"{len(cells)} cells, {bad} marked disconnected/failed -> {out / 'neighborhood_sweep.csv'}")


def _embeddings_for(args, cfg, ds):
    dmax = max(args.dims)
    embeddings, _, _ = harness.compute_embeddings(ds.matrix, args.methods, args.neighborhoods or [8],
                                                  dmax, args.dims, args.threads, cfg.lle_reg)
    return embeddings


def cmd_cluster(args):
    cfg = _config(args)
    ds = _load(args, cfg)
    embs = [e for e in _embeddings_for(args, cfg, ds) if not isinstance(e[2], str)]
    rows = dbi_sweep(embs, args.clusters, args.dims, seed=harness.derive_seed(cfg.seed, "clustering"),
                     restarts=args.restarts, threads=args.threads)
    out = Path(cfg.out)
    (out / "clusters").mkdir(parents=True, exist_ok=True)
    meta = {"seed": cfg.seed, "kind": "dbi", "restarts": args.restarts}
    (out / "dbi_sweep.csv").write_text(csv_text(harness.DBI_HEADER, harness.dbi_rows(rows), meta), encoding="utf-8")
    (out / "table3_min_dbi.csv").write_text(
        csv_text(harness.TABLE3_HEADER, harness.table3_rows(rows), {**meta, "kind": "table3"}), encoding="utf-8")
    for r in rows:
        if r.report is not None:
            (out / f"clusters/{r.method}_k{r.k}_d{r.d}_c{r.n_clusters}.csv").write_text(
                csv_text(["instance_id", "cluster"], enumerate(r.report.assignments.tolist()),
                         {"seed": cfg.seed, "kind": "assignments"}), encoding="utf-8")
    print(out / "dbi_sweep.csv")


def cmd_classify(args):
    cfg = _config(args)
    ds = _load(args, cfg)
    embs = _embeddings_for(args, cfg, ds)
    spec = KernelSpec(1, not args.inhomogeneous, not args.no_standardize)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sweep = accuracy_sweep(embs, ds.labels, args.dims, args.degrees, folds=args.folds,
                               seed=harness.derive_seed(cfg.seed, "classification"), C_reg=args.C, spec=spec,
                               raw=ds.matrix if not args.no_baseline else None, threads=args.threads)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"seed": cfg.seed, "folds": args.folds, "C": args.C, "homogeneous": spec.homogeneous,
            "standardize": spec.standardize}
    (out / "table4_best_accuracy.csv").write_text(
        csv_text(harness.TABLE4_HEADER, harness.table4_rows(sweep), {**meta, "kind": "table4"}), encoding="utf-8")
    (out / "errorbar_accuracy.csv").write_text(
        csv_text(harness.ERRORBAR_HEADER, sweep.errorbar_rows(), {**meta, "kind": "errorbar"}), encoding="utf-8")
    print(out / "table4_best_accuracy.csv")


def cmd_run(args):
    cfg = _config(args)
    if not cfg.dataset:
        raise SystemExit("no dataset given (positional argument or 'dataset' in --config)")
    m = run_pipeline(cfg, threads=args.threads)
    for name, st in m.stages.items():
        print(f"{name:15s} {st.status:8s} {st.seconds:8.2f}s" + (f"  {st.error}" if st.error else ""))
    print(m.out_dir / "manifest.json")
    return 0 if all(s.status == "ok" for s in m.stages.values()) else 1


def cmd_report(args):
    run_dir = Path(args.run)
    doc = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
    stage, name = harness.REPORT_KINDS[args.kind]
    status = doc["stages"].get(stage, {}).get("status")
    if status != "ok" or name not in doc["files"]:
        raise SystemExit(f"report {args.kind!r}: stage {stage!r} missing (status {status!r})")
    path = run_dir / name
    if args.cat:
        sys.stdout.write(path.read_text(encoding="utf-8"))
    else:
        print(path)


def cmd_synth(args):
    from .synthetic import make_libs_like
    ds = make_libs_like(args.n, args.wavelengths, seed=args.seed or 0)
    Path(args.path).parent.mkdir(parents=True, exist_ok=True)
    write_dataset(ds, args.path)
    print(args.path)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON run configuration")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory or file")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker threads (affects speed only)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="libsmanifold", description=__doc__)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_, dataset=True):
        sp = sub.add_parser(name, parents=[common], help=help_)
        if dataset:
            sp.add_argument("dataset", nargs="?", default=None)
            sp.add_argument("--format", choices=["wide-csv", "manifest"], default=None)
        sp.set_defaults(func=func)
        return sp

    add("ingest", cmd_ingest, "load, validate and re-emit a dataset as canonical wide CSV")
    add("validate", cmd_validate, "print a dataset report as JSON")
    sp = add("regions", cmd_regions, "expected-intensity table per compound and region")
    sp.add_argument("--regions", type=int, default=8)
    sp.add_argument("--bins", type=int, default=10)
    sp = add("entropy", cmd_entropy, "entropy-density profiles")
    sp.add_argument("--compound", default=None)
    sp = add("lines", cmd_lines, "match reference emission lines")
    sp.add_argument("--refs", default=None, help="CSV with species,wavelength_nm (default: Cu I / Zn I)")
    sp.add_argument("--tolerance", type=float, default=0.5)
    sp.add_argument("--prominence", type=float, default=None)
    sp.add_argument("--instance", type=int, default=None, help="match one instance instead of compound means")
    sp = add("embed", cmd_embed, "one embedding: coords CSV + JSON sidecar")
    sp.add_argument("--method", choices=["pca", "cmds", "isomap", "lle"], required=True)
    sp.add_argument("-d", type=int, default=3)
    sp.add_argument("-k", "--k", type=int, default=None)
    sp = add("sweep", cmd_sweep, "neighborhood-size sweep for ISOMAP or LLE")
    sp.add_argument("--method", choices=["isomap", "lle"], required=True)
    sp.add_argument("--k", type=int_list, default=[8, 15, 30])
    sp.add_argument("--dims", type=int_list, default=list(range(1, 11)))
    sp = add("cluster", cmd_cluster, "k-means + Davies-Bouldin sweep")
    sp.add_argument("--methods", type=str_list, default=["pca", "cmds", "isomap", "lle"])
    sp.add_argument("--neighborhoods", type=int_list, default=[8, 15, 30])
    sp.add_argument("--dims", type=int_list, default=[2, 3, 5, 7, 10])
    sp.add_argument("--clusters", type=int_list, default=list(range(2, 11)))
    sp.add_argument("--restarts", type=int, default=10)
    sp = add("classify", cmd_classify, "cross-validated SMO accuracy sweep")
    sp.add_argument("--folds", type=int, default=10)
    sp.add_argument("--degrees", type=int_list, default=list(range(1, 6)))
    sp.add_argument("--dims", type=int_list, default=list(range(1, 11)))
    sp.add_argument("--neighborhoods", type=int_list, default=[8, 15, 30, 100, 200])
    sp.add_argument("--methods", type=str_list, default=["pca", "cmds", "isomap", "lle"])
    sp.add_argument("--C", type=float, default=1.0)
    sp.add_argument("--inhomogeneous", action="store_true", help="use (x.y + 1)^K")
    sp.add_argument("--no-standardize", action="store_true")
    sp.add_argument("--no-baseline", action="store_true", help="skip the raw-feature baseline row")
    add("run", cmd_run, "full pipeline from a config")
    sp = add("report", cmd_report, "locate (or print) one report of a finished run", dataset=False)
    sp.add_argument("--run", required=True, help="run directory containing manifest.json")
    sp.add_argument("--kind", choices=sorted(harness.REPORT_KINDS), required=True)
    sp.add_argument("--cat", action="store_true")
    sp = add("synth", cmd_synth, "write a seeded LIBS-shaped stand-in dataset", dataset=False)
    sp.add_argument("path")
    sp.add_argument("--n", type=int, default=670)
    sp.add_argument("--wavelengths", type=int, default=1000)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return int(args.func(args) or 0)
    except (ValueError, OSError, harness.ReportError) as exc:
        raise SystemExit(f"libsmanifold {args.command}: {exc}") from exc


if __name__ == "__main__":
    sys.exit(main())
