"""Spectral data model, CSV/manifest ingestion, validation and stratified folds."""
from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class DatasetError(ValueError):
    """Raised for malformed or inconsistent spectral input."""


@dataclass(frozen=True)
class Spectrum:
    """One spectrum: intensities sampled on a strictly increasing wavelength grid (nm)."""

    wavelengths: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        wl = np.asarray(self.wavelengths, dtype=float)
        it = np.asarray(self.intensities, dtype=float)
        if wl.ndim != 1 or it.shape != wl.shape:
            raise DatasetError("wavelengths and intensities must be 1-D of equal length")
        if wl.size > 1 and not np.all(np.diff(wl) > 0):
            raise DatasetError("wavelength grid must be strictly increasing")
        object.__setattr__(self, "wavelengths", _frozen(wl))
        object.__setattr__(self, "intensities", _frozen(it))


@dataclass(frozen=True)
class SpectralDataset:
    """N instances x D wavelengths with a compound label and sample id per row.

    ``classes`` is the declared class set; when omitted it is the distinct
    labels in order of first appearance.
    """

    matrix: np.ndarray
    wavelengths: np.ndarray
    labels: tuple[str, ...]
    sample_ids: tuple[str, ...]
    classes: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.asarray(self.matrix, dtype=float)
        wl = np.asarray(self.wavelengths, dtype=float)
        labels = tuple(str(x) for x in self.labels)
        sample_ids = tuple(str(x) for x in self.sample_ids)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DatasetError(f"intensity matrix must be N x D with N, D >= 1, got shape {X.shape}")
        if wl.shape != (X.shape[1],):
            raise DatasetError(f"grid length {wl.size} does not match D={X.shape[1]}")
        if wl.size > 1 and not np.all(np.diff(wl) > 0):
            raise DatasetError("wavelength grid must be strictly increasing")
        if len(labels) != X.shape[0] or len(sample_ids) != X.shape[0]:
            raise DatasetError("every instance needs exactly one label and one sample_id")
        classes = tuple(str(c) for c in self.classes) or tuple(dict.fromkeys(labels))
        if len(set(classes)) != len(classes):
            raise DatasetError("declared class set has duplicates")
        unknown = sorted(set(labels) - set(classes))
        if unknown:
            raise DatasetError(f"labels outside the declared class set: {unknown}")
        object.__setattr__(self, "matrix", _frozen(X))
        object.__setattr__(self, "wavelengths", _frozen(wl))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "sample_ids", sample_ids)
        object.__setattr__(self, "classes", classes)

    @property
    def n_instances(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_features(self) -> int:
        return self.matrix.shape[1]

    @property
    def label_codes(self) -> np.ndarray:
        """Integer class index per instance, following ``classes`` order."""
        lookup = {c: i for i, c in enumerate(self.classes)}
        return np.array([lookup[x] for x in self.labels], dtype=np.int64)

    def spectrum(self, i: int) -> Spectrum:
        return Spectrum(self.wavelengths, self.matrix[i])

    def subset(self, compound: str) -> np.ndarray:
        """Rows belonging to one compound."""
        mask = np.array([x == compound for x in self.labels])
        return self.matrix[mask]


@dataclass
class DatasetReport:
    n_instances: int
    n_features: int
    class_histogram: dict[str, int]
    sample_histogram: dict[str, int]
    min_intensity: float
    max_intensity: float
    negative_count: int
    wavelength_range: tuple[float, float] = field(default=(math.nan, math.nan))

    def to_dict(self) -> dict:
        return {
            "n_instances": self.n_instances,
            "n_features": self.n_features,
            "class_histogram": dict(self.class_histogram),
            "sample_histogram": dict(self.sample_histogram),
            "min_intensity": self.min_intensity,
            "max_intensity": self.max_intensity,
            "negative_count": self.negative_count,
            "wavelength_range": list(self.wavelength_range),
        }


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _parse_float(text: str, where: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DatasetError(f"{where}: non-numeric value {text!r}") from None
    if not math.isfinite(value):
        raise DatasetError(f"{where}: non-finite value {text!r}")
    return value


def _parse_grid(cells: Sequence[str], where: str) -> np.ndarray:
    if not cells:
        raise DatasetError(f"{where}: no wavelength columns")
    grid = []
    for pos, cell in enumerate(cells):
        if not cell.strip():
            raise DatasetError(f"{where}: missing wavelength in column {pos + 3}")
        grid.append(_parse_float(cell, f"{where} column {pos + 3}"))
    grid = np.array(grid)
    dup = [g for g, n in Counter(grid.tolist()).items() if n > 1]
    if dup:
        raise DatasetError(f"{where}: duplicate wavelength columns {dup[:5]}")
    if grid.size > 1 and not np.all(np.diff(grid) > 0):
        raise DatasetError(f"{where}: wavelength columns are not strictly increasing")
    return grid


def _check_class(label: str, whitelist, where: str):
    if whitelist is not None and label not in whitelist:
        raise DatasetError(f"{where}: unknown class {label!r}")


def _read_wide_csv(path: Path, classes) -> SpectralDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        if len(header) < 3 or [h.strip() for h in header[:2]] != ["sample_id", "compound"]:
            raise DatasetError(f"{path}: header must start with 'sample_id,compound' followed by wavelengths")
        grid = _parse_grid(header[2:], f"{path} header")
        width = len(header)
        rows, labels, samples = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            where = f"{path} row {lineno}"
            if len(row) != width:
                sid = row[0] if row else "?"
                raise DatasetError(
                    f"{where} (sample_id={sid!r}): expected {width - 2} intensities, got {len(row) - 2}"
                )
            _check_class(row[1], classes, where)
            samples.append(row[0])
            labels.append(row[1])
            rows.append([_parse_float(c, f"{where} column {j + 3}") for j, c in enumerate(row[2:])])
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    return SpectralDataset(np.array(rows), grid, tuple(labels), tuple(samples), tuple(classes or ()))


def _read_column(path: Path) -> list[float]:
    values = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            values.append(_parse_float(line, f"{path} line {lineno}"))
    return values


def _read_manifest(path: Path, classes) -> SpectralDataset:
    """JSON manifest: {"grid": file, "instances": [{"path", "sample_id", "compound"}, ...]}.

    The grid file and each instance file hold one number per line; relative
    paths resolve against the manifest's directory.
    """
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    base = path.parent
    try:
        grid_path = base / doc["grid"]
        entries = doc["instances"]
    except (KeyError, TypeError):
        raise DatasetError(f"{path}: manifest needs 'grid' and 'instances'") from None
    grid_values = _read_column(grid_path)
    grid = _parse_grid([repr(g) for g in grid_values], str(grid_path))
    rows, labels, samples = [], [], []
    for n, entry in enumerate(entries):
        where = f"{path} instance {n}"
        try:
            ipath, sid, comp = base / entry["path"], str(entry["sample_id"]), str(entry["compound"])
        except (KeyError, TypeError):
            raise DatasetError(f"{where}: needs 'path', 'sample_id', 'compound'") from None
        _check_class(comp, classes, where)
        values = _read_column(ipath)
        if len(values) != grid.size:
            raise DatasetError(f"{where} ({ipath}): expected {grid.size} intensities, got {len(values)}")
        rows.append(values)
        labels.append(comp)
        samples.append(sid)
    if not rows:
        raise DatasetError(f"{path}: manifest lists no instances")
    return SpectralDataset(np.array(rows), grid, tuple(labels), tuple(samples), tuple(classes or ()))


def load_dataset(path, format: str = "wide-csv", classes: Iterable[str] | None = None) -> SpectralDataset:
    """Load a dataset from a wide CSV or a JSON manifest.

    Parameters
    ----------
    path : path-like
        Input file.
    format : {"wide-csv", "manifest"}
        Wide CSV has header ``sample_id,compound,<wavelength>...`` and one
        row per instance. A manifest lists per-instance files on a shared grid.
    classes : iterable of str, optional
        Class whitelist; any other label is an error. Also fixes class order.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    whitelist = tuple(classes) if classes is not None else None
    if format == "wide-csv":
        return _read_wide_csv(path, whitelist)
    if format == "manifest":
        return _read_manifest(path, whitelist)
    raise DatasetError(f"unknown dataset format {format!r}")


def write_dataset(ds: SpectralDataset, path) -> Path:
    """Write ``ds`` as a wide CSV. Floats use shortest round-trip repr."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id", "compound", *(repr(float(w)) for w in ds.wavelengths)])
        for sid, lab, row in zip(ds.sample_ids, ds.labels, ds.matrix):
            writer.writerow([sid, lab, *(repr(float(v)) for v in row)])
    return path


def validate_dataset(ds: SpectralDataset) -> DatasetReport:
    X = ds.matrix
    class_hist = Counter(ds.labels)
    return DatasetReport(
        n_instances=ds.n_instances,
        n_features=ds.n_features,
        class_histogram={c: class_hist.get(c, 0) for c in ds.classes},
        sample_histogram=dict(Counter(ds.sample_ids)),
        min_intensity=float(X.min()),
        max_intensity=float(X.max()),
        negative_count=int(np.count_nonzero(X < 0)),
        wavelength_range=(float(ds.wavelengths[0]), float(ds.wavelengths[-1])),
    )


def stratified_folds(data, folds: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Seeded stratified K-fold split.

    ``data`` is a :class:`SpectralDataset` or a label sequence. Each class is
    shuffled and dealt round-robin into folds, continuing the deal across
    classes so that fold sizes differ by at most one.
    """
    labels = list(data.labels) if isinstance(data, SpectralDataset) else [x for x in data]
    if folds < 2:
        raise DatasetError(f"need at least 2 folds, got {folds}")
    n = len(labels)
    order = list(dict.fromkeys(labels))
    by_class = {c: np.array([i for i, x in enumerate(labels) if x == c], dtype=np.int64) for c in order}
    small = {str(c): len(ix) for c, ix in by_class.items() if len(ix) < folds}
    if small:
        raise DatasetError(f"classes too small for {folds} folds: {small}")
    rng = np.random.default_rng(seed)
    assignment = np.empty(n, dtype=np.int64)
    offset = 0
    for c in order:
        members = rng.permutation(by_class[c])
        assignment[members] = (offset + np.arange(members.size)) % folds
        offset += members.size
    everything = np.arange(n)
    out = []
    for f in range(folds):
        test = everything[assignment == f]
        train = everything[assignment != f]
        out.append((train, test))
    return out
