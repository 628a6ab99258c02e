"""Region statistics, expected intensities, entropy density and emission-line matching."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .dataset import DatasetError, Spectrum, SpectralDataset

LOG10_FLOOR = -12.0

# Cu I and Zn I lines of brass micro-well holders.
BRASS_LINES: tuple[tuple[str, float], ...] = (
    ("Cu I", 324.754),
    ("Cu I", 327.396),
    ("Cu I", 521.820),
    ("Zn I", 334.501),
    ("Zn I", 330.258),
    ("Zn I", 481.053),
)


@dataclass(frozen=True)
class RegionPartition:
    n_regions: int
    boundaries: tuple[tuple[float, float], ...]
    index_ranges: tuple[tuple[int, int], ...]  # half-open [start, stop)

    @property
    def sizes(self) -> list[int]:
        return [b - a for a, b in self.index_ranges]


@dataclass(frozen=True)
class RegionStats:
    """Histogram of per-instance region totals and its expected intensity."""

    compound: str
    region: int
    edges: np.ndarray
    counts: np.ndarray
    expected_intensity: float
    raw_mean: float


@dataclass(frozen=True)
class EntropyProfile:
    compound: str
    wavelengths: np.ndarray
    h: np.ndarray
    log10_h: np.ndarray
    n_instances: int


@dataclass(frozen=True)
class LineMatch:
    species: str
    reference_nm: float
    observed_nm: float | None
    intensity: float | None
    prominence: float | None
    tolerance_nm: float

    @property
    def matched(self) -> bool:
        return self.observed_nm is not None


def partition_regions(grid, n_regions: int = 8) -> RegionPartition:
    """Split the grid into ``n_regions`` contiguous index ranges of near-equal size.

    The remainder ``D % n_regions`` goes one extra index each to the last regions.
    """
    grid = np.asarray(grid, dtype=float)
    D = grid.size
    if n_regions < 1:
        raise ValueError("n_regions must be >= 1")
    if n_regions > D:
        raise ValueError(f"n_regions={n_regions} exceeds grid length D={D}")
    base, extra = divmod(D, n_regions)
    sizes = [base + (1 if r >= n_regions - extra else 0) for r in range(n_regions)]
    stops = np.cumsum(sizes)
    starts = stops - sizes
    ranges = tuple((int(a), int(b)) for a, b in zip(starts, stops))
    bounds = tuple((float(grid[a]), float(grid[b - 1])) for a, b in ranges)
    return RegionPartition(n_regions, bounds, ranges)


def region_totals(ds: SpectralDataset, part: RegionPartition) -> np.ndarray:
    """N x R matrix of summed raw intensity (negatives included) per region."""
    if not part.index_ranges or part.index_ranges[0][0] != 0 or part.index_ranges[-1][1] != ds.n_features:
        raise DatasetError("region partition does not cover the dataset grid")
    if any(ds.wavelengths[a] != lo or ds.wavelengths[b - 1] != hi
           for (a, b), (lo, hi) in zip(part.index_ranges, part.boundaries)):
        raise DatasetError("region partition was built on a different wavelength grid")
    starts = np.array([a for a, _ in part.index_ranges])
    return np.add.reduceat(ds.matrix, starts, axis=1)


def expected_intensity(totals, n_bins: int = 10, compound: str = "", region: int = -1) -> RegionStats:
    """Histogram ``totals`` into equal-width bins over [min, max]; E.I. is the count-weighted midpoint mean.

    All-equal totals collapse to a single occupied bin whose midpoint is that value.
    """
    t = np.asarray(totals, dtype=float).ravel()
    if t.size == 0:
        raise ValueError("expected_intensity needs at least one total")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    lo, hi = float(t.min()), float(t.max())
    if lo == hi:
        edges = np.full(n_bins + 1, lo)
        counts = np.zeros(n_bins, dtype=np.int64)
        counts[0] = t.size
        ei = lo
    else:
        counts, edges = np.histogram(t, bins=n_bins, range=(lo, hi))
        mids = 0.5 * (edges[:-1] + edges[1:])
        ei = float(np.dot(counts, mids) / counts.sum())
        ei = min(max(ei, lo), hi)
    return RegionStats(compound, region, edges, counts, ei, float(t.mean()))


def expected_intensity_table(ds: SpectralDataset, part: RegionPartition, n_bins: int = 10) -> list[RegionStats]:
    """One :class:`RegionStats` per (compound, region), compounds in class order."""
    totals = region_totals(ds, part)
    labels = np.array(ds.labels)
    out = []
    for c in ds.classes:
        rows = totals[labels == c]
        if rows.shape[0] == 0:
            continue
        for r in range(part.n_regions):
            out.append(expected_intensity(rows[:, r], n_bins, compound=c, region=r))
    return out


def shannon_entropy(p) -> float:
    """Shannon entropy in bits with 0 log 0 = 0."""
    p = np.asarray(p, dtype=float).ravel()
    if np.any(p < 0):
        raise ValueError("probability vector has a negative entry")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"probability vector sums to {p.sum()!r}, not 1")
    nz = p[p > 0]
    return float(-np.sum(nz * np.log2(nz)))


def _normalized(I: np.ndarray) -> np.ndarray:
    clamped = np.clip(I, 0.0, None)
    total = clamped.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise ValueError("spectrum has non-positive total intensity after clamping negatives")
    return clamped / total


def entropy_contributions(intensities) -> np.ndarray:
    """Per-wavelength ``-p log2 p`` of each clamp-normalized spectrum (rows)."""
    p = _normalized(np.atleast_2d(np.asarray(intensities, dtype=float)))
    out = np.zeros_like(p)
    nz = p > 0
    out[nz] = -p[nz] * np.log2(p[nz])
    return out


def entropy_density(ds: SpectralDataset, compound: str, log10_floor: float = LOG10_FLOOR) -> EntropyProfile:
    """Mean over a compound's instances of the per-wavelength entropy contributions."""
    rows = ds.subset(compound)
    if rows.shape[0] == 0:
        raise ValueError(f"compound {compound!r} has no instances")
    h = entropy_contributions(rows).mean(axis=0)
    log_h = np.full_like(h, log10_floor)
    pos = h > 0
    log_h[pos] = np.log10(h[pos])
    return EntropyProfile(compound, ds.wavelengths, h, log_h, rows.shape[0])


def _mad(x: np.ndarray) -> float:
    return float(np.median(np.abs(x - np.median(x))))


def match_emission_lines(s: Spectrum, refs=BRASS_LINES, tolerance_nm: float = 0.5,
                         prominence: float | None = None) -> list[LineMatch]:
    """Match reference lines to the nearest detected peak within tolerance.

    A peak is a local maximum whose prominence exceeds ``prominence``
    (default five times the spectrum's median absolute deviation). Unmatched
    references are returned with ``observed_nm=None``.
    """
    if tolerance_nm <= 0:
        raise ValueError("tolerance must be positive")
    I = s.intensities
    threshold = 5.0 * _mad(I) if prominence is None else float(prominence)
    idx, props = find_peaks(I, prominence=(None, None))
    keep = props["prominences"] > threshold
    idx, prom = idx[keep], props["prominences"][keep]
    lam = s.wavelengths[idx]
    out = []
    for species, ref in refs:
        ref = float(ref)
        if idx.size:
            dist = np.abs(lam - ref)
            # nearest, then most prominent, then lowest wavelength
            best = min(range(idx.size), key=lambda m: (dist[m], -prom[m], m))
            if dist[best] <= tolerance_nm:
                out.append(LineMatch(species, ref, float(lam[best]), float(I[idx[best]]),
                                     float(prom[best]), tolerance_nm))
                continue
        out.append(LineMatch(species, ref, None, None, None, tolerance_nm))
    return out
