"""Seeded synthetic fixtures: swiss roll and a LIBS-shaped stand-in dataset."""
from __future__ import annotations

import numpy as np

from .dataset import SpectralDataset


def make_swiss_roll(n: int = 1000, seed: int = 0, noise: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Standard roll: t = 1.5*pi*(1 + 2u), height 21v; returns (points, (t, height))."""
    rng = np.random.default_rng(seed)
    t = 1.5 * np.pi * (1.0 + 2.0 * rng.random(n))
    h = 21.0 * rng.random(n)
    X = np.column_stack([t * np.cos(t), h, t * np.sin(t)])
    if noise:
        X = X + noise * rng.normal(size=X.shape)
    return X, np.column_stack([t, h])


# compound -> physical sample ids, mirroring a 13-sample, 6-compound design
SAMPLE_LAYOUT: dict[str, tuple[str, ...]] = {
    "Water": ("Amino-set111-water", "Amino-set211-water", "Water-01", "Water-02", "Water-03"),
    "ASP": ("Amino-set112-ASP", "Amino-set212-ASP"),
    "Glu": ("Amino-set121-Glu", "Amino-set221-Glu"),
    "Cys": ("Amino-set122-Cys", "Amino-set222-Cys"),
    "Polysac": ("Amino-set311-polysaccharides",),
    "Ser_D": ("Amino-set312-D-serine",),
}

# (wavelength nm, base amplitude) of common lines in aqueous organic LIBS
_BASE_LINES = (
    (247.86, 0.6),   # C I
    (393.37, 0.5),   # Ca II
    (396.85, 0.4),   # Ca II
    (486.13, 0.5),   # H beta
    (589.00, 0.8),   # Na I
    (656.28, 3.0),   # H alpha
    (742.36, 0.4),   # N I
    (746.83, 0.5),   # N I
    (777.19, 2.0),   # O I
    (844.64, 0.7),   # O I
    (868.03, 0.3),   # N I
)

_BRASS = ((324.754, 2.5), (327.396, 2.0), (521.820, 1.2), (330.258, 0.9), (334.501, 1.1), (481.053, 1.4))


def make_libs_like(n: int = 670, n_wavelengths: int = 1000, seed: int = 0,
                   lo_nm: float = 199.0, hi_nm: float = 981.54) -> SpectralDataset:
    """A seeded LIBS-shaped dataset: 6 compounds over 13 physical samples.

    Each shot is a continuum plus Gaussian emission lines whose amplitudes
    depend on compound and sample, scaled by a per-shot plasma factor, with
    additive detector noise that can drive intensities negative. The
    ``Ser_D`` compound also carries brass (Cu I / Zn I) lines.
    """
    rng = np.random.default_rng(seed)
    grid = np.linspace(lo_nm, hi_nm, n_wavelengths)
    compounds = list(SAMPLE_LAYOUT)
    per_class = np.full(len(compounds), n // len(compounds))
    per_class[: n % len(compounds)] += 1
    width = 0.5 + 3.0 * (hi_nm - lo_nm) / n_wavelengths

    def line_shape(center):
        return np.exp(-0.5 * ((grid - center) / width) ** 2)

    base = np.array([line_shape(c) for c, _ in _BASE_LINES])
    brass = np.array([line_shape(c) for c, _ in _BRASS])
    base_amp = np.array([a for _, a in _BASE_LINES])
    brass_amp = np.array([a for _, a in _BRASS])
    continuum = np.exp(-0.5 * ((grid - 550.0) / 250.0) ** 2)

    rows, labels, samples = [], [], []
    for ci, (comp, count) in enumerate(zip(compounds, per_class)):
        profile = base_amp * np.exp(0.25 * rng.normal(size=base_amp.size))
        sample_ids = SAMPLE_LAYOUT[comp]
        offsets = {s: 0.15 * rng.normal(size=base_amp.size) for s in sample_ids}
        for m in range(count):
            sid = sample_ids[m % len(sample_ids)]
            plasma = np.exp(0.2 * rng.normal())
            amp = profile * np.exp(offsets[sid] + 0.1 * rng.normal(size=base_amp.size))
            spec = 0.3 * continuum + amp @ base
            if comp == "Ser_D":
                spec = 2.0 * spec + (brass_amp * np.exp(0.2 * rng.normal(size=brass_amp.size))) @ brass
            spec = 1e3 * plasma * spec + 20.0 * rng.normal(size=grid.size)
            rows.append(spec)
            labels.append(comp)
            samples.append(sid)
    return SpectralDataset(np.array(rows), grid, tuple(labels), tuple(samples), tuple(compounds))
