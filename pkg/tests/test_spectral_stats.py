import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from libsmanifold.dataset import Spectrum
from libsmanifold.spectral_stats import (BRASS_LINES, entropy_contributions, entropy_density, expected_intensity,
                                         expected_intensity_table, match_emission_lines, partition_regions,
                                         region_totals, shannon_entropy)

from conftest import make_dataset


# -- partition_regions

def test_partition_one_index_each():
    part = partition_regions(np.arange(8.0), 8)
    assert part.sizes == [1] * 8
    assert part.boundaries[3] == (3.0, 3.0)


def test_partition_uniform_80():
    grid = np.linspace(200, 279, 80)
    part = partition_regions(grid, 8)
    assert part.sizes == [10] * 8
    assert part.index_ranges[0] == (0, 10)
    assert part.boundaries[0] == (200.0, 209.0)


def test_partition_remainder_goes_last():
    assert partition_regions(np.arange(26100.0), 8).sizes == [3262] * 4 + [3263] * 4
    assert partition_regions(np.arange(11.0), 4).sizes == [2, 3, 3, 3]


def test_partition_paper_like_grid_labels():
    grid = np.linspace(199.0, 981.54, 26100)
    part = partition_regions(grid, 8)
    assert part.boundaries[0][0] == 199.0 and part.boundaries[-1][1] == 981.54
    # regions span roughly 100 nm each, as in the published row labels
    widths = [hi - lo for lo, hi in part.boundaries]
    assert all(95 < w < 100 for w in widths)


def test_partition_too_many_regions():
    with pytest.raises(ValueError):
        partition_regions(np.arange(3.0), 4)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 500), st.integers(1, 40))
def test_partition_properties(D, n):
    if n > D:
        return
    part = partition_regions(np.arange(float(D)), n)
    sizes = part.sizes
    assert sum(sizes) == D and max(sizes) - min(sizes) <= 1
    assert part.index_ranges[0][0] == 0 and part.index_ranges[-1][1] == D
    for (a, b), (c, d) in zip(part.index_ranges, part.index_ranges[1:]):
        assert b == c


# -- region_totals

def test_region_totals_constant():
    ds = make_dataset(np.ones((2, 80)), ["a", "a"])
    totals = region_totals(ds, partition_regions(ds.wavelengths, 8))
    np.testing.assert_array_equal(totals, np.full((2, 8), 10.0))


def test_region_totals_spike_and_sign():
    X = np.zeros((2, 80))
    X[0, 25] = 7.5  # region index 2, i.e. the third region
    X[1] = -1.0
    ds = make_dataset(X, ["a", "b"])
    totals = region_totals(ds, partition_regions(ds.wavelengths, 8))
    expected = np.zeros(8)
    expected[2] = 7.5
    np.testing.assert_array_equal(totals[0], expected)
    np.testing.assert_array_equal(totals[1], np.full(8, -10.0))


def test_region_totals_grid_mismatch():
    ds = make_dataset(np.ones((1, 80)), ["a"])
    other = partition_regions(np.linspace(0, 1, 80), 8)
    with pytest.raises(ValueError):
        region_totals(ds, other)


@settings(max_examples=30, deadline=None)
@given(arrays(np.int64, (3, 37), elements=st.integers(-1000, 1000)), st.integers(1, 37))
def test_region_totals_conserve_intensity(X, n):
    ds = make_dataset(X, ["a"] * 3)
    totals = region_totals(ds, partition_regions(ds.wavelengths, n))
    # integer-valued data: float sums are exact
    np.testing.assert_array_equal(totals.sum(axis=1), X.sum(axis=1))


# -- expected_intensity

def test_ei_all_equal():
    s = expected_intensity([4.2] * 7, 10)
    assert s.expected_intensity == 4.2
    assert s.counts.sum() == 7


def test_ei_symmetric_two_bins():
    s = expected_intensity([0.0] * 5 + [10.0] * 5, 2)
    assert s.expected_intensity == pytest.approx(5.0, abs=1e-12)
    np.testing.assert_array_equal(s.counts, [5, 5])


def test_ei_hand_case():
    # 10 bins over [0, 10]; values land in bins 0, 0, 4, 9 -> midpoints 0.5, 0.5, 4.5, 9.5
    s = expected_intensity([0.0, 0.2, 4.1, 10.0], 10)
    assert s.expected_intensity == pytest.approx((0.5 + 0.5 + 4.5 + 9.5) / 4, abs=1e-12)
    assert s.raw_mean == pytest.approx(14.3 / 4)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=40), st.integers(1, 15),
       st.randoms(use_true_random=False))
def test_ei_bounds_and_permutation(totals, bins, rnd):
    s = expected_intensity(totals, bins)
    assert min(totals) <= s.expected_intensity <= max(totals)
    assert s.counts.sum() == len(totals)
    shuffled = list(totals)
    rnd.shuffle(shuffled)
    assert expected_intensity(shuffled, bins).expected_intensity == s.expected_intensity


def test_ei_table_layout():
    rng = np.random.default_rng(0)
    ds = make_dataset(rng.normal(size=(12, 40)), ["w", "x", "y"] * 4)
    stats = expected_intensity_table(ds, partition_regions(ds.wavelengths, 8))
    assert len(stats) == 3 * 8
    assert [(s.compound, s.region) for s in stats[:2]] == [("w", 0), ("w", 1)]
    assert all(s.counts.sum() == 4 for s in stats)


# -- shannon_entropy

@pytest.mark.parametrize("p, bits", [([1 / 8] * 8, 3.0), ([1, 0, 0, 0], 0.0), ([0.5, 0.25, 0.25], 1.5)])
def test_shannon_closed_forms(p, bits):
    assert shannon_entropy(p) == pytest.approx(bits, abs=1e-12)


def test_shannon_errors():
    with pytest.raises(ValueError):
        shannon_entropy([1.5, -0.5])
    with pytest.raises(ValueError):
        shannon_entropy([0.5, 0.4])


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(1, 30), elements=st.floats(0, 100)))
def test_shannon_bounds(w):
    if w.sum() <= 0:
        return
    p = w / w.sum()
    H = shannon_entropy(p)
    assert -1e-12 <= H <= math.log2(p.size) + 1e-9


# -- entropy density

def test_entropy_uniform_profile():
    D = 64
    ds = make_dataset(np.full((1, D), 3.0), ["a"])
    prof = entropy_density(ds, "a")
    np.testing.assert_allclose(prof.h, math.log2(D) / D, rtol=0, atol=1e-15)


def test_entropy_spike_is_zero():
    X = np.zeros((1, 20))
    X[0, 7] = 5.0
    prof = entropy_density(make_dataset(X, ["a"]), "a")
    assert np.all(prof.h == 0)
    assert np.all(prof.log10_h == -12.0)


def test_entropy_negative_clamped_and_all_zero_rejected():
    X = np.array([[-5.0, 1.0, 1.0]])
    prof = entropy_density(make_dataset(X, ["a"]), "a")
    np.testing.assert_allclose(prof.h, [0, 0.5, 0.5])
    with pytest.raises(ValueError):
        entropy_density(make_dataset(np.array([[-1.0, 0.0, -2.0]]), ["a"]), "a")


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3, 25), elements=st.floats(-5, 1e4)), st.floats(1e-3, 1e3))
def test_entropy_additivity_and_scale_invariance(X, c):
    X[:, 0] = np.abs(X[:, 0]) + 1.0  # positive total after clamping
    contrib = entropy_contributions(X)
    for i in range(3):
        p = np.clip(X[i], 0, None)
        p = p / p.sum()
        assert abs(contrib[i].sum() - shannon_entropy(p)) <= 1e-9
    assert np.all(contrib >= 0)
    np.testing.assert_allclose(entropy_contributions(c * X), contrib, rtol=1e-9, atol=1e-12)


def test_entropy_profile_is_instance_mean():
    rng = np.random.default_rng(1)
    X = rng.random((4, 10)) + 0.1
    ds = make_dataset(X, ["a", "b", "a", "a"])
    prof = entropy_density(ds, "a")
    np.testing.assert_allclose(prof.h, entropy_contributions(X[[0, 2, 3]]).mean(0))
    assert prof.n_instances == 3


# -- emission lines

def _gauss_spectrum(centers, grid, width=0.05, amp=100.0):
    I = np.zeros_like(grid)
    for c in centers:
        I += amp * np.exp(-0.5 * ((grid - c) / width) ** 2)
    return Spectrum(grid, I)


def test_match_single_cu_peak():
    grid = np.arange(300.0, 540.0, 0.01)
    s = _gauss_spectrum([324.75], grid)
    cu = [r for r in BRASS_LINES if r[0] == "Cu I"]
    matches = match_emission_lines(s, cu, 0.5)
    hits = [m for m in matches if m.matched]
    assert len(hits) == 1
    assert hits[0].reference_nm == 324.754
    assert abs(hits[0].observed_nm - 324.75) < 0.011


def test_flat_spectrum_has_no_matches():
    grid = np.arange(300.0, 540.0, 0.01)
    s = Spectrum(grid, np.full_like(grid, 5.0))
    assert not any(m.matched for m in match_emission_lines(s, BRASS_LINES, 0.5))


def test_match_zn_pair():
    grid = np.arange(300.0, 500.0, 0.01)
    s = _gauss_spectrum([330.26, 334.50], grid)
    zn = [r for r in BRASS_LINES if r[0] == "Zn I"]
    got = {m.reference_nm: m for m in match_emission_lines(s, zn, 0.1)}
    assert got[330.258].matched and got[334.501].matched
    assert not got[481.053].matched
    assert all(abs(m.observed_nm - m.reference_nm) <= 0.1 for m in got.values() if m.matched)


def test_distant_peak_never_removes_a_match():
    grid = np.arange(300.0, 700.0, 0.01)
    before = match_emission_lines(_gauss_spectrum([324.75, 330.26], grid), BRASS_LINES, 0.5)
    after = match_emission_lines(_gauss_spectrum([324.75, 330.26, 650.0], grid), BRASS_LINES, 0.5)
    for b, a in zip(before, after):
        if b.matched:
            assert a.matched and a.observed_nm == b.observed_nm


def test_tolerance_must_be_positive():
    with pytest.raises(ValueError):
        match_emission_lines(_gauss_spectrum([324.75], np.arange(300.0, 340.0, 0.01)), BRASS_LINES, 0.0)
