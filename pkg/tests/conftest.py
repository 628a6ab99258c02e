import numpy as np
import pytest

from libsmanifold.dataset import SpectralDataset


@pytest.fixture
def tiny_csv(tmp_path):
    path = tmp_path / "tiny.csv"
    path.write_text(
        "sample_id,compound,200.0,200.5,201.0,201.5,202.0\n"
        "s1,a,1,2,3,4,5\n"
        "s1,a,0.5,-1,0,2.25,1e3\n"
        "s2,b,7,7,7,7,7\n",
        encoding="utf-8",
    )
    return path


def make_dataset(X, labels, grid=None, sample_ids=None):
    X = np.asarray(X, dtype=float)
    grid = np.arange(X.shape[1], dtype=float) + 200.0 if grid is None else grid
    sample_ids = sample_ids or [f"s{i}" for i in range(X.shape[0])]
    return SpectralDataset(X, grid, tuple(labels), tuple(sample_ids))


@pytest.fixture
def two_clusters():
    """Two groups of 5 points separated by a huge gap."""
    a = np.column_stack([np.arange(5.0), np.zeros(5)])
    b = a + np.array([1000.0, 0.0])
    return np.vstack([a, b])


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance gate")
        for line in sorted(lines, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
