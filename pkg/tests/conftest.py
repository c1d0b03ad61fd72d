import numpy as np
import pytest

from dogbo.tablegen import ScoreTable, SearchBounds, TableMeta, sample_grid


def synthetic_table(phi, seed: int = 0) -> ScoreTable:
    """A table with real grid points but made-up scores, for BO tests."""
    phi = np.asarray(phi, dtype=float)
    bounds = SearchBounds.default()
    grid = sample_grid(bounds, len(phi), seed, "UniformRandom")
    n = len(phi)
    sums = np.column_stack([phi, np.zeros(n), np.zeros(n), np.zeros(n)])
    meta = TableMeta("synthetic", 3.5, 0.5, "synthetic", seed, "UniformRandom", n)
    return ScoreTable(bounds, grid, phi, np.ones(n), sums, np.zeros(n, bool), meta)


@pytest.fixture
def small_table():
    return synthetic_table(np.linspace(0.0, 60.0, 100)[np.random.default_rng(0).permutation(100)])


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
