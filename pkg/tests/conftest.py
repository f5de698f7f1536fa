import math

import numpy as np
import pytest


def angular_grid_margin(H, points=1_000_000, chunk=50_000):
    """Brute force max over unit x in R^2 of min_i h_i^T x."""
    H = np.asarray(H, dtype=float)
    best = -math.inf
    for start in range(0, points, chunk):
        theta = 2 * math.pi * np.arange(start, min(start + chunk, points)) / points
        X = np.stack([np.cos(theta), np.sin(theta)])
        best = max(best, float(np.max(np.min(H @ X, axis=0))))
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
