from __future__ import annotations

import numpy as np
import pytest

from convpart.quadrature import QuadratureConfig

# cheap settings for unit tests; acceptance runs use the defaults
FAST = QuadratureConfig(gl_points_per_axis=4, samples_per_cube=1024)


@pytest.fixture
def fast():
    return FAST


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import summary_lines
    except ImportError:
        return
    lines = summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
