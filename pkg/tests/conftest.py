from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from ddsde import drift as dr
from ddsde import grid as gd
from ddsde import initial as ini

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def kat_vectors():
    return json.loads((DATA / "threefry2x32_kat.json").read_text())["vectors"]


@pytest.fixture(scope="session")
def wide_grid():
    """[-20, 20] with 4096 cells: the zero-drift reference grid."""
    return gd.GridSpec.box(20.0, 4096)


@pytest.fixture(scope="session")
def grid16():
    return gd.GridSpec.box(16.0, 4096)


@pytest.fixture(scope="session")
def coarse16():
    return gd.GridSpec.box(16.0, 512)


@pytest.fixture(scope="session")
def gauss05():
    """N(0, 0.5): bounded density, so it lies in every L^q."""
    return ini.gaussian([0.0], 0.5, q=np.inf)


@pytest.fixture(scope="session")
def origin():
    return ini.point_mass([0.0])


@pytest.fixture(scope="session")
def tanh_drift():
    return dr.tanh_density()


def pytest_configure(config):
    config._criterion_lines = []


@pytest.fixture
def record_criterion(request):
    """Append a one-line verdict shown in the terminal summary."""
    lines = request.config._criterion_lines

    def record(number: int, passed: bool, text: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {text}"
        lines.append((number, line))
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_criterion_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
