import numpy as np
import pytest
from hypothesis import settings

from mzklab.grid import Field, RectGrid

settings.register_profile("default", deadline=None, max_examples=30)
settings.load_profile("default")


def random_conformant(grid: RectGrid, seed: int) -> Field:
    rng = np.random.default_rng(seed)
    v = np.zeros(grid.shape)
    v[1:-1, 1:-1] = rng.standard_normal((grid.Nx - 1, grid.Ny - 1))
    return Field(grid, v)


@pytest.fixture
def unit_grid():
    return RectGrid(1.0, 1.0, 32, 32)


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> str:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 10):
        terminalreporter.write_line(ACCEPTANCE.get(n, f"criterion {n}: FAIL  (no result, test did not finish)"))
