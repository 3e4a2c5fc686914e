from __future__ import annotations

import pytest

from cesarolab.measure import Grid, HybridMeasure, TestFamily

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def grid():
    return Grid()


@pytest.fixture(scope="session")
def small_grid():
    return Grid(1e-6, 64)


@pytest.fixture(scope="session")
def family():
    return TestFamily.default()


@pytest.fixture(scope="session")
def uniform(grid):
    return HybridMeasure.uniform(grid)


@pytest.fixture
def criterion():
    """Record a one-line PASS/FAIL verdict, echoed in the terminal summary."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
