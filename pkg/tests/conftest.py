import numpy as np
import pytest

from modlab import grid


@pytest.fixture
def line():
    return grid.interval(-1.0, 1.0, 4096)


@pytest.fixture
def unit_line():
    return grid.interval(0.0, 1.0, 2048)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """record(n, ok, detail): print one PASS/FAIL line and keep it for the summary."""

    def record(n: int, ok: bool, detail: str) -> bool:
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
