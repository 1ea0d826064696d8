import numpy as np
import pytest

from spde_split import GridSpec


@pytest.fixture
def grid():
    return GridSpec(64)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_state(rng, n, scale=1.0):
    return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record one pass/fail line for the acceptance summary, then assert."""

    def check(label: str, passed: bool, detail: str) -> None:
        line = f"{label}: {'PASS' if passed else 'FAIL'} ({detail})"
        _CRITERIA.append(line)
        print(line)
        assert passed, line

    return check


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
