import numpy as np
import pytest

from qsrc.ensembles import Ensemble, direct_sum


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def zero_plus():
    return Ensemble.from_vectors([[1, 0], [1, 1]])


@pytest.fixture
def two_block(zero_plus):
    return direct_sum([zero_plus, zero_plus], [0.5, 0.5])


@pytest.fixture
def acceptance_line(request):
    """Record one pass/fail line for the end-of-run acceptance summary."""
    lines = request.config.__dict__.setdefault("_acceptance_lines", {})

    def record(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        lines[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("_acceptance_lines")
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(lines):
        terminalreporter.write_line(lines[k])
