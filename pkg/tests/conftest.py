from __future__ import annotations

import numpy as np
import pytest

from fracdg.mesh import generate_structured, generate_unstructured


@pytest.fixture(scope="session")
def square8():
    return generate_structured(2)


@pytest.fixture(scope="session")
def unstructured100():
    return generate_unstructured(100, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from tests import acceptance_log

    lines = acceptance_log.summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
