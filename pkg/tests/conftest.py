import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

# acceptance outcomes, filled by test_acceptance.py and printed after the run
ACCEPTANCE: dict[int, tuple[str, str]] = {}


def record(criterion: int, ok: bool | None, detail: str = "") -> None:
    status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
    ACCEPTANCE[criterion] = (status, detail)
    print(f"criterion {criterion:2d}: {status} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {status} {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def M22():
    return np.array([[1.0, 2.0], [3.0, 4.0]])
