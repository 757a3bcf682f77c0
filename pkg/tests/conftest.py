from pathlib import Path

import numpy as np
import pytest

from cuberl import oracle

ROOT = Path(__file__).resolve().parents[1]
ORACLE_PATH = ROOT / "artifacts" / "oracle.bin"


@pytest.fixture(scope="session")
def table() -> oracle.OracleTable:
    return oracle.load_or_build(ORACLE_PATH)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


# acceptance lines are printed again at the end of the run so they are
# visible without ``-s``
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
