import os
import warnings
from pathlib import Path

import pytest

from qml.lcentral import LValueCache
from qml.mollifier import LadderWarning

ROOT = Path(__file__).resolve().parents[1]
CACHE_DIR = Path(os.environ.get("QML_CACHE_DIR", ROOT / ".qml-cache"))
CACHE_EPS = 1e-8
# the smooth weight reaches 2.5 X, and X = 1e6 is the largest acceptance scale
CACHE_PMAX = 2_500_000

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def lvalue_cache():
    CACHE_DIR.mkdir(parents=True, exist_ok=True)
    cache = LValueCache.open(CACHE_DIR / "cv_1e-08.csv", CACHE_EPS)
    cache.ensure(3, CACHE_PMAX, workers=int(os.environ.get("QML_WORKERS", os.cpu_count() or 1)))
    return cache


@pytest.fixture(scope="session")
def lvalue_table(lvalue_cache):
    return lvalue_cache.table()


@pytest.fixture(autouse=True)
def _quiet_ladder():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LadderWarning)
        yield


@pytest.fixture
def acceptance():
    """Record one summary line per acceptance criterion and assert it."""

    def record(number, name, ok, detail):
        line = f"criterion {number:>2} [{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
