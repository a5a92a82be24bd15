import sys
import warnings
from pathlib import Path

import pytest

from prasp_lite.engine import Engine, InferenceConfig, load_statements
from prasp_lite.query import QueryFile
from prasp_lite.syntax import parse_program

DATA = Path(__file__).parent / "data"
sys.path.insert(0, str(Path(__file__).parent))

# criterion number -> (label, "PASS" | "FAIL")
ACCEPTANCE: dict = {}


def run_queries(program, queries, **cfg) -> list:
    """Answer ``queries`` against ``program``.

    Both arguments are file names inside ``tests/data`` or program text.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        engine = Engine(_statements(program), InferenceConfig(**cfg))
        return engine.answer(QueryFile.from_statements(_statements(queries, query_mode=True)))


def _statements(src, query_mode=False) -> list:
    if "\n" not in src and (DATA / src).exists():
        return load_statements(DATA / src, query_mode=query_mode)
    return parse_program(src, query_mode=query_mode)


@pytest.fixture
def data_dir() -> Path:
    return DATA


def pytest_runtest_logreport(report):
    marker = "test_acceptance.py::test_criterion_"
    if report.when != "call" or marker not in report.nodeid:
        return
    name = report.nodeid.split(marker, 1)[1].split("[", 1)[0]
    number, _, label = name.partition("_")
    passed = report.passed and not hasattr(report, "wasxfail")
    # a criterion with several tests passes only if all of them pass
    old_label, old_status = ACCEPTANCE.get(int(number), (label.replace("_", " "), "PASS"))
    ACCEPTANCE[int(number)] = (old_label, "PASS" if passed and old_status == "PASS" else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        label, status = ACCEPTANCE[number]
        terminalreporter.write_line(f"{status} criterion {number:2d}: {label}")
