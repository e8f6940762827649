import sys
from pathlib import Path

import pytest

from drmlab.rel import parse_license
from drmlab.verifier import Instance

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"

# (criterion number, title, passed, detail) appended by test_acceptance.py
ACCEPTANCE_RESULTS = []


def load(name):
    return parse_license((FIXTURES / name).read_text())


@pytest.fixture
def three_rights():
    return load("three_rights.json")


@pytest.fixture
def shared_pair():
    return load("shared_pair_L1.json"), load("shared_pair_L2.json")


@pytest.fixture
def shared_instance(shared_pair):
    return Instance(shared_pair, 40, "shared_pair")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n, title, passed, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {n}. {title}: {detail}")
