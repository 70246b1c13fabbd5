import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).parent
sys.path.insert(0, str(TESTS))

FIXTURES = TESTS / "fixtures"
CORPUS = FIXTURES / "corpus"
QUALITY_PROJECT = FIXTURES / "quality_project"


@pytest.fixture
def corpus_dir():
    return CORPUS


@pytest.fixture
def quality_project():
    return QUALITY_PROJECT


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "ACCEPTANCE_LINES", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
