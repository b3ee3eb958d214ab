import sys
import warnings
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qet.cli import corpus_dir  # noqa: E402
from qet.syntax import load_program  # noqa: E402

CORPUS = corpus_dir()
PROGRAMS = sorted(p.name for p in CORPUS.glob("*.qw"))


def pytest_configure(config):
    # clamped arithmetic expectations are intended in random tests
    warnings.filterwarnings("ignore", message="arithmetic expectation")


@pytest.fixture(scope="session")
def corpus():
    return CORPUS


def load(name):
    """``(program, varsets)`` of a bundled corpus program."""
    return load_program((CORPUS / name).read_text())


def inv_text(name):
    return (CORPUS / name).read_text()


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
