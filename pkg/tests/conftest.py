import sys
from pathlib import Path

import pytest

from procrl.synthetic import generate_dataset
from procrl.traces import Choice, QAInstance

TESTS = Path(__file__).resolve().parent
FIXTURES = TESTS / "fixtures"
sys.path.insert(0, str(TESTS))


def make_instance(id="x", caption=("man", "voice", "low"), question="Who is speaking?",
                  texts=("man", "woman", "child", "robot"),
                  concepts=(("man", "low"), ("woman", "high"), ("child", "high"), ("robot", "synthetic")),
                  gold=0):
    return QAInstance(id, tuple(caption), question, tuple(Choice(t, tuple(c)) for t, c in zip(texts, concepts)), gold)


@pytest.fixture
def speaker():
    return make_instance()


@pytest.fixture(scope="session")
def small_dataset():
    return generate_dataset(0, 40)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""
    results = request.config.stash.setdefault(ACCEPTANCE_KEY, {})

    def record(number: int, title: str, ok: bool, detail: str = ""):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
        results[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE_KEY, {})
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
