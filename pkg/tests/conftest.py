import sys
from importlib import resources
from pathlib import Path

import pytest

from convrewrite.conversation import Conversation, Turn, load_topics

TESTS = Path(__file__).parent
FIXTURES = TESTS / "fixtures"
GOLDEN = TESTS / "golden"
ROOT = TESTS.parent
ECHO_SCORER = [sys.executable, str(ROOT / "scripts" / "echo_scorer.py")]

sys.path.insert(0, str(TESTS))


def toy_path(name=""):
    return Path(str(resources.files("convrewrite.data").joinpath("toy", name)))


def make_conversation(conv_id, n_turns, manual=True):
    turns = [Turn(conv_id, i, f"question {i} of {conv_id}",
                  f"full question {i} of conversation {conv_id}" if manual or i == 1 else None)
             for i in range(1, n_turns + 1)]
    return Conversation(conv_id, tuple(turns))


@pytest.fixture
def conv31():
    return load_topics(FIXTURES / "cast2019_conv31.json")[0]


@pytest.fixture
def toy_topics():
    return load_topics(toy_path("topics.json"))


@pytest.fixture
def example32(toy_topics):
    return next(c for c in toy_topics if c.conv_id == 32)


# -- acceptance reporting --------------------------------------------------------

ACCEPTANCE_LINES = {}


class _Criterion:
    def __init__(self, number, title):
        self.number, self.title, self.details = number, title, []

    def note(self, text):
        self.details.append(text)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        detail = "; ".join(self.details)
        if exc_type is not None:
            detail = (detail + "; " if detail else "") + f"{exc_type.__name__}: {exc}".splitlines()[0]
        line = f"[{status}] criterion {self.number}: {self.title}" + (f" ({detail})" if detail else "")
        ACCEPTANCE_LINES[self.number] = line
        print(line)
        return False


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
