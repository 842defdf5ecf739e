import numpy as np
import pytest

from han_affect.corpus import Label, Session, Speaker, Turn
from han_affect.lexicon import Lexicon

T, C = Speaker.THERAPIST, Speaker.CLIENT


def make_session(sid, turns, label=Label.NOT_DEPRESSED, summary=None):
    """Build a Session from ``[(speaker, "space separated tokens"), ...]``."""
    return Session(
        sid,
        tuple(Turn(sp, tuple(text.split())) for sp, text in turns),
        tuple(summary.split()) if summary else None,
        label,
    )


def make_lexicon(name, categories, entries):
    return Lexicon(name, len(categories), tuple(categories), {w: np.asarray(v, dtype=float) for w, v in entries.items()})


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
