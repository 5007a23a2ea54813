import sys
from pathlib import Path

import pytest
from hypothesis import settings
from hypothesis import strategies as st

from diarcorrect.transcript import Transcript, Word

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None)
settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"

SMALL_VOCAB = ["a", "b", "c", "d", "e", "yes", "no", "um"]

words_st = st.lists(st.sampled_from(SMALL_VOCAB), max_size=10)


@st.composite
def transcripts(draw, min_size=0, max_size=10, max_speakers=3, vocab=SMALL_VOCAB):
    texts = draw(st.lists(st.sampled_from(vocab), min_size=min_size, max_size=max_size))
    labels = draw(
        st.lists(st.integers(1, max_speakers), min_size=len(texts), max_size=len(texts))
    )
    return Transcript(id="h", words=tuple(Word(t, s) for t, s in zip(texts, labels)))


def tx(*pairs, id="t"):
    """Build a transcript from ``("word", speaker)`` pairs."""
    return Transcript.from_pairs(pairs, id=id)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


_ACCEPTANCE: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        number, title = marker.args
        _ACCEPTANCE[number] = (title, "PASS" if report.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {title}")
