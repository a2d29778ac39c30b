import numpy as np
import pytest

from dctc.types import LabelSequence, ProbSequence, Vocabulary


def probs(M) -> ProbSequence:
    """ProbSequence from an explicit column-stochastic matrix (zeros allowed)."""
    M = np.asarray(M, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return ProbSequence(M, np.log(M))


def uniform(C: int, T: int) -> ProbSequence:
    return probs(np.full((C, T), 1.0 / C))


@pytest.fixture
def ab():
    return Vocabulary(("a", "b"))


@pytest.fixture
def lab():
    return lambda *ids: LabelSequence(tuple(ids))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
