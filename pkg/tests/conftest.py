import numpy as np
import pytest

from reviewnet.graph import ReviewEvent, TemporalBipartiteGraph


def build_graph(triples, rating=3.0):
    """Graph from (reviewer, product, timestamp) triples."""
    return TemporalBipartiteGraph.from_events(ReviewEvent(t, r, p, rating) for r, p, t in triples)


@pytest.fixture
def rng():
    return np.random.default_rng(72)


# acceptance criteria outcomes, echoed in the terminal summary
CRITERIA: dict[int, str] = {}


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
