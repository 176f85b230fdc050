import numpy as np
import pytest
from hypothesis import strategies as st

from panelrate.dataset import PanelCountDataset, SubjectRecord, load_warranty

# filled by the acceptance suite, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def make_dataset(subjects, num_causes=None):
    """``subjects`` is a list of (times, [counts of cause 1], [counts of cause 2], ...)."""
    recs = []
    for i, (times, *streams) in enumerate(subjects):
        recs.append(SubjectRecord(str(i + 1), times, np.array(streams, dtype=np.int64)))
    J = num_causes or len(subjects[0]) - 1
    return PanelCountDataset(tuple(recs), J)


@pytest.fixture(scope="session")
def warranty():
    return load_warranty()


@pytest.fixture
def two_subjects():
    # S1: visits 2, 4 with cause-1 totals 1, 3; S2: one visit at 3 with 2 events
    return make_dataset([([2.0, 4.0], [1, 3]), ([3.0], [2])])


@st.composite
def panel_datasets(draw, max_subjects=6, max_visits=5, max_causes=3, max_count=4):
    J = draw(st.integers(1, max_causes))
    n = draw(st.integers(1, max_subjects))
    subjects = []
    for _ in range(n):
        m = draw(st.integers(1, max_visits))
        gaps = draw(st.lists(st.integers(1, 6), min_size=m, max_size=m))
        times = np.cumsum(gaps).astype(float) / 2
        streams = []
        for _ in range(J):
            inc = draw(st.lists(st.integers(0, max_count), min_size=m, max_size=m))
            streams.append(list(np.cumsum(inc)))
        subjects.append((times, *streams))
    return make_dataset(subjects, J)
