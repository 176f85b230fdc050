import numpy as np
import pytest
from hypothesis import given, settings

from panelrate.dataset import (
    PanelCountDataset,
    SubjectRecord,
    increments,
    parse_csv,
    read_csv,
    risk_set_size,
    time_grid,
    to_csv,
    validate,
)
from panelrate.errors import ParseError, ValidationError

from conftest import make_dataset, panel_datasets


def kinds(excinfo):
    return {i.kind for i in excinfo.value.issues}


def test_valid_subject_passes():
    # vehicle 37: one FM1 claim by 1000 miles, nothing more by 2000
    ds = make_dataset([([1000.0, 2000.0], [1, 1], [0, 0], [0, 1])])
    assert validate(ds) is ds


def test_nonincreasing_times():
    ds = make_dataset([([2000.0, 1000.0], [0, 0])])
    with pytest.raises(ValidationError) as exc:
        validate(ds)
    assert kinds(exc) == {"NonIncreasingTimes"}


def test_duplicate_time_rejected():
    with pytest.raises(ValidationError) as exc:
        validate(make_dataset([([1.0, 1.0], [0, 1])]))
    assert "NonIncreasingTimes" in kinds(exc)


def test_decreasing_cumulative_count():
    ds = make_dataset([([1.0, 2.0], [0, 0], [2, 1])])
    with pytest.raises(ValidationError) as exc:
        validate(ds)
    assert kinds(exc) == {"DecreasingCumulativeCount"}


def test_cause_count_mismatch_and_empty_subject_all_reported():
    subjects = (
        SubjectRecord("a", [1.0, 2.0], np.array([[0, 1]])),
        SubjectRecord("b", [], np.zeros((2, 0), dtype=int)),
        SubjectRecord("c", [3.0, 1.0], np.array([[0, 1], [1, 0]])),
    )
    with pytest.raises(ValidationError) as exc:
        validate(PanelCountDataset(subjects, 2))
    issues = exc.value.issues
    assert {(i.subject, i.kind) for i in issues} == {
        ("a", "CauseCountMismatch"),
        ("b", "EmptySubject"),
        ("c", "NonIncreasingTimes"),
        ("c", "DecreasingCumulativeCount"),
    }


def test_nonpositive_time_rejected():
    with pytest.raises(ValidationError):
        validate(make_dataset([([0.0, 1.0], [0, 0])]))


def test_increments_examples():
    s = SubjectRecord("x", [2.0, 4.0], [[1, 3]])
    assert increments(s, 0) == [((0.0, 2.0), 1), ((2.0, 4.0), 2)]
    s = SubjectRecord("45", [1000.0], [[2], [0], [0]])
    assert increments(s, 0) == [((0.0, 1000.0), 2)]
    s = SubjectRecord("y", [1000.0, 2000.0, 3000.0], [[1, 1, 1]])
    assert [d for _, d in increments(s, 0)] == [1, 0, 0]


@settings(max_examples=100, deadline=None)
@given(panel_datasets())
def test_increments_partition_and_sum(ds):
    for s in ds.subjects:
        for j in range(ds.num_causes):
            parts = increments(s, j)
            assert parts[0][0][0] == 0.0
            assert all(a[0][1] == b[0][0] for a, b in zip(parts, parts[1:]))
            assert parts[-1][0][1] == s.last_time
            assert all(d >= 0 for _, d in parts)
            assert sum(d for _, d in parts) == s.cumulative_counts[j, -1]


def test_risk_set_examples():
    ds = make_dataset([([2.0, 4.0], [0, 0]), ([3.0], [0])])
    assert risk_set_size(ds, 3.5) == 1
    assert risk_set_size(ds, 0.5) == 2
    assert risk_set_size(ds, 3.0) == 2  # closed at the last visit
    assert risk_set_size(ds, 4.5) == 0


@settings(max_examples=100, deadline=None)
@given(panel_datasets())
def test_risk_set_direct_count_and_monotone(ds):
    ts = np.linspace(0.01, ds.last_times.max() + 1, 97)
    counts = risk_set_size(ds, ts)
    direct = [sum(t <= s.last_time for s in ds.subjects) for t in ts]
    assert list(counts) == direct
    assert np.all(np.diff(counts) <= 0)


def test_time_grid_examples(warranty):
    ds = make_dataset([([2.0, 4.0], [0, 0]), ([3.0, 4.0], [0, 0])])
    assert list(time_grid(ds).points) == [2, 3, 4]
    assert list(time_grid(warranty).points) == [1000, 2000, 3000]
    assert list(time_grid(make_dataset([([5.0], [1])])).points) == [5]


@settings(max_examples=100, deadline=None)
@given(panel_datasets())
def test_time_grid_properties(ds):
    g = time_grid(ds).points
    assert np.all(np.diff(g) > 0)
    allt = np.concatenate([s.times for s in ds.subjects])
    assert set(allt) == set(g)
    assert len(g) <= allt.size


# -- CSV -----------------------------------------------------------------------

def test_warranty_embedded(warranty):
    assert warranty.n == 172
    assert warranty.num_causes == 3
    assert warranty.cause_names == ("fm1", "fm2", "fm3")
    by_id = {s.id: s for s in warranty.subjects}
    # vehicle 1 rows: 1000 -> (1,1,0), 3000 -> (1,0,0), counted per window
    assert list(by_id["1"].times) == [1000, 3000]
    assert by_id["1"].cumulative_counts.tolist() == [[1, 2], [1, 1], [0, 0]]
    assert by_id["37"].cumulative_counts[0].tolist() == [1, 1]
    assert by_id["45"].cumulative_counts[:, 0].tolist() == [2, 0, 0]
    assert by_id["169"].cumulative_counts.tolist() == [[1, 1, 1], [0, 0, 1], [0, 4, 4]]
    assert sum(s.num_visits for s in warranty.subjects) == 207


def test_total_column_checked():
    text = "id,mil,fm1,fm2,total\n1,1000,1,1,3\n"
    with pytest.raises(ParseError, match=r":2: total 3"):
        parse_csv(text)


def test_parse_errors_carry_row_numbers():
    with pytest.raises(ParseError, match=r"x.csv:3: column 'c1'"):
        parse_csv("id,time,c1\n1,1.0,0\n1,2.0,abc\n", source="x.csv")
    with pytest.raises(ParseError, match=r":2: expected 3 fields"):
        parse_csv("id,time,c1\n1,1.0\n")
    with pytest.raises(ParseError, match="empty"):
        parse_csv("")


def test_parse_validates():
    with pytest.raises(ValidationError):
        parse_csv("id,time,c1\n1,1.0,2\n1,2.0,1\n")


def test_read_missing_file(tmp_path):
    with pytest.raises(ParseError, match="cannot read"):
        read_csv(tmp_path / "nope.csv")


@settings(max_examples=100, deadline=None)
@given(panel_datasets())
def test_csv_round_trip(ds):
    back = parse_csv(to_csv(ds))
    assert back == ds
    for a, b in zip(ds.subjects, back.subjects):
        assert a.times.tobytes() == b.times.tobytes()


def test_round_trip_awkward_floats():
    ds = make_dataset([([0.1, 0.30000000000000004, 1e-7 + 1], [0, 1, 1])])
    back = parse_csv(to_csv(ds))
    assert back.subjects[0].times.tobytes() == ds.subjects[0].times.tobytes()


def test_datasets_immutable(two_subjects):
    with pytest.raises(ValueError):
        two_subjects.subjects[0].times[0] = 9.0
