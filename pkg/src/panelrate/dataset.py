"""Panel count data with several recurrence modes.

Each subject is seen at a few visit times ``t_1 < ... < t_M`` and at every
visit we record the cumulative number of recurrences of each of ``J``
causes. Interval ``p`` of a subject is ``(t_{p-1}, t_p]`` with the
conventions ``t_0 = 0`` and a zero count at time 0.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyRiskSet, ParseError, ValidationError


def _frozen(a) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SubjectRecord:
    """One subject's visits.

    ``cumulative_counts`` has shape ``(J, M)``; row ``j`` is aligned with
    ``times``.
    """

    id: str
    times: np.ndarray
    cumulative_counts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "times", _frozen(np.asarray(self.times, dtype=float).reshape(-1)))
        counts = np.asarray(self.cumulative_counts)
        if counts.ndim == 1:
            counts = counts.reshape(1, -1)
        object.__setattr__(self, "cumulative_counts", _frozen(counts))

    @property
    def num_visits(self) -> int:
        return int(self.times.size)

    @property
    def last_time(self) -> float:
        return float(self.times[-1])

    def __eq__(self, other):
        if not isinstance(other, SubjectRecord):
            return NotImplemented
        return (
            self.id == other.id
            and np.array_equal(self.times, other.times)
            and self.cumulative_counts.shape == other.cumulative_counts.shape
            and np.array_equal(self.cumulative_counts, other.cumulative_counts)
        )

    __hash__ = None


@dataclass(frozen=True)
class Issue:
    kind: str
    subject: str
    field: str
    detail: str

    def __str__(self):
        return f"{self.kind}: subject {self.subject!r}, {self.field}: {self.detail}"


@dataclass(frozen=True)
class TimeGrid:
    """The distinct observation times ``b_1 < ... < b_l``."""

    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen(np.asarray(self.points, dtype=float)))

    def __len__(self):
        return int(self.points.size)


@dataclass(frozen=True, eq=False)
class PanelCountDataset:
    subjects: tuple
    num_causes: int
    cause_names: tuple = ()
    time_unit: str = "time"

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        names = tuple(self.cause_names) or tuple(f"cause_{j + 1}" for j in range(self.num_causes))
        object.__setattr__(self, "cause_names", names)

    @property
    def n(self) -> int:
        return len(self.subjects)

    def __len__(self):
        return len(self.subjects)

    def __eq__(self, other):
        if not isinstance(other, PanelCountDataset):
            return NotImplemented
        return (
            self.num_causes == other.num_causes
            and self.subjects == other.subjects
        )

    __hash__ = None

    @cached_property
    def intervals(self) -> "IntervalTable":
        return IntervalTable.from_dataset(self)

    @cached_property
    def last_times(self) -> np.ndarray:
        return _frozen([s.last_time for s in self.subjects])

    def subset(self, indices: Sequence[int]) -> "PanelCountDataset":
        """Dataset made of ``subjects[i]`` for each i (repeats allowed)."""
        return PanelCountDataset(
            tuple(self.subjects[i] for i in indices),
            self.num_causes,
            self.cause_names,
            self.time_unit,
        )

    def collapse_causes(self) -> "PanelCountDataset":
        """Single-cause dataset counting recurrences of every mode together."""
        subjects = tuple(
            SubjectRecord(s.id, s.times, s.cumulative_counts.sum(axis=0, keepdims=True))
            for s in self.subjects
        )
        return PanelCountDataset(subjects, 1, ("overall",), self.time_unit)


@dataclass(frozen=True)
class IntervalTable:
    """All subject intervals stacked: one row per (subject, visit)."""

    subject: np.ndarray  # subject index of each interval
    start: np.ndarray
    end: np.ndarray
    increments: np.ndarray  # shape (J, num_intervals)

    @classmethod
    def from_dataset(cls, dataset: PanelCountDataset) -> "IntervalTable":
        subj, start, end, inc = [], [], [], []
        for i, s in enumerate(dataset.subjects):
            subj.append(np.full(s.num_visits, i))
            start.append(np.concatenate(([0.0], s.times[:-1])))
            end.append(s.times)
            inc.append(np.diff(s.cumulative_counts, axis=1, prepend=0))
        if not subj:
            empty = np.zeros(0)
            return cls(empty.astype(int), empty, empty, np.zeros((dataset.num_causes, 0)))
        return cls(
            _frozen(np.concatenate(subj)),
            _frozen(np.concatenate(start)),
            _frozen(np.concatenate(end)),
            _frozen(np.concatenate(inc, axis=1).astype(float)),
        )

    @property
    def rates(self) -> np.ndarray:
        """Per-interval average rate, increment divided by interval length."""
        return self.increments / (self.end - self.start)


def validate(dataset: PanelCountDataset) -> PanelCountDataset:
    """Check every invariant and return the dataset unchanged.

    Raises :class:`ValidationError` listing every problem found, not just
    the first one.
    """
    issues: list[Issue] = []
    J = dataset.num_causes
    if not isinstance(J, (int, np.integer)) or J < 1:
        issues.append(Issue("CauseCountMismatch", "*", "num_causes", f"must be a positive integer, got {J!r}"))
        raise ValidationError(issues)
    if len(dataset.cause_names) != J:
        issues.append(Issue("CauseCountMismatch", "*", "cause_names", f"{len(dataset.cause_names)} names for {J} causes"))
    seen = set()
    for s in dataset.subjects:
        sid = s.id
        if sid in seen:
            issues.append(Issue("DuplicateSubject", sid, "id", "subject id appears more than once"))
        seen.add(sid)
        t = s.times
        c = s.cumulative_counts
        if t.size == 0:
            issues.append(Issue("EmptySubject", sid, "times", "no observation times"))
            continue
        if not np.all(np.isfinite(t)):
            issues.append(Issue("NonIncreasingTimes", sid, "times", "non-finite observation time"))
        elif t[0] <= 0:
            issues.append(Issue("NonIncreasingTimes", sid, "times", f"first time {t[0]:g} is not positive"))
        bad = np.nonzero(np.diff(t) <= 0)[0]
        if bad.size:
            p = int(bad[0]) + 1
            issues.append(Issue("NonIncreasingTimes", sid, "times", f"time[{p}]={t[p]:g} does not exceed time[{p - 1}]={t[p - 1]:g}"))
        if c.shape[0] != J:
            issues.append(Issue("CauseCountMismatch", sid, "cumulative_counts", f"{c.shape[0]} count streams, expected {J}"))
            continue
        if c.shape[1] != t.size:
            issues.append(Issue("CauseCountMismatch", sid, "cumulative_counts", f"{c.shape[1]} counts for {t.size} times"))
            continue
        cf = c.astype(float)
        if not np.all(np.isfinite(cf)) or np.any(cf != np.round(cf)):
            issues.append(Issue("NonIntegerCount", sid, "cumulative_counts", "counts must be integers"))
            continue
        if np.any(cf < 0):
            issues.append(Issue("NegativeCount", sid, "cumulative_counts", "counts must be non-negative"))
        for j in range(J):
            drops = np.nonzero(np.diff(cf[j]) < 0)[0]
            if drops.size:
                p = int(drops[0]) + 1
                issues.append(Issue(
                    "DecreasingCumulativeCount", sid, f"{dataset.cause_names[j]}",
                    f"count {int(cf[j, p])} at time {t[p]:g} is below {int(cf[j, p - 1])} at {t[p - 1]:g}",
                ))
    if issues:
        raise ValidationError(issues)
    return dataset


def increments(subject: SubjectRecord, cause: int):
    """List of ``((start, end), increment)`` for cause index ``cause`` (0-based)."""
    t = subject.times
    c = subject.cumulative_counts[cause]
    starts = np.concatenate(([0.0], t[:-1]))
    deltas = np.diff(c, prepend=0)
    return [((float(a), float(b)), int(d)) for a, b, d in zip(starts, t, deltas)]


def risk_set_size(dataset: PanelCountDataset, t):
    """Number of subjects still under observation at ``t`` (``t <= last visit``).

    Accepts a scalar or an array of times.
    """
    last = np.sort(dataset.last_times)
    counts = last.size - np.searchsorted(last, np.asarray(t, dtype=float), side="left")
    if np.ndim(counts) == 0:
        return int(counts)
    return counts


def time_grid(dataset: PanelCountDataset) -> TimeGrid:
    if dataset.n == 0:
        return TimeGrid(np.zeros(0))
    return TimeGrid(np.unique(np.concatenate([s.times for s in dataset.subjects])))


def require_risk(dataset: PanelCountDataset, t) -> np.ndarray:
    r = np.atleast_1d(risk_set_size(dataset, t))
    if np.any(r == 0):
        bad = np.asarray(t, dtype=float).reshape(-1)[r == 0][0]
        raise EmptyRiskSet(f"no subject is under observation at t={bad:g}")
    return r


# -- construction helpers ---------------------------------------------------

def from_rows(rows: Iterable[tuple], num_causes: int, cause_names: Sequence[str] = (),
              time_unit: str = "time", cumulative: bool = True) -> PanelCountDataset:
    """Build a dataset from ``(id, time, count_1, ..., count_J)`` rows.

    Rows are grouped by id in order of first appearance; the row order
    within a subject is kept (validation rejects unsorted times). With
    ``cumulative=False`` the counts are per-interval and get running-summed.
    """
    grouped: dict[str, list] = {}
    for row in rows:
        sid = str(row[0])
        grouped.setdefault(sid, []).append(row[1:])
    subjects = []
    for sid, visits in grouped.items():
        times = np.array([v[0] for v in visits], dtype=float)
        counts = np.array([[int(x) for x in v[1:]] for v in visits], dtype=np.int64).T.reshape(num_causes, -1)
        if not cumulative:
            counts = np.cumsum(counts, axis=1)
        subjects.append(SubjectRecord(sid, times, counts))
    return PanelCountDataset(tuple(subjects), num_causes, tuple(cause_names), time_unit)


def _parse_number(text: str, kind, source: str, line: int, column: str):
    try:
        value = kind(text)
    except ValueError:
        try:
            fv = float(text)
        except ValueError:
            raise ParseError(f"{source}:{line}: column {column!r}: cannot parse {text!r}") from None
        if kind is int and fv.is_integer():
            return int(fv)
        raise ParseError(f"{source}:{line}: column {column!r}: expected an integer, got {text!r}") from None
    return value


def parse_csv(text: str, source: str = "<string>", counts: str = "auto") -> PanelCountDataset:
    """Parse the long CSV layout, one row per visit.

    Two headers are understood: ``id,time,c1,...,cJ`` with cumulative
    counts, and ``id,mil,<cause...>,total`` where the cause columns hold the
    recurrences in the window ending at that visit and ``total`` must equal
    their sum. ``counts`` forces ``"cumulative"`` or ``"interval"``.
    """
    reader = csv.reader(io.StringIO(text))
    rows = [(i + 1, r) for i, r in enumerate(reader) if any(cell.strip() for cell in r)]
    if not rows:
        raise ParseError(f"{source}: empty file, expected a header line")
    _, header = rows[0]
    header = [h.strip() for h in header]
    if len(header) < 3 or header[0].lower() != "id":
        raise ParseError(f"{source}:1: header must be 'id,time,c1,...' (got {','.join(header)!r})")
    has_total = header[-1].lower() == "total"
    cause_cols = header[2:-1] if has_total else header[2:]
    if not cause_cols:
        raise ParseError(f"{source}:1: no count columns in header")
    if counts == "auto":
        counts = "interval" if has_total else "cumulative"
    if counts not in ("cumulative", "interval"):
        raise ValueError(f"counts must be 'auto', 'cumulative' or 'interval', not {counts!r}")

    parsed = []
    for line, r in rows[1:]:
        r = [c.strip() for c in r]
        if len(r) != len(header):
            raise ParseError(f"{source}:{line}: expected {len(header)} fields, found {len(r)}")
        t = _parse_number(r[1], float, source, line, header[1])
        cs = [_parse_number(x, int, source, line, col) for x, col in zip(r[2:2 + len(cause_cols)], cause_cols)]
        if has_total:
            total = _parse_number(r[-1], int, source, line, header[-1])
            if total != sum(cs):
                raise ParseError(f"{source}:{line}: total {total} differs from the row sum {sum(cs)}")
        parsed.append((r[0], t, *cs))
    if not parsed:
        raise ParseError(f"{source}: header only, no data rows")
    unit = header[1]
    ds = from_rows(parsed, len(cause_cols), cause_cols, unit, cumulative=(counts == "cumulative"))
    return validate(ds)


def read_csv(path, counts: str = "auto") -> PanelCountDataset:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{path}: cannot read file ({exc.strerror})") from None
    return parse_csv(text, source=str(path), counts=counts)


def _fmt_time(t: float) -> str:
    return repr(float(t))


def to_csv(dataset: PanelCountDataset) -> str:
    """Serialize to the ``id,time,c1,...,cJ`` cumulative layout (round-trips)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", dataset.time_unit, *dataset.cause_names])
    for s in dataset.subjects:
        for p, t in enumerate(s.times):
            w.writerow([s.id, _fmt_time(t), *(int(x) for x in s.cumulative_counts[:, p])])
    return buf.getvalue()


def write_csv(dataset: PanelCountDataset, path) -> None:
    Path(path).write_text(to_csv(dataset), encoding="utf-8")


EMBEDDED = ("warranty",)


def load_warranty() -> PanelCountDataset:
    """The automobile warranty claims data: 172 vehicles, three failure modes,
    visits at 1000, 2000 and 3000 miles.
    """
    text = resources.files("panelrate.resources").joinpath("warranty.csv").read_text(encoding="utf-8")
    return parse_csv(text, source="warranty.csv")


def load(name_or_path, counts: str = "auto") -> PanelCountDataset:
    """An embedded dataset by name, or a CSV file path."""
    if str(name_or_path) == "warranty":
        return load_warranty()
    return read_csv(name_or_path, counts=counts)
