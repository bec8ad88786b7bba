"""Event log ingestion: CSV parsing, case grouping, durations and splits."""
from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

DEFAULT_TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S"
DEFAULT_COLUMNS = {"case": "case_id", "activity": "activity", "timestamp": "timestamp"}
SECONDS_PER_DAY = 86400.0


class EventLogError(ValueError):
    """Base class for ingestion failures."""


class MissingColumn(EventLogError):
    def __init__(self, column: str, available: Sequence[str]):
        super().__init__(f"missing column {column!r}; header has {list(available)}")
        self.column = column


class UnparseableTimestamp(EventLogError):
    def __init__(self, row: int, value: str, fmt: str):
        super().__init__(f"row {row}: cannot parse timestamp {value!r} with format {fmt!r}")
        self.row = row


class EmptyLog(EventLogError):
    pass


class InvalidRatios(EventLogError):
    pass


@dataclass(frozen=True)
class Event:
    activity: str
    case_id: str
    timestamp: datetime
    duration: float = 0.0  # days since previous event of the same case


@dataclass(frozen=True)
class Trace:
    case_id: str
    events: tuple[Event, ...]

    def __post_init__(self):
        if not self.events:
            raise ValueError(f"trace {self.case_id!r} has no events")

    def __len__(self) -> int:
        return len(self.events)

    @property
    def labels(self) -> list[str]:
        return [e.activity for e in self.events]

    @property
    def durations(self) -> list[float]:
        return [e.duration for e in self.events]


@dataclass
class EventLog:
    traces: list[Trace] = field(default_factory=list)

    @property
    def activity_universe(self) -> set[str]:
        return {e.activity for t in self.traces for e in t.events}

    @property
    def n_events(self) -> int:
        return sum(len(t) for t in self.traces)

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)


def _as_utc(ts: datetime) -> datetime:
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def build_trace(case_id: str, items: Iterable[tuple[str, datetime]]) -> Trace:
    """Build a trace from (activity, timestamp) pairs, stable-sorted by time."""
    ordered = sorted(((a, _as_utc(t)) for a, t in items), key=lambda x: x[1])
    events = []
    prev = None
    for activity, ts in ordered:
        dur = 0.0 if prev is None else (ts - prev).total_seconds() / SECONDS_PER_DAY
        events.append(Event(activity, case_id, ts, dur))
        prev = ts
    return Trace(case_id, tuple(events))


def parse_csv(
    path: str | Path,
    column_map: Mapping[str, str] | None = None,
    timestamp_format: str = DEFAULT_TIMESTAMP_FORMAT,
) -> EventLog:
    """Read an event log from a CSV file with a header row.

    ``column_map`` maps the logical names ``case``, ``activity`` and
    ``timestamp`` to header names. Traces come out in order of first
    appearance of their case id.
    """
    cols = dict(DEFAULT_COLUMNS)
    cols.update(column_map or {})
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for key in ("case", "activity", "timestamp"):
            if cols[key] not in header:
                raise MissingColumn(cols[key], header)
        groups: dict[str, list[tuple[str, datetime]]] = {}
        # row numbers count the header as row 1
        for rownum, row in enumerate(reader, start=2):
            raw = row[cols["timestamp"]]
            try:
                ts = datetime.strptime(raw, timestamp_format)
            except (TypeError, ValueError):
                raise UnparseableTimestamp(rownum, raw, timestamp_format) from None
            groups.setdefault(row[cols["case"]], []).append((row[cols["activity"]], ts))
    if not groups:
        raise EmptyLog(f"{path}: no events")
    return EventLog([build_trace(case, items) for case, items in groups.items()])


def write_csv(
    log: EventLog,
    path: str | Path,
    column_map: Mapping[str, str] | None = None,
    timestamp_format: str = DEFAULT_TIMESTAMP_FORMAT,
) -> None:
    cols = dict(DEFAULT_COLUMNS)
    cols.update(column_map or {})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([cols["case"], cols["activity"], cols["timestamp"]])
        for trace in log.traces:
            for e in trace.events:
                writer.writerow([e.case_id, e.activity, e.timestamp.strftime(timestamp_format)])


def cycle_time(trace: Trace) -> float:
    """Total elapsed time of a trace in days (sum of its inter-event durations)."""
    return math.fsum(e.duration for e in trace.events)


def split_log(
    log: EventLog,
    ratios: tuple[float, float, float] = (0.8, 0.15, 0.05),
    seed: int = 0,
) -> tuple[EventLog, EventLog, EventLog]:
    """Shuffle traces and partition them into (train, test, validation).

    Test and validation get ``floor(n * r)`` traces, train gets the rest.
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidRatios(f"ratios must be three positive numbers summing to 1, got {ratios}")
    n = len(log.traces)
    order = list(range(n))
    random.Random(seed).shuffle(order)
    # the epsilon keeps e.g. 100 * 0.29 from flooring to 28
    n_test = math.floor(n * ratios[1] + 1e-9)
    n_val = math.floor(n * ratios[2] + 1e-9)
    n_train = n - n_test - n_val
    pick = lambda idx: EventLog([log.traces[i] for i in idx])  # noqa: E731
    return (
        pick(order[:n_train]),
        pick(order[n_train:n_train + n_test]),
        pick(order[n_train + n_test:]),
    )
