from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from suffixgan.eventlog import (EmptyLog, EventLog, InvalidRatios, MissingColumn, UnparseableTimestamp, build_trace,
                                cycle_time, parse_csv, split_log, write_csv)
from suffixgan.synthetic import branching_model, generate_synthetic_log

T0 = datetime(2021, 3, 1, 9, 0, 0)


def write_rows(path, rows, header=("case_id", "activity", "timestamp")):
    path.write_text("\n".join([",".join(header)] + [",".join(r) for r in rows]) + "\n")
    return path


def ts(dt):
    return dt.strftime("%Y-%m-%d %H:%M:%S")


def test_single_case_durations(tmp_path):
    p = write_rows(tmp_path / "log.csv", [
        ("1", "a", ts(T0)), ("1", "b", ts(T0 + timedelta(days=1))), ("1", "c", ts(T0 + timedelta(days=3))),
    ])
    log = parse_csv(p)
    assert len(log) == 1
    assert log.traces[0].durations == [0.0, 1.0, 2.0]
    assert log.traces[0].labels == ["a", "b", "c"]


def test_interleaved_cases_grouped_and_sorted(tmp_path):
    rows = [
        ("x", "a", ts(T0)),
        ("y", "p", ts(T0 + timedelta(hours=1))),
        ("x", "c", ts(T0 + timedelta(hours=5))),
        ("y", "q", ts(T0 + timedelta(hours=2))),
        ("x", "b", ts(T0 + timedelta(hours=3))),  # out of order in the file
        ("y", "r", ts(T0 + timedelta(hours=2))),  # tie with q: file order kept
    ]
    log = parse_csv(write_rows(tmp_path / "log.csv", rows))
    # sorted by hand
    assert [t.case_id for t in log] == ["x", "y"]
    assert log.traces[0].labels == ["a", "b", "c"]
    assert log.traces[1].labels == ["p", "q", "r"]
    assert log.traces[0].durations == pytest.approx([0.0, 3 / 24, 2 / 24])
    assert log.traces[1].durations == pytest.approx([0.0, 1 / 24, 0.0])
    assert log.activity_universe == {"a", "b", "c", "p", "q", "r"}


def test_custom_columns_and_format(tmp_path):
    p = write_rows(tmp_path / "log.csv", [("7", "go", "01/03/2021 10:00")], header=("Case ID", "Activity", "Time"))
    log = parse_csv(p, {"case": "Case ID", "activity": "Activity", "timestamp": "Time"}, "%d/%m/%Y %H:%M")
    assert log.traces[0].events[0].timestamp == datetime(2021, 3, 1, 10, tzinfo=timezone.utc)


def test_missing_column(tmp_path):
    p = write_rows(tmp_path / "log.csv", [("1", "a")], header=("case_id", "activity"))
    with pytest.raises(MissingColumn, match="timestamp"):
        parse_csv(p)


def test_unparseable_timestamp_reports_row(tmp_path):
    p = write_rows(tmp_path / "log.csv", [("1", "a", ts(T0)), ("1", "b", "yesterday")])
    with pytest.raises(UnparseableTimestamp) as err:
        parse_csv(p)
    assert err.value.row == 3


def test_empty_log(tmp_path):
    with pytest.raises(EmptyLog):
        parse_csv(write_rows(tmp_path / "log.csv", []))


def test_cycle_time():
    single = build_trace("c", [("a", T0)])
    assert cycle_time(single) == 0.0
    t = build_trace("c", [("a", T0), ("b", T0 + timedelta(days=1.5)), ("c", T0 + timedelta(days=4))])
    assert t.durations == pytest.approx([0, 1.5, 2.5])
    assert cycle_time(t) == pytest.approx(4.0)


def test_csv_round_trip(tmp_path):
    log = generate_synthetic_log(branching_model(), 30, seed=3)
    write_csv(log, tmp_path / "out.csv")
    again = parse_csv(tmp_path / "out.csv")
    assert [t.case_id for t in again] == [t.case_id for t in log]
    for a, b in zip(log, again):
        assert a.labels == b.labels
        assert a.durations == pytest.approx(b.durations, abs=1e-9)


def test_cycle_time_equals_span():
    log = generate_synthetic_log(branching_model(), 50, seed=11)
    for t in log:
        span = (t.events[-1].timestamp - t.events[0].timestamp).total_seconds() / 86400
        assert abs(cycle_time(t) - span) <= 1 / 86400


def _log(n):
    return EventLog([build_trace(f"c{i}", [("a", T0)]) for i in range(n)])


@pytest.mark.parametrize("n, sizes", [(100, (80, 15, 5)), (101, (81, 15, 5)), (7, (6, 1, 0)), (3, (3, 0, 0))])
def test_split_sizes(n, sizes):
    parts = split_log(_log(n), (0.8, 0.15, 0.05), seed=1)
    assert tuple(len(p) for p in parts) == sizes


def test_split_deterministic():
    a = split_log(_log(50), seed=4)
    b = split_log(_log(50), seed=4)
    assert [[t.case_id for t in p] for p in a] == [[t.case_id for t in p] for p in b]


@pytest.mark.parametrize("ratios", [(0.8, 0.1, 0.05), (1.0, 0.0, 0.0), (0.9, 0.2, -0.1)])
def test_invalid_ratios(ratios):
    with pytest.raises(InvalidRatios):
        split_log(_log(3), ratios)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 300), seed=st.integers(0, 2**16))
def test_split_partitions_traces(n, seed):
    parts = split_log(_log(n), (0.8, 0.15, 0.05), seed)
    ids = [t.case_id for p in parts for t in p]
    assert len(ids) == n
    assert len(set(ids)) == n
