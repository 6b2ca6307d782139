"""Ingestion: record parsing, trace canonicalization, device streaming."""

import gzip
import random

import pytest

from osclean.trace import (
    DeviceGrouper,
    ParseStats,
    Ping,
    RecordError,
    ResolvedSchema,
    Schema,
    SchemaError,
    build_trace,
    parse_ping_record,
    stream_devices,
)

RS = ResolvedSchema(0, 1, 2, 3, ",")


def test_parse_basic_record():
    p = parse_ping_record("dev1,1600000000,38.9897,-76.9378", RS, 1)
    assert p == Ping("dev1", 1600000000.0, 38.9897, -76.9378, 1)


def test_parse_millisecond_autoscale():
    p = parse_ping_record("dev1,1600000000000,38.9897,-76.9378", RS, 1)
    assert p.t == 1600000000.0


def test_parse_missing_timestamp():
    with pytest.raises(RecordError, match="missing timestamp"):
        parse_ping_record("dev1,,38.9,-76.9", RS, 7)


def test_parse_errors_carry_line_number():
    try:
        parse_ping_record("dev1,abc,38.9,-76.9", RS, 42)
    except RecordError as e:
        assert e.line_no == 42
    else:
        pytest.fail("expected RecordError")


def test_parse_short_line():
    with pytest.raises(RecordError, match="columns"):
        parse_ping_record("dev1,1600000000", RS, 1)


def test_parse_out_of_range_coordinate():
    with pytest.raises(RecordError, match="latitude"):
        parse_ping_record("dev1,1600000000,99.0,-76.9", RS, 1)
    with pytest.raises(RecordError, match="timestamp"):
        parse_ping_record("dev1,-5,38.9,-76.9", RS, 1)


def test_parse_custom_columns_and_delimiter():
    rs = ResolvedSchema(device=3, timestamp=0, lat=1, lon=2, delimiter=";")
    p = parse_ping_record("1600000000;38.9;-76.9;devX", rs, 1)
    assert p.device_id == "devX" and p.t == 1600000000.0


def _ping(t, lat=38.0, lon=-76.0, seq=0, dev="d"):
    return Ping(dev, t, lat, lon, seq)


def test_build_trace_sorts_and_is_idempotent():
    pings = [_ping(3, seq=3), _ping(1, seq=1), _ping(2, seq=2)]
    tr = build_trace(pings)
    assert [p.t for p in tr.pings] == [1, 2, 3]
    assert build_trace(tr.pings).pings == tr.pings


def test_build_trace_order_invariant():
    rng = random.Random(5)
    pings = [_ping(rng.randint(0, 50), lat=38 + rng.random(), seq=i)
             for i in range(40)]
    ref = build_trace(list(pings))
    for _ in range(5):
        shuffled = list(pings)
        rng.shuffle(shuffled)
        assert build_trace(shuffled).pings == ref.pings


def test_build_trace_equal_t_tiebreak_by_seq():
    a = _ping(5, lat=38.1, seq=9)
    b = _ping(5, lat=38.2, seq=2)
    tr = build_trace([a, b])
    assert [p.seq for p in tr.pings] == [2, 9]


def test_build_trace_dedupes_exact_triples():
    a = _ping(5, lat=38.1, lon=-76.1, seq=1)
    b = _ping(5, lat=38.1, lon=-76.1, seq=8)
    c = _ping(5, lat=38.2, lon=-76.1, seq=4)
    tr = build_trace([b, a, c])
    assert len(tr.pings) == 2
    kept = [p for p in tr.pings if p.lat == 38.1]
    assert kept[0].seq == 1


def test_build_trace_rejects_mixed_devices():
    with pytest.raises(ValueError, match="mixed device"):
        build_trace([_ping(1, dev="a"), _ping(2, dev="b")])


def test_build_trace_rejects_empty():
    with pytest.raises(ValueError):
        build_trace([])


# ---------------------------------------------------------------------------
# Streaming


def _lines(rows):
    return [",".join(str(x) for x in r) for r in rows]


def test_stream_contiguous_order():
    rows = [("A", 10, 38.0, -76.0), ("A", 20, 38.0, -76.0),
            ("B", 5, 39.0, -75.0), ("B", 6, 39.0, -75.0)]
    traces = list(stream_devices(_lines(rows), Schema()))
    assert [t.device_id for t in traces] == ["A", "B"]
    assert len(traces[0].pings) == 2


def test_stream_interleaved_groups():
    rows = [("A", 10, 38.0, -76.0), ("B", 5, 39.0, -75.0),
            ("A", 20, 38.1, -76.0), ("B", 6, 39.1, -75.0)]
    traces = {t.device_id: t for t in stream_devices(_lines(rows), Schema())}
    assert set(traces) == {"A", "B"}
    assert len(traces["A"].pings) == 2
    assert len(traces["B"].pings) == 2


def test_stream_empty_input():
    stats = ParseStats()
    assert list(stream_devices([], Schema(), stats)) == []
    assert stats.lines_total == 0
    assert stats.records_skipped == 0


def test_stream_counts_bad_records():
    lines = ["A,10,38.0,-76.0", "A,notatime,38.0,-76.0", "", "A,11,38.0,-76.0",
             ",12,38.0,-76.0"]
    stats = ParseStats()
    traces = list(stream_devices(lines, Schema(), stats))
    assert len(traces) == 1 and len(traces[0].pings) == 2
    assert stats.lines_total == 5
    assert stats.records_parsed == 2
    assert stats.records_skipped == 3
    assert stats.records_parsed + stats.records_skipped == stats.lines_total


def test_stream_header_autodetect():
    lines = ["device,ts,lat,lon", "A,10,38.0,-76.0"]
    stats = ParseStats()
    traces = list(stream_devices(lines, Schema(), stats))
    assert len(traces) == 1
    assert stats.header_lines == 1
    assert stats.records_parsed == 1
    assert stats.records_skipped == 0


def test_stream_named_columns():
    lines = ["lon,lat,ts,device", "-76.0,38.0,10,A", "-76.0,38.0,20,A"]
    schema = Schema(device="device", timestamp="ts", lat="lat", lon="lon")
    traces = list(stream_devices(lines, schema))
    assert traces[0].device_id == "A"
    assert traces[0].pings[0].lon == -76.0


def test_named_columns_without_header_rejected():
    schema = Schema(device="device", header="no")
    with pytest.raises(SchemaError):
        list(stream_devices(["A,10,38.0,-76.0"], schema))


def test_stream_from_contiguous_path(tmp_path):
    f = tmp_path / "pings.csv"
    f.write_text("A,10,38.0,-76.0\nA,11,38.0,-76.0\nB,5,39.0,-75.0\n")
    traces = list(stream_devices(str(f), Schema()))
    assert [t.device_id for t in traces] == ["A", "B"]


def test_stream_from_noncontiguous_path_spills(tmp_path):
    f = tmp_path / "pings.csv"
    f.write_text("A,10,38.0,-76.0\nB,5,39.0,-75.0\nA,11,38.0,-76.0\n")
    grouper = DeviceGrouper(str(f), Schema())
    assert grouper._is_contiguous() is False
    traces = {t.device_id: len(t.pings) for t in stream_devices(str(f), Schema())}
    assert traces == {"A": 2, "B": 1}


def test_stream_gzip_input(tmp_path):
    f = tmp_path / "pings.csv.gz"
    with gzip.open(f, "wt") as fh:
        fh.write("A,10,38.0,-76.0\nA,11,38.1,-76.0\n")
    traces = list(stream_devices(str(f), Schema()))
    assert len(traces[0].pings) == 2


def test_stream_is_lazy_for_contiguous_paths(tmp_path):
    # The first trace must be available after reading only its own block,
    # not the whole file (bounded-memory contract).
    f = tmp_path / "pings.csv"
    with open(f, "w") as fh:
        for d in range(50):
            for k in range(100):
                fh.write(f"d{d:03d},{k},38.0,-76.0\n")
    it = stream_devices(str(f), Schema())
    first = next(it)
    assert first.device_id == "d000" and len(first.pings) == 100
    rest = list(it)
    assert len(rest) == 49


def test_stats_duplicates_counted():
    lines = ["A,10,38.0,-76.0", "A,10,38.0,-76.0", "A,11,38.0,-76.0"]
    stats = ParseStats()
    traces = list(stream_devices(lines, Schema(), stats))
    assert len(traces[0].pings) == 2
    assert stats.duplicates_dropped == 1
    assert stats.records_parsed == 3
