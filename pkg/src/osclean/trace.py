"""Ingest raw ping records and canonicalize per-device traces.

Input is delimited UTF-8 text (gzip accepted by extension), one sighting
per line: device id, epoch timestamp, latitude, longitude. Columns are
configurable by index or by header name. Bad records are skipped and
counted, never fatal: passively collected feeds are dirty by nature.
"""

from __future__ import annotations

import gzip
import io
import os
import tempfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Union

from .geo import CoordinateError, normalize_lon, validate_latlon

# Epoch values above this are taken to be milliseconds and scaled down.
MS_THRESHOLD = 1e11

_SPILL_BUCKETS = 64
_ERROR_SAMPLE_LIMIT = 20


class RecordError(ValueError):
    """One unparseable input record; carries the 1-based line number."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class SchemaError(ValueError):
    """Column mapping cannot be applied to the input."""


@dataclass(slots=True)
class Ping:
    """One GPS sighting. seq is the 1-based input line number, used for
    deterministic tie-breaking of equal timestamps."""

    device_id: str
    t: float
    lat: float
    lon: float
    seq: int = 0


@dataclass
class Trace:
    """Canonical per-device ping sequence: nondecreasing t, seq tie-break,
    exact (t, lat, lon) duplicates collapsed."""

    device_id: str
    pings: list[Ping]


@dataclass
class Schema:
    """Column mapping: each entry is an int index or a header name."""

    device: Union[int, str] = 0
    timestamp: Union[int, str] = 1
    lat: Union[int, str] = 2
    lon: Union[int, str] = 3
    delimiter: str = ","
    header: str = "auto"  # auto | yes | no

    def needs_header(self) -> bool:
        return any(isinstance(c, str) for c in
                   (self.device, self.timestamp, self.lat, self.lon))

    def resolve(self, header_line: Optional[str]) -> "ResolvedSchema":
        """Turn name-based columns into indices using the header line."""
        if self.needs_header():
            if header_line is None:
                raise SchemaError("schema references column names but the "
                                  "input has no header")
            names = [c.strip() for c in header_line.split(self.delimiter)]
            index = {name: i for i, name in enumerate(names)}

            def col(spec):
                if isinstance(spec, int):
                    return spec
                try:
                    return index[spec]
                except KeyError:
                    raise SchemaError(f"column {spec!r} not in header {names}") from None
        else:
            def col(spec):
                return spec
        return ResolvedSchema(col(self.device), col(self.timestamp),
                              col(self.lat), col(self.lon), self.delimiter)


@dataclass(frozen=True)
class ResolvedSchema:
    device: int
    timestamp: int
    lat: int
    lon: int
    delimiter: str


@dataclass
class ParseStats:
    """Per-file ingestion summary. parsed + skipped equals the data line
    count, so nothing is lost silently."""

    lines_total: int = 0
    header_lines: int = 0
    records_parsed: int = 0
    records_skipped: int = 0
    duplicates_dropped: int = 0
    error_sample: list[str] = field(default_factory=list)

    def record_error(self, err: RecordError) -> None:
        self.records_skipped += 1
        if len(self.error_sample) < _ERROR_SAMPLE_LIMIT:
            self.error_sample.append(str(err))


def parse_ping_record(line: str, schema: ResolvedSchema, seq: int) -> Ping:
    """Parse one data line into a validated Ping.

    Timestamps are epoch seconds; values above MS_THRESHOLD are treated
    as epoch milliseconds and scaled down.
    """
    fields = line.split(schema.delimiter)
    ncols = max(schema.device, schema.timestamp, schema.lat, schema.lon) + 1
    if len(fields) < ncols:
        raise RecordError(seq, f"expected at least {ncols} columns, got {len(fields)}")
    device = fields[schema.device].strip()
    if not device:
        raise RecordError(seq, "missing device id")
    raw_t = fields[schema.timestamp].strip()
    if not raw_t:
        raise RecordError(seq, "missing timestamp")
    try:
        t = float(raw_t)
    except ValueError:
        raise RecordError(seq, f"unparseable timestamp {raw_t!r}") from None
    if not (t == t and 0 <= t < float("inf")):
        raise RecordError(seq, f"timestamp {raw_t!r} out of range")
    if t > MS_THRESHOLD:
        t = t / 1000.0
    try:
        lat = float(fields[schema.lat])
        lon = float(fields[schema.lon])
    except ValueError:
        raise RecordError(seq, "unparseable coordinate") from None
    try:
        validate_latlon(lat, lon)
    except CoordinateError as e:
        raise RecordError(seq, str(e)) from None
    return Ping(device, t, lat, normalize_lon(lon), seq)


def build_trace(pings: Iterable[Ping]) -> Trace:
    """Canonicalize one device's pings: stable sort by (t, seq), collapse
    exact (t, lat, lon) duplicates keeping the lowest seq."""
    pings = list(pings)
    if not pings:
        raise ValueError("cannot build a trace from zero pings")
    device_id = pings[0].device_id
    for p in pings:
        if p.device_id != device_id:
            raise ValueError(f"mixed device ids: {device_id!r} and {p.device_id!r}")
    pings.sort(key=lambda p: (p.t, p.seq))
    out: list[Ping] = []
    seen: set[tuple[float, float, float]] = set()
    for p in pings:
        key = (p.t, p.lat, p.lon)
        if key in seen:
            continue
        seen.add(key)
        out.append(p)
    return Trace(device_id, out)


# ---------------------------------------------------------------------------
# Streaming input


def open_text(path) -> io.TextIOBase:
    """Open a possibly gzip-compressed text file (by .gz extension)."""
    path = os.fspath(path)
    if path.endswith(".gz"):
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def _looks_like_header(line: str, schema: Schema) -> bool:
    if schema.needs_header():
        return True
    fields = line.split(schema.delimiter)
    for col in (schema.timestamp, schema.lat, schema.lon):
        if isinstance(col, int) and col < len(fields):
            try:
                float(fields[col])
            except ValueError:
                return True
    return False


def _device_field(line: str, resolved: ResolvedSchema) -> Optional[str]:
    fields = line.split(resolved.delimiter)
    if resolved.device >= len(fields):
        return None
    dev = fields[resolved.device].strip()
    return dev or None


class DeviceGrouper:
    """Group an input's raw lines by device id.

    File paths are handled with bounded memory: a cheap pre-scan decides
    whether every device forms one contiguous block. If so the groups are
    streamed directly; otherwise the lines take an external grouping pass
    (spill to hash buckets on disk, then group one bucket at a time; the
    resulting device order is deterministic but follows bucket order
    rather than first appearance). Non-path iterables are grouped in
    memory, which is fine for the small inputs they are used for.
    """

    def __init__(self, source, schema: Schema,
                 stats: Optional[ParseStats] = None):
        self.schema = schema
        self.stats = stats
        self.is_path = isinstance(source, (str, Path))
        if self.is_path:
            self.source = source
            with open_text(source) as fh:
                first = fh.readline()
            first_line = first.rstrip("\r\n") if first else None
        else:
            self.lines = [ln.rstrip("\r\n") for ln in source]
            first_line = self.lines[0] if self.lines else None

        if first_line is None:
            self.has_header = False
            self.header_line = None
            self.resolved = schema.resolve(None) if not schema.needs_header() else None
            return
        if schema.header == "no" and schema.needs_header():
            raise SchemaError("schema references column names but header=no")
        self.has_header = (schema.header == "yes"
                           or (schema.header == "auto"
                               and _looks_like_header(first_line, schema)))
        self.header_line = first_line if self.has_header else None
        self.resolved = schema.resolve(first_line if self.has_header else None)
        if stats is not None and self.has_header:
            stats.header_lines = 1

    def _data_lines(self) -> Iterator[tuple[int, str]]:
        """(1-based line number, line) for every data line, counting totals."""
        stats = self.stats
        if self.is_path:
            with open_text(self.source) as fh:
                for seq, raw in enumerate(fh, start=1):
                    if stats is not None:
                        stats.lines_total += 1
                    if seq == 1 and self.has_header:
                        continue
                    yield seq, raw.rstrip("\r\n")
        else:
            for seq, line in enumerate(self.lines, start=1):
                if stats is not None:
                    stats.lines_total += 1
                if seq == 1 and self.has_header:
                    continue
                yield seq, line

    def _skip(self, seq: int, reason: str) -> None:
        if self.stats is not None:
            self.stats.record_error(RecordError(seq, reason))

    def _records(self) -> Iterator[tuple[int, str, str]]:
        """(seq, device, line) for groupable lines; blank or device-less
        lines are counted as skipped records here, keeping the
        parsed + skipped == data-lines conservation exact."""
        for seq, line in self._data_lines():
            if not line:
                self._skip(seq, "blank line")
                continue
            dev = _device_field(line, self.resolved)
            if dev is None:
                self._skip(seq, "missing device id")
                continue
            yield seq, dev, line

    def _is_contiguous(self) -> bool:
        seen: set[str] = set()
        current: Optional[str] = None
        with open_text(self.source) as fh:
            for seq, raw in enumerate(fh, start=1):
                if seq == 1 and self.has_header:
                    continue
                dev = _device_field(raw.rstrip("\r\n"), self.resolved)
                if dev is None or dev == current:
                    continue
                if dev in seen:
                    return False
                seen.add(dev)
                current = dev
        return True

    def __iter__(self) -> Iterator[tuple[str, list[tuple[int, str]]]]:
        if self.resolved is None:
            return
        if self.is_path:
            if self._is_contiguous():
                yield from self._group_contiguous()
            else:
                yield from self._group_spill()
        else:
            groups: dict[str, list[tuple[int, str]]] = {}
            for seq, dev, line in self._records():
                groups.setdefault(dev, []).append((seq, line))
            yield from groups.items()

    def _group_contiguous(self):
        current: Optional[str] = None
        block: list[tuple[int, str]] = []
        for seq, dev, line in self._records():
            if dev == current:
                block.append((seq, line))
                continue
            if current is not None:
                yield current, block
            current = dev
            block = [(seq, line)]
        if current is not None:
            yield current, block

    def _group_spill(self):
        with tempfile.TemporaryDirectory(prefix="osclean-spill-") as tmp:
            paths = [os.path.join(tmp, f"b{i:02d}") for i in range(_SPILL_BUCKETS)]
            buckets = [open(p, "w", encoding="utf-8") for p in paths]
            try:
                for seq, dev, line in self._records():
                    b = zlib.crc32(dev.encode("utf-8")) % _SPILL_BUCKETS
                    buckets[b].write(f"{seq}\x1f{line}\n")
            finally:
                for fh in buckets:
                    fh.close()
            for p in paths:
                groups: dict[str, list[tuple[int, str]]] = {}
                with open(p, "r", encoding="utf-8") as fh:
                    for row in fh:
                        seq_s, line = row.rstrip("\n").split("\x1f", 1)
                        dev = _device_field(line, self.resolved)
                        groups.setdefault(dev, []).append((int(seq_s), line))
                for dev, block in groups.items():
                    block.sort(key=lambda x: x[0])
                    yield dev, block


def parse_group(device_id: str, block: list[tuple[int, str]],
                resolved: ResolvedSchema, stats: Optional[ParseStats] = None
                ) -> Optional[Trace]:
    """Parse one device's raw lines into a canonical Trace (None if every
    record in the block was bad)."""
    pings = []
    for seq, line in block:
        try:
            p = parse_ping_record(line, resolved, seq)
        except RecordError as e:
            if stats is not None:
                stats.record_error(e)
            continue
        if stats is not None:
            stats.records_parsed += 1
        pings.append(p)
    if not pings:
        return None
    trace = build_trace(pings)
    if stats is not None:
        stats.duplicates_dropped += len(pings) - len(trace.pings)
    return trace


def stream_devices(source, schema: Optional[Schema] = None,
                   stats: Optional[ParseStats] = None) -> Iterator[Trace]:
    """Group records by device and yield one canonical Trace per device.

    For device-contiguous files this is a true stream: memory stays
    bounded by the largest single device block. Non-contiguous files go
    through a spill-to-disk grouping pass first.
    """
    grouper = DeviceGrouper(source, schema or Schema(), stats)
    for device_id, block in grouper:
        trace = parse_group(device_id, block, grouper.resolved, stats)
        if trace is not None:
            yield trace
