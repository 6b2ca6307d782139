"""Device-parallel cleaning driver.

The main process streams raw line blocks per device; workers parse,
canonicalize and detect; the main process writes kept lines (and audit
rows) back in submission order, so output bytes do not depend on the
worker count.
"""

from __future__ import annotations

import gzip
import io
import multiprocessing
import os
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from .config import DetectionConfig, config_echo
from .detector import detect
from .report import RunReport
from .trace import (
    DeviceGrouper,
    ParseStats,
    ResolvedSchema,
    Schema,
    parse_group,
)


@dataclass
class DeviceOutcome:
    device_id: str
    kept_lines: list[str]
    audit_rows: list[tuple[str, str, int]]  # (raw line, heuristic, pass)
    parsed: int = 0
    skipped: int = 0
    duplicates: int = 0
    removed_by: Counter = field(default_factory=Counter)
    converged: bool = True
    error_sample: list[str] = field(default_factory=list)


_CFG: Optional[DetectionConfig] = None
_SCHEMA: Optional[ResolvedSchema] = None


def _init_worker(cfg: DetectionConfig, resolved: ResolvedSchema) -> None:
    global _CFG, _SCHEMA
    _CFG = cfg
    _SCHEMA = resolved


def _process_device(job: tuple[str, list[tuple[int, str]]]) -> DeviceOutcome:
    device_id, block = job
    stats = ParseStats()
    trace = parse_group(device_id, block, _SCHEMA, stats)
    out = DeviceOutcome(device_id, [], [],
                        parsed=stats.records_parsed,
                        skipped=stats.records_skipped,
                        duplicates=stats.duplicates_dropped,
                        error_sample=stats.error_sample)
    if trace is None:
        return out
    result = detect(trace, _CFG)
    line_of = dict(block)
    out.kept_lines = [line_of[p.seq] for p in result.cleaned.pings]
    out.audit_rows = [(line_of[r.ping.seq], r.heuristic, r.pass_no)
                      for r in result.removals]
    for r in result.removals:
        out.removed_by[(r.heuristic, r.pass_no)] += 1
    out.converged = result.converged
    return out


def _open_out(path) -> io.TextIOBase:
    path = os.fspath(path)
    if path.endswith(".gz"):
        return io.TextIOWrapper(gzip.open(path, "wb"), encoding="utf-8")
    return open(path, "w", encoding="utf-8")


def clean_file(input_path, output_path, schema: Optional[Schema] = None,
               cfg: Optional[DetectionConfig] = None, workers: int = 1,
               audit_path=None) -> RunReport:
    """Clean one delimited ping file end to end.

    Kept rows go to output_path in canonical per-device order (original
    text, original columns); removed rows go to the audit sidecar with
    removed_by and pass columns appended. Returns the RunReport.
    """
    schema = schema or Schema()
    cfg = cfg or DetectionConfig()
    t0 = time.perf_counter()

    stats = ParseStats()
    grouper = DeviceGrouper(input_path, schema, stats)
    report = RunReport(config_echo=config_echo(cfg))

    out = _open_out(output_path)
    audit = _open_out(audit_path) if audit_path else None
    delim = grouper.resolved.delimiter if grouper.resolved else ","
    try:
        if grouper.header_line is not None:
            out.write(grouper.header_line + "\n")
            if audit:
                audit.write(grouper.header_line + delim + "removed_by"
                            + delim + "pass\n")
        if grouper.resolved is not None:
            outcomes = _run(grouper, cfg, workers)
            for oc in outcomes:
                report.devices += 1
                report.records_parsed += oc.parsed
                report.records_skipped += oc.skipped
                report.duplicates_dropped += oc.duplicates
                report.pings_kept += len(oc.kept_lines)
                report.pings_removed += sum(oc.removed_by.values())
                for key, n in oc.removed_by.items():
                    report.removed_by[key] = report.removed_by.get(key, 0) + n
                report.devices_converged += oc.converged
                if len(report.error_sample) < 20:
                    report.error_sample.extend(
                        oc.error_sample[:20 - len(report.error_sample)])
                for line in oc.kept_lines:
                    out.write(line + "\n")
                if audit:
                    for line, heur, pass_no in oc.audit_rows:
                        audit.write(f"{line}{delim}{heur}{delim}{pass_no}\n")
    finally:
        out.close()
        if audit:
            audit.close()

    report.lines_total = stats.lines_total
    report.header_lines = stats.header_lines
    # blank/device-less lines are skipped during grouping, in the main process
    report.records_skipped += stats.records_skipped
    if len(report.error_sample) < 20:
        report.error_sample.extend(stats.error_sample[:20 - len(report.error_sample)])
    report.wall_time_s = time.perf_counter() - t0
    return report


def _run(grouper: DeviceGrouper, cfg: DetectionConfig, workers: int):
    if workers <= 1:
        _init_worker(cfg, grouper.resolved)
        for job in grouper:
            yield _process_device(job)
        return
    with multiprocessing.Pool(processes=workers, initializer=_init_worker,
                              initargs=(cfg, grouper.resolved)) as pool:
        yield from pool.imap(_process_device, iter(grouper), chunksize=4)
