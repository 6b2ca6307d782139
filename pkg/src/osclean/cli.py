"""Command-line front door: clean real files, generate synthetic labeled
scenarios, evaluate detection quality, and sweep thresholds.

Exit codes: 0 on success, 1 on fatal I/O problems, 2 on configuration or
scenario errors. Per-record parse errors never abort a run; they are
counted in the report.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import (
    FIELD_DIMENSIONS,
    ConfigError,
    DetectionConfig,
    load_config,
    parse_quantity,
)
from .detector import detect
from .pipeline import clean_file
from .report import (
    render_eval_figure,
    render_removals_figure,
    render_sweep_figure,
)
from .synth import (
    GenerationError,
    GroundTruth,
    NAIVE_SPEED,
    ScenarioSpec,
    naive_speed_filter,
    score,
    sweep,
    write_dataset,
)
from .trace import Schema, SchemaError, stream_devices


def parse_schema(text: str) -> Schema:
    """Parse --schema 'device=0,t=1,lat=2,lon=3[,delim=;][,header=yes]'.

    Column values may be 0-based indexes or header names. delim accepts a
    literal character or the words comma/tab/semicolon/space.
    """
    kwargs = {}
    delim_words = {"comma": ",", "tab": "\t", "semicolon": ";", "space": " "}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise SchemaError(f"--schema entries must be key=value, got {item!r}")
        key, value = item.split("=", 1)
        key = key.strip()
        value = value.strip()
        if key in ("device", "t", "lat", "lon"):
            field = {"device": "device", "t": "timestamp",
                     "lat": "lat", "lon": "lon"}[key]
            kwargs[field] = int(value) if value.lstrip("-").isdigit() else value
        elif key in ("delim", "delimiter"):
            kwargs["delimiter"] = delim_words.get(value, value)
        elif key == "header":
            if value not in ("auto", "yes", "no"):
                raise SchemaError(f"header must be auto/yes/no, got {value!r}")
            kwargs["header"] = value
        else:
            raise SchemaError(f"unknown --schema key {key!r}")
    return Schema(**kwargs)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE",
                        help="threshold file (key = value, unit suffixes ok)")
    group = parser.add_argument_group(
        "threshold overrides", "values accept unit suffixes: 0.5mi, 120mph, "
        "2.5min, 300s")
    for name in FIELD_DIMENSIONS:
        group.add_argument(f"--{name.replace('_', '-')}", dest=f"cfg_{name}",
                           metavar="V", help=f"override {name}")


def _config_from_args(args) -> DetectionConfig:
    overrides = {}
    for name in FIELD_DIMENSIONS:
        value = getattr(args, f"cfg_{name}", None)
        if value is not None:
            overrides[name] = value
    return load_config(getattr(args, "config", None), overrides)


def _grid_values(text: str, parameter: str) -> list:
    dim = FIELD_DIMENSIONS.get(parameter)
    if dim is None:
        raise ConfigError(f"unknown config field {parameter!r}; known: "
                          + ", ".join(sorted(FIELD_DIMENSIONS)))
    values = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if dim == "count":
            values.append(int(tok))
        elif dim == "scalar":
            values.append(float(tok))
        else:
            values.append(parse_quantity(tok, dim))
    return values


def _score_table(rows: list[tuple[str, object]]) -> str:
    lines = [f"{'method':<10} {'precision':>9} {'recall':>9} {'f1':>9} "
             f"{'data_loss':>9} {'removed':>8}"]
    for name, s in rows:
        lines.append(f"{name:<10} {s.precision:>9.4f} {s.recall:>9.4f} "
                     f"{s.f1:>9.4f} {s.data_loss_rate:>9.4f} {s.tp + s.fp:>8}")
    return "\n".join(lines)


def _figure_path(out_path) -> Path:
    return Path(out_path).with_suffix(".png")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_clean(args) -> int:
    cfg = _config_from_args(args)
    schema = parse_schema(args.schema) if args.schema else Schema()
    report = None
    for i, input_path in enumerate(args.input):
        if not os.path.exists(input_path):
            print(f"osclean: input not found: {input_path}", file=sys.stderr)
            return 1
        out = args.output if len(args.input) == 1 else _numbered(args.output, i)
        audit = None
        if args.audit:
            audit = args.audit if len(args.input) == 1 else _numbered(args.audit, i)
        r = clean_file(input_path, out, schema, cfg,
                       workers=args.workers, audit_path=audit)
        report = _merge_reports(report, r)
    text = report.to_text(include_timing=not args.no_timing)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text)
        if not args.no_figures:
            render_removals_figure(report, _figure_path(args.report))
    else:
        sys.stderr.write(text)
    return 0


def _numbered(path: str, i: int) -> str:
    p = Path(path)
    return str(p.with_name(f"{p.stem}.{i}{p.suffix}"))


def _merge_reports(acc, r):
    if acc is None:
        return r
    for name in ("lines_total", "header_lines", "records_parsed",
                 "records_skipped", "duplicates_dropped", "devices",
                 "pings_kept", "pings_removed", "devices_converged"):
        setattr(acc, name, getattr(acc, name) + getattr(r, name))
    for key, n in r.removed_by.items():
        acc.removed_by[key] = acc.removed_by.get(key, 0) + n
    acc.error_sample = (acc.error_sample + r.error_sample)[:20]
    acc.wall_time_s = (acc.wall_time_s or 0.0) + (r.wall_time_s or 0.0)
    return acc


def cmd_synth(args) -> int:
    spec = ScenarioSpec.from_json(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    cfg = _config_from_args(args)
    summary = write_dataset(spec, args.out_dir, cfg)
    print(f"wrote {summary['pings']} pings for {summary['devices']} devices "
          f"({summary['oscillations']} injected oscillation pings, "
          f"{summary['templates']} templates)")
    print(f"traces: {summary['trace_path']}")
    print(f"truth:  {summary['truth_path']}")
    return 0


def _load_eval_inputs(args):
    if not os.path.exists(args.trace):
        raise FileNotFoundError(args.trace)
    if not os.path.exists(args.truth):
        raise FileNotFoundError(args.truth)
    traces = list(stream_devices(args.trace, Schema()))
    truth = GroundTruth.read(args.truth)
    return traces, truth


def cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    traces, truth = _load_eval_inputs(args)
    rows = [("detector", score([detect(t, cfg) for t in traces], truth))]
    if args.baseline == NAIVE_SPEED:
        naive = [naive_speed_filter(t, cfg.v_max, cfg.t_floor) for t in traces]
        rows.append((NAIVE_SPEED, score(naive, truth)))
    print(_score_table(rows))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("method,precision,recall,f1,data_loss_rate,removed\n")
            for name, s in rows:
                fh.write(f"{name},{s.precision:.6f},{s.recall:.6f},"
                         f"{s.f1:.6f},{s.data_loss_rate:.6f},{s.tp + s.fp}\n")
        if not args.no_figures:
            render_eval_figure(dict(rows), _figure_path(args.out))
    return 0


def cmd_sweep(args) -> int:
    cfg = _config_from_args(args)
    traces, truth = _load_eval_inputs(args)
    grid = _grid_values(args.grid, args.param)
    points = sweep(traces, truth, args.param, grid, cfg)
    print(f"{'value':>12} {'removals':>9} {'precision':>9} {'recall':>9} {'f1':>9}")
    for p in points:
        print(f"{p.value:>12g} {p.removals:>9} {p.precision:>9.4f} "
              f"{p.recall:>9.4f} {p.f1:>9.4f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("value,removals,precision,recall,f1\n")
            for p in points:
                fh.write(f"{p.value:g},{p.removals},{p.precision:.6f},"
                         f"{p.recall:.6f},{p.f1:.6f}\n")
        if points and not args.no_figures:
            render_sweep_figure(points, args.param, _figure_path(args.out))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="osclean",
        description="Detect and remove oscillation points (data jumps) from "
                    "passively collected GPS ping streams.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("clean", help="remove oscillations from ping files")
    p.add_argument("input", nargs="+", help="delimited ping file(s), .gz ok")
    p.add_argument("-o", "--output", required=True,
                   help="cleaned output file (numbered per input when "
                        "multiple inputs are given)")
    p.add_argument("--schema", help="column mapping, e.g. "
                   "'device=0,t=1,lat=2,lon=3,delim=comma,header=auto'")
    p.add_argument("--audit", metavar="FILE",
                   help="write removed rows here with removed_by/pass columns")
    p.add_argument("--report", metavar="FILE",
                   help="write the run report here (default: stderr); a "
                        "removals chart is rendered alongside")
    p.add_argument("--workers", type=int,
                   default=min(4, os.cpu_count() or 1),
                   help="device-parallel worker processes (default %(default)s)")
    p.add_argument("--no-timing", action="store_true",
                   help="omit wall time from the report (for golden tests)")
    p.add_argument("--no-figures", action="store_true",
                   help="skip figure rendering")
    _add_config_flags(p)
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("synth", help="generate a labeled synthetic scenario")
    p.add_argument("spec", help="scenario JSON file")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    _add_config_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score detection against ground truth")
    p.add_argument("--trace", required=True, help="synthetic trace file")
    p.add_argument("--truth", required=True, help="truth sidecar file")
    p.add_argument("--baseline", choices=[NAIVE_SPEED],
                   help="also score a naive baseline for comparison")
    p.add_argument("--out", metavar="FILE",
                   help="write scores as CSV; a comparison chart is rendered "
                        "alongside")
    p.add_argument("--no-figures", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="sensitivity sweep over one threshold")
    p.add_argument("--trace", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--param", required=True,
                   help="config field to sweep (e.g. dwell_min)")
    p.add_argument("--grid", required=True,
                   help="comma-separated values, unit suffixes ok: 60s,300s,600s")
    p.add_argument("--out", metavar="FILE",
                   help="write the sweep table as CSV; the sensitivity curve "
                        "is rendered alongside")
    p.add_argument("--no-figures", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, GenerationError, SchemaError, ValueError) as e:
        print(f"osclean: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"osclean: file not found: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"osclean: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
