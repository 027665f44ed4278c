"""Command-line frontend: ``capstats <subcommand> capture.pcap [options]``.

Exit status is 0 on success, 1 when the input cannot be read (missing file,
bad capture header, unknown stream) and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import render
from .capture_io import CaptureError, CaptureHeader, encode_capture
from .dfilter import And, ParseError, match_filter, parse_filter
from .dissect import load_capture
from .fixture import InconsistentScenario, generate_fixture
from .scenario import BUILTIN, ScenarioParseError, builtin_scenario, scenario_load
from .stats import conversations, protocol_hierarchy, resolved_addresses, summarize
from .tcp_analysis import (analyze_capture, expert_events, rtt_series, tcptrace_series,
                           throughput_series)
from .timeseries import InvalidTick, as_fraction, check_tick, flow_graph, io_graph

TABLE_COMMANDS = ("summary", "hierarchy", "conv", "resolve", "flow", "expert")
GRAPH_COMMANDS = ("iograph", "rtt", "throughput", "tcptrace")
FORMATS = ("table", "csv", "json", "ascii", "svg")


class InputError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="capstats", description="Offline PCAP statistics and TCP analysis.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("input", help="classic PCAP file")
    common.add_argument("--filter", action="append", default=[], metavar="EXPR",
                        help="display filter; iograph draws one series per --filter")
    common.add_argument("--format", choices=FORMATS, help="output format")
    common.add_argument("--out", metavar="PATH", help="write output to PATH instead of stdout")

    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")
    sub.add_parser("summary", parents=[common], help="capture file summary")
    sub.add_parser("hierarchy", parents=[common], help="protocol hierarchy")
    p = sub.add_parser("conv", parents=[common], help="conversations at one layer")
    p.add_argument("--layer", choices=("eth", "ip", "tcp", "udp"), default="ip")
    sub.add_parser("resolve", parents=[common], help="addresses resolved from in-capture DNS")
    p = sub.add_parser("iograph", parents=[common], help="packets/bytes/bits per tick")
    p.add_argument("--tick", default="1", help="bin width in seconds, 0.001 to 10 (default 1)")
    p.add_argument("--unit", choices=("packets", "bytes", "bits"), default="packets")
    sub.add_parser("flow", parents=[common], help="flow graph between endpoints")
    for name, text in (("rtt", "round-trip times"), ("throughput", "unidirectional throughput"),
                       ("tcptrace", "time-sequence graph")):
        p = sub.add_parser(name, parents=[common], help=f"{text} of one TCP stream")
        p.add_argument("--stream", type=int, default=0, help="stream index as listed by 'conv --layer tcp'")
        p.add_argument("--dir", choices=("ab", "ba"), default="ab")
        if name == "throughput":
            p.add_argument("--tick", default="1", help="bin width in seconds (default 1)")
    sub.add_parser("expert", parents=[common], help="expert info events by severity")

    p = sub.add_parser("fixture", help="write a synthetic capture from a scenario file")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", metavar="PATH", help="scenario description file")
    src.add_argument("--builtin", choices=BUILTIN, help="use a scenario shipped with the package")
    p.add_argument("--out", metavar="PATH", required=True, help="PCAP file to write")
    p.add_argument("--nanosecond", action="store_true", help="write nanosecond-resolution timestamps")
    return parser


def _emit(data: bytes, out: Optional[str]) -> None:
    if out:
        try:
            Path(out).write_bytes(data)
        except OSError as exc:
            raise InputError(f"{out}: {exc.strerror or exc}") from exc
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def _run_fixture(args) -> bytes:
    try:
        scenario = builtin_scenario(args.builtin) if args.builtin else scenario_load(args.scenario)
        records = generate_fixture(scenario)
    except FileNotFoundError:
        raise InputError(f"{args.scenario}: no such file") from None
    except (ScenarioParseError, InconsistentScenario) as exc:
        raise InputError(f"{args.scenario or args.builtin}: {exc}") from None
    return encode_capture(CaptureHeader(nanosecond=args.nanosecond, byteorder="<"), records)


def _format_view(view, fmt: str, chart=None) -> bytes:
    if fmt == "csv":
        return render.export_csv(view)
    if fmt == "json":
        return render.export_json(view)
    if fmt == "table":
        return render.render_table(view).encode("utf-8")
    spec = chart()
    if fmt == "svg":
        return render.render_svg(spec)
    return render.render_ascii(spec).encode("utf-8")


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "fixture":
            _emit(_run_fixture(args), args.out)
            return 0
        return _run_analysis(parser, args)
    except InputError as exc:
        print(f"capstats: error: {exc}", file=sys.stderr)
        return 1


def _run_analysis(parser: argparse.ArgumentParser, args) -> int:
    fmt = args.format or ("ascii" if args.command in GRAPH_COMMANDS else "table")
    if args.command in TABLE_COMMANDS and fmt in ("ascii", "svg"):
        parser.error(f"{args.command} produces a table; use --format table, csv or json")
    try:
        filters = [parse_filter(text) for text in args.filter]
    except ParseError as exc:
        parser.error(f"bad --filter: {exc}")
    tick = None
    if args.command == "iograph":
        try:
            tick = check_tick(args.tick)
        except (InvalidTick, ValueError, ZeroDivisionError):
            parser.error(f"--tick must be a number of seconds in the range 0.001-10, got {args.tick!r}")
    elif args.command == "throughput":
        try:
            tick = as_fraction(args.tick)
            if tick <= 0:
                raise ValueError
        except (ValueError, ZeroDivisionError):
            parser.error(f"--tick must be a positive number of seconds, got {args.tick!r}")

    if not Path(args.input).exists():
        raise InputError(f"{args.input}: no such file")
    try:
        cap = load_capture(args.input)
    except CaptureError as exc:
        raise InputError(str(exc)) from None
    if cap.error is not None:
        print(f"capstats: warning: {args.input}: {cap.error}; analysing the complete records",
              file=sys.stderr)

    frames = cap.frames
    if filters and args.command != "iograph":
        combined = filters[0]
        for f in filters[1:]:
            combined = And(combined, f)
        frames = [f for f in frames if match_filter(combined, f.stack)]

    cmd = args.command
    chart = None
    if cmd == "summary":
        view = summarize(frames, cap.file_name, cap.header)
    elif cmd == "hierarchy":
        view = protocol_hierarchy(frames)
    elif cmd == "conv":
        view = conversations(frames, args.layer)
    elif cmd == "resolve":
        view = resolved_addresses(frames)
    elif cmd == "flow":
        view = flow_graph(frames)
    elif cmd == "expert":
        view = expert_events(analyze_capture(frames), frames)
    elif cmd == "iograph":
        view = io_graph(frames, filters, tick, args.unit)
        chart = lambda: render.chart_from_series(view, f"I/O graph ({args.unit} per {args.tick} s)")
    else:
        analyses = analyze_capture(frames)
        if not 0 <= args.stream < len(analyses):
            raise InputError(f"{args.input}: no TCP stream {args.stream} ({len(analyses)} streams)")
        analysis = analyses[args.stream]
        if cmd == "rtt":
            view = rtt_series(analysis, args.dir)
            chart = lambda: render.chart_from_series([view], f"RTT, stream {args.stream}", style="marks")
        elif cmd == "throughput":
            view = throughput_series(analysis, args.dir, tick)
            chart = lambda: render.chart_from_series([view], f"Throughput, stream {args.stream}")
        else:
            view = tcptrace_series(analysis, args.dir)
            chart = lambda: render.chart_from_tcptrace(view, f"tcptrace {analysis.key.describe(args.dir)}")
    _emit(_format_view(view, fmt, chart), args.out)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
