"""Deterministic emitters: CSV/JSON/text tables and ASCII/SVG charts.

Column order per view (CSV header row, JSON object keys):

=================  ==========================================================
TimeSeries         bin_start, value
several series     series, bin_start, value
CaptureSummary     file_name, packet_count, byte_total, start_time, end_time,
                   duration, avg_packets_per_s, avg_bytes_per_s, drop_info
HierarchyNode      depth, protocol, packets, percent_packets, bytes,
                   percent_bytes, end_packets
conversations      layer, stream, address_a, port_a, address_b, port_b,
                   packets_ab, bytes_ab, packets_ba, bytes_ba, rel_start,
                   abs_start, duration, bps_ab, bps_ba
resolved names     address, name, packet, source
ExpertReport       severity, kind, packet, stream, message
FlowGraph          time, src, dst, label, packet
TcpTraceData       kind, time, start, end
=================  ==========================================================

Integers print as integers; every other number prints with 6 decimals.
"""

from __future__ import annotations

import csv
import io
import json
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

from .stats import NS, CaptureSummary, Conversation, HierarchyNode, ResolvedName
from .tcp_analysis import ExpertReport, TcpTraceData
from .timeseries import FlowGraph, TimeSeries, render_flow_text


def fmt6(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    if isinstance(value, Fraction):
        # half away from zero, never "-0.000000"
        scaled = math.floor(abs(value) * 1_000_000 + Fraction(1, 2))
        sign = "-" if value < 0 and scaled else ""
        whole, frac = divmod(scaled, 1_000_000)
        return f"{sign}{whole}.{frac:06d}"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def _json_value(value: Any) -> Any:
    if value is None or isinstance(value, (bool, int, str)):
        return value
    if isinstance(value, (Fraction, float)):
        return float(fmt6(value))
    return str(value)


def _timestamp(ns):
    return None if ns is None else Fraction(ns, NS)


def table_rows(view: Any) -> tuple[list[str], list[tuple]]:
    """Columns and rows for any supported view."""
    if isinstance(view, TimeSeries):
        return ["bin_start", "value"], [(x, y) for x, y in view.points]
    if isinstance(view, CaptureSummary):
        cols = ["file_name", "packet_count", "byte_total", "start_time", "end_time", "duration",
                "avg_packets_per_s", "avg_bytes_per_s", "drop_info"]
        s = view
        return cols, [(s.file_name, s.packet_count, s.byte_total, _timestamp(s.start_ns),
                       _timestamp(s.end_ns), s.duration, s.avg_packets_per_s, s.avg_bytes_per_s,
                       s.drop_info)]
    if isinstance(view, HierarchyNode):
        cols = ["depth", "protocol", "packets", "percent_packets", "bytes", "percent_bytes", "end_packets"]
        return cols, [(d, n.name, n.packets, n.percent_packets, n.bytes, n.percent_bytes, n.ending_here)
                      for d, n in view.walk()]
    if isinstance(view, ExpertReport):
        return ["severity", "kind", "packet", "stream", "message"], [
            (e.severity, e.kind, e.packet, e.stream, e.message) for e in view.events
        ]
    if isinstance(view, FlowGraph):
        return ["time", "src", "dst", "label", "packet"], [
            (r.time, r.src, r.dst, r.label, r.packet) for r in view.rows
        ]
    if isinstance(view, TcpTraceData):
        rows = [("segment", t, s, e) for t, s, e in view.segments]
        rows += [("ack", t, a, None) for t, a in view.acks]
        rows += [("window", t, w, None) for t, w in view.windows]
        rows += [("retransmission", t, s, e) for t, s, e in view.retransmissions]
        return ["kind", "time", "start", "end"], rows
    if isinstance(view, dict):
        return ["address", "name", "packet", "source"], [
            (addr, r.name, r.packet, r.source) for addr, r in view.items()
        ]
    if isinstance(view, (list, tuple)):
        if view and all(isinstance(v, TimeSeries) for v in view):
            if len(view) == 1:
                return table_rows(view[0])
            return ["series", "bin_start", "value"], [
                (s.label, x, y) for s in view for x, y in s.points
            ]
        if all(isinstance(v, Conversation) for v in view):
            cols = ["layer", "stream", "address_a", "port_a", "address_b", "port_b", "packets_ab",
                    "bytes_ab", "packets_ba", "bytes_ba", "rel_start", "abs_start", "duration",
                    "bps_ab", "bps_ba"]
            return cols, [
                (c.key.layer, c.stats.stream, c.key.address_a, c.key.port_a, c.key.address_b,
                 c.key.port_b, c.stats.packets_ab, c.stats.bytes_ab, c.stats.packets_ba,
                 c.stats.bytes_ba, c.stats.rel_start, _timestamp(c.stats.first_ns),
                 c.stats.duration, c.stats.bps_ab, c.stats.bps_ba)
                for c in view
            ]
    raise TypeError(f"no table layout for {type(view).__name__}")


def export_csv(view: Any) -> bytes:
    cols, rows = table_rows(view)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    writer.writerow(cols)
    for row in rows:
        writer.writerow([fmt6(v) for v in row])
    return buf.getvalue().encode("utf-8")


def export_json(view: Any) -> bytes:
    cols, rows = table_rows(view)
    doc: Any = [dict(zip(cols, (_json_value(v) for v in row))) for row in rows]
    if isinstance(view, ExpertReport):
        doc = {"counts": view.counts, "events": doc}
    return (json.dumps(doc, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def _aligned(cols: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [len(c) for c in cols]
    for row in rows:
        widths = [max(w, len(v)) for w, v in zip(widths, row)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths)).rstrip()]
    for row in rows:
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def render_table(view: Any) -> str:
    """Human-readable text for a table view."""
    if isinstance(view, FlowGraph):
        return render_flow_text(view)
    if isinstance(view, CaptureSummary):
        cols, rows = table_rows(view)
        width = max(len(c) for c in cols)
        return "".join(f"{c.ljust(width)}  {fmt6(v)}\n" for c, v in zip(cols, rows[0]))
    if isinstance(view, HierarchyNode):
        cols, rows = table_rows(view)
        body = [["  " * r[0] + r[1]] + [fmt6(v) for v in r[2:]] for r in rows]
        return _aligned(["protocol"] + cols[2:], body)
    cols, rows = table_rows(view)
    text = _aligned(cols, [[fmt6(v) for v in r] for r in rows])
    if isinstance(view, ExpertReport):
        head = "  ".join(f"{sev}s={view.counts[sev]}" for sev in view.counts)
        text = head + "\n" + text
    return text


# --- charts ----------------------------------------------------------------

GLYPHS = "*+ox#@%&"
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f")
STYLES = ("line", "step", "marks")


@dataclass
class ChartSeries:
    label: str
    points: list = field(default_factory=list)
    style: str = "line"


@dataclass
class ChartSpec:
    """A chart. ``width``/``height`` are text cells; SVG uses 10x20 units per cell."""

    title: str
    x_label: str
    y_label: str
    series: list[ChartSeries]
    width: int = 72
    height: int = 20

    def validate(self) -> None:
        if not self.series:
            raise ValueError("chart needs at least one series")
        if self.width < 20 or self.height < 5:
            raise ValueError("chart must be at least 20 wide and 5 high")
        for s in self.series:
            if s.style not in STYLES:
                raise ValueError(f"unknown series style {s.style!r}")


def nice_ceil(value) -> Fraction:
    """Smallest number of the form {1, 2, 5} x 10**n that is >= value (value > 0)."""
    v = Fraction(value)
    e = math.floor(math.log10(v))
    while Fraction(10) ** e > v:
        e -= 1
    while Fraction(10) ** (e + 1) <= v:
        e += 1
    for m in (1, 2, 5, 10):
        c = m * Fraction(10) ** e
        if c >= v:
            return c
    raise AssertionError("unreachable")


def _num_label(v) -> str:
    v = Fraction(v)
    if v.denominator == 1:
        return str(v.numerator)
    return f"{float(v):.6g}"


def _bounds(spec: ChartSpec):
    xs, ys = [], []
    for s in spec.series:
        for p in s.points:
            xs.append(Fraction(p[0]))
            ys.extend(Fraction(v) for v in p[1:])
    if not xs:
        return Fraction(0), Fraction(1), Fraction(0), Fraction(1)
    x0, x1 = min(xs), max(xs)
    if x1 == x0:
        x1 = x0 + 1
    lo_data, hi_data = min(ys), max(ys)
    hi = nice_ceil(hi_data) if hi_data > 0 else Fraction(0)
    lo = -nice_ceil(-lo_data) if lo_data < 0 else Fraction(0)
    if hi == lo:
        hi = lo + 1
    return x0, x1, lo, hi


def chart_from_series(series: Sequence[TimeSeries], title: str = "", style: str = "step",
                      width: int = 72, height: int = 20) -> ChartSpec:
    series = list(series)
    unit = series[0].unit if series else ""
    return ChartSpec(
        title=title or ", ".join(s.label for s in series),
        x_label="time (s)",
        y_label=unit,
        series=[ChartSeries(s.label, list(s.points), style) for s in series],
        width=width,
        height=height,
    )


def chart_from_tcptrace(trace: TcpTraceData, title: str = "", width: int = 72, height: int = 20) -> ChartSpec:
    return ChartSpec(
        title=title or f"tcptrace ({trace.direction})",
        x_label="time (s)",
        y_label="relative sequence number",
        series=[
            ChartSeries("segments", list(trace.segments), "marks"),
            ChartSeries("ack", list(trace.acks), "step"),
            ChartSeries("window", list(trace.windows), "step"),
            ChartSeries("retransmissions", list(trace.retransmissions), "marks"),
        ],
        width=width,
        height=height,
    )


def _value_at(points, x, style):
    """Series value at x for line/step drawing, or None outside the data."""
    if not points or x < points[0][0] or x > points[-1][0]:
        return None
    prev = points[0]
    for p in points[1:]:
        if p[0] > x:
            if style == "step" or p[0] == prev[0]:
                return prev[1]
            return prev[1] + (p[1] - prev[1]) * (x - prev[0]) / (p[0] - prev[0])
        prev = p
    return prev[1]


def render_ascii(spec: ChartSpec) -> str:
    """Text chart of exactly ``height + 2`` lines: legend, plot rows, x axis."""
    spec.validate()
    x0, x1, lo, hi = _bounds(spec)
    w, h = spec.width, spec.height
    grid = [[" "] * w for _ in range(h)]

    def col(x):
        return round((Fraction(x) - x0) / (x1 - x0) * (w - 1))

    def row(y):
        return round((hi - Fraction(y)) / (hi - lo) * (h - 1))

    for glyph, s in zip(GLYPHS * 4, spec.series):
        pts = sorted((tuple(Fraction(v) for v in p) for p in s.points), key=lambda p: p[0])
        if s.style == "marks":
            for p in pts:
                c = col(p[0])
                r_top, r_bot = row(max(p[1:])), row(min(p[1:]))
                for r in range(r_top, r_bot + 1):
                    grid[r][c] = glyph
            continue
        for c in range(w):
            x = x0 + (x1 - x0) * c / (w - 1)
            v = _value_at(pts, x, s.style)
            if v is not None:
                grid[row(v)][c] = glyph
        for p in pts:
            grid[row(p[1])][col(p[0])] = glyph

    top, bottom = _num_label(hi), _num_label(lo)
    lw = max(len(top), len(bottom))
    legend = "  ".join(f"[{g}] {s.label}" for g, s in zip(GLYPHS * 4, spec.series))
    lines = [f"{spec.title}  {legend}".strip()]
    for r in range(h):
        label = top if r == 0 else bottom if r == h - 1 else ""
        lines.append(f"{label.rjust(lw)} |{''.join(grid[r])}".rstrip())
    xl, xr = _num_label(x0), _num_label(x1)
    axis = xl + "-" * max(w - len(xl) - len(xr), 1) + xr
    lines.append(f"{' ' * lw} +{axis}  {spec.x_label}".rstrip())
    return "\n".join(lines) + "\n"


def _esc(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
            .replace('"', "&quot;"))


def _ticks(lo: Fraction, hi: Fraction, count: int = 5) -> list[Fraction]:
    step = nice_ceil((hi - lo) / count)
    first = math.ceil(lo / step) * step
    out = []
    t = first
    while t <= hi:
        out.append(t)
        t += step
    return out


def render_svg(spec: ChartSpec) -> bytes:
    spec.validate()
    x0, x1, lo, hi = _bounds(spec)
    width, height = spec.width * 10, spec.height * 20
    left, right, top, bottom = 70, 20, 40, 60
    pw, ph = width - left - right, height - top - bottom

    def px(x) -> str:
        return f"{float(left + (Fraction(x) - x0) / (x1 - x0) * pw):.2f}"

    def py(y) -> str:
        return f"{float(top + (hi - Fraction(y)) / (hi - lo) * ph):.2f}"

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="monospace" font-size="10">',
        f"<title>{_esc(spec.title)}</title>",
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        f'<text x="{width // 2}" y="20" text-anchor="middle" font-size="13">{_esc(spec.title)}</text>',
        '<g class="axes" stroke="#000000" stroke-width="1">',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}"/>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}"/>',
        "</g>",
        '<g class="ticks">',
    ]
    for t in _ticks(lo, hi):
        y = py(t)
        out.append(f'<line x1="{left - 4}" y1="{y}" x2="{left}" y2="{y}" stroke="#000000"/>')
        out.append(f'<text x="{left - 6}" y="{y}" text-anchor="end" dominant-baseline="middle">{_num_label(t)}</text>')
    for t in _ticks(x0, x1, 6):
        x = px(t)
        out.append(f'<line x1="{x}" y1="{top + ph}" x2="{x}" y2="{top + ph + 4}" stroke="#000000"/>')
        out.append(f'<text x="{x}" y="{top + ph + 16}" text-anchor="middle">{_num_label(t)}</text>')
    out.append("</g>")
    out.append(f'<text x="{left + pw // 2}" y="{height - 20}" text-anchor="middle">{_esc(spec.x_label)}</text>')
    out.append(f'<text x="14" y="{top + ph // 2}" text-anchor="middle" '
               f'transform="rotate(-90 14 {top + ph // 2})">{_esc(spec.y_label)}</text>')

    for i, s in enumerate(spec.series):
        color = COLORS[i % len(COLORS)]
        pts = sorted((tuple(Fraction(v) for v in p) for p in s.points), key=lambda p: p[0])
        if not pts:
            continue
        if s.style == "marks":
            out.append(f'<g class="series marks" id="series-{i}" stroke="{color}" fill="{color}">')
            for p in pts:
                if len(p) >= 3:
                    out.append(f'<line x1="{px(p[0])}" y1="{py(p[1])}" x2="{px(p[0])}" y2="{py(p[2])}"/>')
                else:
                    out.append(f'<circle cx="{px(p[0])}" cy="{py(p[1])}" r="2"/>')
            out.append("</g>")
            continue
        d = [f"M{px(pts[0][0])},{py(pts[0][1])}"]
        for prev, p in zip(pts, pts[1:]):
            if s.style == "step":
                d.append(f"H{px(p[0])}")
            d.append(f"V{py(p[1])}" if s.style == "step" else f"L{px(p[0])},{py(p[1])}")
        out.append(f'<g class="series line" id="series-{i}" stroke="{color}" fill="none">')
        out.append(f'<path d="{" ".join(d)}"/>')
        out.append("</g>")

    out.append('<g class="legend">')
    for i, s in enumerate(spec.series):
        y = top + 12 * i + 4
        color = COLORS[i % len(COLORS)]
        out.append(f'<rect x="{left + pw - 130}" y="{y - 6}" width="8" height="8" fill="{color}"/>')
        out.append(f'<text x="{left + pw - 118}" y="{y + 2}">{_esc(s.label)}</text>')
    out.append("</g>")
    out.append("</svg>")
    return ("\n".join(out) + "\n").encode("utf-8")


def check_wellformed(document: bytes) -> bool:
    """True if ``document`` parses as XML; raises ``xml.etree.ElementTree.ParseError`` otherwise."""
    ET.fromstring(document)
    return True
