"""I/O graph binning and the endpoint flow graph."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Union

from .dfilter import FilterExpr, format_filter, match_filter
from .dissect import Frame

NS = 1_000_000_000
IO_UNITS = ("packets", "bytes", "bits")
FLOW_COLUMN_WIDTH = 30
MIN_TICK = Fraction(1, 1000)
MAX_TICK = Fraction(10)

Number = Union[int, Fraction, float]


class InvalidTick(ValueError):
    pass


def as_fraction(value: Union[str, int, float, Fraction]) -> Fraction:
    """Exact rational for a tick; floats go through their shortest repr so 0.1 is 1/10."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        value = repr(value)
    return Fraction(value)


@dataclass
class TimeSeries:
    label: str
    unit: str
    tick: Optional[Fraction] = None
    points: list[tuple[Number, Number]] = field(default_factory=list)

    def values(self) -> list[Number]:
        return [v for _, v in self.points]


def check_tick(tick: Union[str, int, float, Fraction]) -> Fraction:
    t = as_fraction(tick)
    if not MIN_TICK <= t <= MAX_TICK:
        raise InvalidTick(f"tick must be between 0.001 and 10 seconds, got {float(t):g}")
    return t


def bin_index(ts_ns: int, t0_ns: int, tick: Fraction) -> int:
    # floor((ts - t0) / tick) with tick in seconds, exact
    return ((ts_ns - t0_ns) * tick.denominator) // (tick.numerator * NS)


def io_graph(frames: Sequence[Frame], filters: Sequence[FilterExpr] = (), tick="1",
             unit: str = "packets") -> list[TimeSeries]:
    tick = check_tick(tick)
    if unit not in IO_UNITS:
        raise ValueError(f"unit must be one of {', '.join(IO_UNITS)}")
    selectors: list[tuple[str, Optional[FilterExpr]]] = (
        [(format_filter(f), f) for f in filters] if filters else [("all packets", None)]
    )
    if not frames:
        return [TimeSeries(label, unit, tick) for label, _ in selectors]
    t0 = min(f.ts_ns for f in frames)
    nbins = max(bin_index(f.ts_ns, t0, tick) for f in frames) + 1
    out = []
    for label, expr in selectors:
        counts = [0] * nbins
        for f in frames:
            if expr is not None and not match_filter(expr, f.stack):
                continue
            k = bin_index(f.ts_ns, t0, tick)
            counts[k] += 1 if unit == "packets" else f.length * (8 if unit == "bits" else 1)
        out.append(TimeSeries(label, unit, tick, [(k * tick, c) for k, c in enumerate(counts)]))
    return out


# --- flow graph ------------------------------------------------------------

@dataclass(frozen=True)
class FlowRow:
    time: Fraction
    src: str
    dst: str
    label: str
    packet: int


@dataclass
class FlowGraph:
    endpoints: list[str] = field(default_factory=list)
    rows: list[FlowRow] = field(default_factory=list)


def _tcp_flag_text(flags) -> str:
    order = ("SYN", "FIN", "RST", "PSH", "ACK", "URG")
    return ", ".join(name for name in order if name in flags)


def flow_graph(frames: Sequence[Frame], expr: Optional[FilterExpr] = None) -> FlowGraph:
    graph = FlowGraph()
    ordered = sorted(frames, key=lambda f: (f.ts_ns, f.index))
    if not ordered:
        return graph
    t0 = ordered[0].ts_ns
    seen: set[str] = set()
    bases: dict[tuple, int] = {}
    for f in ordered:
        if expr is not None and not match_filter(expr, f.stack):
            continue
        stack = f.stack
        ip = stack.ip
        arp = stack.get("arp")
        if ip is not None:
            src, dst = ip["src"], ip["dst"]
            label = _ip_label(stack, bases)
        elif arp is not None:
            eth = stack.get("ethernet")
            src, dst = eth["src"], eth["dst"]
            if arp["opcode"] == 1:
                label = f"ARP who has {arp['target_ip']}? tell {arp['sender_ip']}"
            else:
                label = f"ARP {arp['sender_ip']} is at {arp['sender_mac']}"
        else:
            continue
        for ep in (src, dst):
            if ep not in seen:
                seen.add(ep)
                graph.endpoints.append(ep)
        graph.rows.append(FlowRow(Fraction(f.ts_ns - t0, NS), src, dst, label, f.index))
    return graph


def _ip_label(stack, bases: dict) -> str:
    ip = stack.ip
    tcp = stack.get("tcp")
    if tcp is not None:
        fwd = (ip["src"], tcp["src_port"], ip["dst"], tcp["dst_port"])
        rev = (fwd[2], fwd[3], fwd[0], fwd[1])
        flags = tcp["flags"]
        if fwd not in bases:
            bases[fwd] = tcp["seq"] if "SYN" in flags else (tcp["seq"] - 1) & 0xFFFFFFFF
        parts = [f"TCP {tcp['src_port']}→{tcp['dst_port']}"]
        if flags:
            parts.append(f"[{_tcp_flag_text(flags)}]")
        parts.append(f"seq={(tcp['seq'] - bases[fwd]) & 0xFFFFFFFF}")
        if "ACK" in flags:
            ack = tcp["ack"]
            if rev not in bases:
                bases[rev] = (ack - 1) & 0xFFFFFFFF
            parts.append(f"ack={(ack - bases[rev]) & 0xFFFFFFFF}")
        parts.append(f"win={tcp['window']}")
        if tcp["payload_length"]:
            parts.append(f"len={tcp['payload_length']}")
        return " ".join(parts)
    dns = stack.get("dns")
    if dns is not None:
        qname = dns["questions"][0][0] if dns["questions"] else ""
        if dns["is_response"]:
            answers = " ".join(f"{t} {a}" for _, t, a in dns["answers"])
            return f"DNS response {qname} {answers}".rstrip()
        return f"DNS query {qname}"
    udp = stack.get("udp")
    if udp is not None:
        return f"UDP {udp['src_port']}→{udp['dst_port']} len={udp['length'] - 8}"
    icmp = stack.get("icmp")
    if icmp is not None:
        return f"ICMP type={icmp['type']} code={icmp['code']}"
    return ip.name.upper()


def render_flow_text(graph: FlowGraph) -> str:
    """Fixed-width text export, one column per endpoint.

    Each row shows the time then an arrow ``|---label--->|`` spanning the two
    endpoint columns. Labels too long for the arrow are cut and repeated in
    full after the last column. A packet from an endpoint to itself is drawn
    as ``|[self] label``.
    """
    eps = graph.endpoints
    time_w = 9
    col_w = max([len(e) + 4 for e in eps] + [FLOW_COLUMN_WIDTH])
    pos = {ep: time_w + 2 + i * col_w for i, ep in enumerate(eps)}
    right = (max(pos.values()) + 1) if eps else 0

    header = list("Time".ljust(time_w + 2) + " " * (right + col_w))
    for ep, p in pos.items():
        header[p:p + len(ep)] = ep
    lines = ["".join(header).rstrip()]
    for row in graph.rows:
        buf = [" "] * (right + col_w)
        t = f"{float(row.time):{time_w}.6f}"
        buf[0:len(t)] = t
        for p in pos.values():
            buf[p] = "|"
        a, b = pos[row.src], pos[row.dst]
        tail = ""
        if a == b:
            text = f"[self] {row.label}"
            room = col_w - 2
            if len(text) > room:
                text, tail = text[:room - 2] + "..", row.label
            buf[a + 1:a + 1 + len(text)] = text
        else:
            lo, hi = min(a, b), max(a, b)
            span = hi - lo - 1
            label = row.label
            if len(label) > span - 7:
                label, tail = label[:span - 9] + "..", row.label
            body = f"--{label}--"
            fill = "-" * (span - len(body) - 1)
            buf[lo + 1:hi] = (body + fill + ">") if a < b else ("<" + fill + body)
        line = "".join(buf).rstrip()
        if tail:
            line = line.ljust(right) + "  " + tail
        lines.append(line)
    return "\n".join(lines) + "\n"
