"""Per-connection TCP sequence analysis.

One forward pass per stream keeps, for each direction, the highest sequence
number sent, the highest acknowledgment received and the byte ranges already
seen. From that state each segment is classified (retransmission, duplicate
ACK, zero window, ...), RTT samples are taken under Karn's rule, and the
bytes-in-flight, throughput and tcptrace series are derived.

Sequence numbers are unwrapped into unbounded integers using serial
arithmetic (mod 2**32, +/- 2**31 window), so wraparound is handled once, at
the boundary.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from .dissect import Frame
from .timeseries import NS, TimeSeries, as_fraction, bin_index

MASK = 0xFFFFFFFF
HALF = 1 << 31
DIRECTIONS = ("ab", "ba")
DEFAULT_OOO_THRESHOLD = 0.003

SEVERITY = {
    "malformed": "error",
    "zero-window": "warning",
    "window-full": "warning",
    "out-of-order": "warning",
    "retransmission": "note",
    "duplicate-ack": "note",
    "keep-alive": "note",
    "connection-start": "chat",
    "connection-fin": "chat",
    "connection-reset": "chat",
}
SEVERITIES = ("error", "warning", "note", "chat")
_KIND_ORDER = {kind: i for i, kind in enumerate(SEVERITY)}


def serial_diff(a: int, b: int) -> int:
    """Signed distance a - b in 32-bit sequence space."""
    d = (a - b) & MASK
    return d - (1 << 32) if d >= HALF else d


def unwrap(seq: int, ref: int) -> int:
    return ref + serial_diff(seq, ref & MASK)


@dataclass(frozen=True)
class StreamKey:
    addr_a: str
    port_a: int
    addr_b: str
    port_b: int
    stream_index: int

    def direction(self, src: str, sport: int) -> str:
        return "ab" if (src, sport) == (self.addr_a, self.port_a) else "ba"

    def describe(self, direction: str = "ab") -> str:
        a, b = f"{self.addr_a}:{self.port_a}", f"{self.addr_b}:{self.port_b}"
        return f"{a} -> {b}" if direction == "ab" else f"{b} -> {a}"


@dataclass(frozen=True)
class SegmentMeta:
    packet: int
    ts_ns: int
    direction: str
    seq: int
    ack: int
    payload_len: int
    flags: frozenset
    window: int
    flags_out: frozenset = frozenset()
    dup_ack_count: int = 0
    seq_abs: int = 0
    ack_abs: Optional[int] = None

    @property
    def seg_len(self) -> int:
        return self.payload_len + ("SYN" in self.flags) + ("FIN" in self.flags)

    @property
    def end_abs(self) -> int:
        return self.seq_abs + self.seg_len

    @property
    def is_pure_ack(self) -> bool:
        return (self.payload_len == 0 and "ACK" in self.flags
                and not self.flags & {"SYN", "FIN", "RST"})


@dataclass
class TcpStreamAnalysis:
    key: StreamKey
    segments: list[SegmentMeta]
    rtt_samples: dict[str, list[tuple[int, int]]]
    bytes_in_flight: dict[str, list[tuple[int, int]]]
    seq_high: dict[str, Optional[int]]
    acked_high: dict[str, Optional[int]]
    base: dict[str, Optional[int]]
    capture_start_ns: int

    def direction_segments(self, direction: str) -> list[SegmentMeta]:
        return [s for s in self.segments if s.direction == direction]


def _tcp_tuple(frame: Frame):
    tcp = frame.stack.get("tcp")
    ip = frame.stack.ip
    if tcp is None or ip is None:
        return None
    return ip["src"], tcp["src_port"], ip["dst"], tcp["dst_port"]


def group_streams(frames: Sequence[Frame]) -> dict[StreamKey, list[Frame]]:
    """TCP frames grouped per connection, keyed in order of first appearance."""
    ordered = sorted(frames, key=lambda f: (f.ts_ns, f.index))
    groups: dict[tuple, list[Frame]] = {}
    keys: dict[tuple, StreamKey] = {}
    for f in ordered:
        tup = _tcp_tuple(f)
        if tup is None:
            continue
        src, sport, dst, dport = tup
        canon = tuple(sorted(((src, sport), (dst, dport))))
        if canon not in keys:
            flags = f.stack.get("tcp")["flags"]
            if "SYN" in flags and "ACK" in flags:
                src, sport, dst, dport = dst, dport, src, sport
            keys[canon] = StreamKey(src, sport, dst, dport, len(keys))
            groups[canon] = []
        groups[canon].append(f)
    return {keys[c]: groups[c] for c in keys}


def assign_streams(frames: Sequence[Frame]) -> dict[StreamKey, list[int]]:
    return {key: [f.index for f in fs] for key, fs in group_streams(frames).items()}


@dataclass
class _Outstanding:
    start: int
    end: int
    ts_ns: int
    retransmitted: bool = False


@dataclass
class _Dir:
    ref: Optional[int] = None
    base: Optional[int] = None
    seq_high: Optional[int] = None
    acked_high: Optional[int] = None
    seen: list[list[int]] = field(default_factory=list)
    last_ts: Optional[int] = None
    last_pure_ack: Optional[tuple[int, int]] = None
    dup_count: int = 0
    peer_edge: Optional[int] = None
    outstanding: list[_Outstanding] = field(default_factory=list)
    rtt: list[tuple[int, int]] = field(default_factory=list)
    flight: list[tuple[int, int]] = field(default_factory=list)

    def unwrap(self, value: int) -> int:
        if self.ref is None:
            self.ref = value
            return value
        out = unwrap(value, self.ref)
        self.ref = max(self.ref, out)
        return out

    def covered(self, start: int, end: int) -> bool:
        for s, e in self.seen:
            if s <= start and end <= e:
                return True
        return False

    def add_seen(self, start: int, end: int) -> None:
        merged = []
        for s, e in self.seen:
            if e < start or s > end:
                merged.append([s, e])
            else:
                start, end = min(s, start), max(e, end)
        merged.append([start, end])
        merged.sort()
        self.seen = merged

    def in_flight(self) -> int:
        if self.seq_high is None or self.acked_high is None:
            return 0
        return max(0, self.seq_high - self.acked_high)


def analyze_stream(frames: Sequence[Frame], key: Optional[StreamKey] = None, *,
                   capture_start_ns: Optional[int] = None,
                   ooo_threshold: float = DEFAULT_OOO_THRESHOLD) -> TcpStreamAnalysis:
    ordered = sorted(frames, key=lambda f: (f.ts_ns, f.index))
    if key is None:
        key = next(iter(group_streams(ordered)), StreamKey("", 0, "", 0, 0))
    if capture_start_ns is None:
        capture_start_ns = ordered[0].ts_ns if ordered else 0
    threshold_ns = int(as_fraction(ooo_threshold) * NS)
    state = {"ab": _Dir(), "ba": _Dir()}
    segments = []

    for f in ordered:
        tup = _tcp_tuple(f)
        if tup is None:
            continue
        tcp = f.stack.get("tcp")
        flags = tcp["flags"]
        d = key.direction(tup[0], tup[1])
        me, peer = state[d], state["ba" if d == "ab" else "ab"]
        ts = f.ts_ns
        payload = tcp["payload_length"]
        seg_len = payload + ("SYN" in flags) + ("FIN" in flags)
        control = flags & {"SYN", "FIN", "RST"}
        out = set()
        dup_n = 0

        seq_abs = me.unwrap(tcp["seq"])
        end = seq_abs + seg_len

        if payload > 0 and me.peer_edge is not None and end == me.peer_edge:
            out.add("window-full")
        if tcp["window"] == 0 and not control:
            out.add("zero-window")

        keep_alive = False
        retrans = False
        if me.seq_high is not None:
            if payload <= 1 and not control and seq_abs == me.seq_high - 1:
                keep_alive = True
                out.add("keep-alive")
            elif seg_len > 0 and seq_abs < me.seq_high:
                if me.covered(seq_abs, end):
                    retrans = True
                elif payload > 0 and me.last_ts is not None and ts - me.last_ts <= threshold_ns:
                    out.add("out-of-order")
                else:
                    retrans = True
                if retrans:
                    out.add("retransmission")

        pure = payload == 0 and "ACK" in flags and not control and not keep_alive
        if pure:
            pair = (tcp["ack"], tcp["window"])
            if me.last_pure_ack == pair:
                me.dup_count += 1
                dup_n = me.dup_count
                out.add("duplicate-ack")
            else:
                me.dup_count = 0
            me.last_pure_ack = pair

        # own sequence space bookkeeping
        if me.base is None:
            me.base = seq_abs if "SYN" in flags else seq_abs - 1
        if me.acked_high is None:
            me.acked_high = seq_abs
        if seg_len > 0 and not keep_alive:
            if retrans:
                for o in me.outstanding:
                    if o.start < end and seq_abs < o.end:
                        o.retransmitted = True
            if end > me.acked_high:
                me.outstanding.append(_Outstanding(max(seq_abs, me.acked_high), end, ts, retrans))
            me.add_seen(seq_abs, end)
        me.seq_high = end if me.seq_high is None else max(me.seq_high, end)
        if seg_len > 0:
            me.flight.append((ts, me.in_flight()))
        me.last_ts = ts

        # acknowledgment of the peer's sequence space
        ack_abs = None
        if "ACK" in flags:
            ack_abs = peer.unwrap(tcp["ack"])
            peer.peer_edge = ack_abs + tcp["window"]
            if peer.acked_high is None:
                peer.acked_high = ack_abs
            elif ack_abs > peer.acked_high:
                peer.acked_high = ack_abs
                covered = [o for o in peer.outstanding if o.end <= ack_abs]
                fresh = [o for o in covered if not o.retransmitted]
                if fresh:
                    first = min(fresh, key=lambda o: o.ts_ns)
                    peer.rtt.append((ts, ts - first.ts_ns))
                peer.outstanding = [o for o in peer.outstanding if o.end > ack_abs]
                peer.flight.append((ts, peer.in_flight()))

        segments.append(SegmentMeta(
            packet=f.index, ts_ns=ts, direction=d, seq=tcp["seq"], ack=tcp["ack"],
            payload_len=payload, flags=flags, window=tcp["window"], flags_out=frozenset(out),
            dup_ack_count=dup_n, seq_abs=seq_abs, ack_abs=ack_abs,
        ))

    return TcpStreamAnalysis(
        key=key,
        segments=segments,
        rtt_samples={d: state[d].rtt for d in DIRECTIONS},
        bytes_in_flight={d: state[d].flight for d in DIRECTIONS},
        seq_high={d: None if state[d].seq_high is None else state[d].seq_high & MASK for d in DIRECTIONS},
        acked_high={d: None if state[d].acked_high is None else state[d].acked_high & MASK for d in DIRECTIONS},
        base={d: state[d].base for d in DIRECTIONS},
        capture_start_ns=capture_start_ns,
    )


def analyze_capture(frames: Sequence[Frame], **kwargs) -> list[TcpStreamAnalysis]:
    start = min((f.ts_ns for f in frames), default=0)
    return [analyze_stream(fs, key, capture_start_ns=start, **kwargs)
            for key, fs in group_streams(frames).items()]


def _check_direction(direction: str) -> str:
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be 'ab' or 'ba', got {direction!r}")
    return direction


def _rel_time(analysis: TcpStreamAnalysis, ts_ns: int) -> Fraction:
    return Fraction(ts_ns - analysis.capture_start_ns, NS)


def rtt_series(analysis: TcpStreamAnalysis, direction: str = "ab") -> TimeSeries:
    direction = _check_direction(direction)
    points = [(_rel_time(analysis, ts), Fraction(rtt, NS)) for ts, rtt in analysis.rtt_samples[direction]]
    return TimeSeries(f"RTT {analysis.key.describe(direction)}", "seconds", None, points)


def throughput_series(analysis: TcpStreamAnalysis, direction: str = "ab", tick="1") -> TimeSeries:
    direction = _check_direction(direction)
    tick = as_fraction(tick)
    if tick <= 0:
        raise ValueError("tick must be positive")
    label = f"Throughput {analysis.key.describe(direction)}"
    segs = analysis.segments
    if not segs:
        return TimeSeries(label, "bits/s", tick)
    t0 = analysis.capture_start_ns
    first = bin_index(segs[0].ts_ns, t0, tick)
    last = bin_index(segs[-1].ts_ns, t0, tick)
    totals = [0] * (last - first + 1)
    for s in segs:
        if s.direction == direction:
            totals[bin_index(s.ts_ns, t0, tick) - first] += s.payload_len
    points = [((first + i) * tick, Fraction(b * 8) / tick) for i, b in enumerate(totals)]
    return TimeSeries(label, "bits/s", tick, points)


@dataclass
class TcpTraceData:
    direction: str
    segments: list[tuple[Fraction, int, int]] = field(default_factory=list)
    acks: list[tuple[Fraction, int]] = field(default_factory=list)
    windows: list[tuple[Fraction, int]] = field(default_factory=list)
    retransmissions: list[tuple[Fraction, int, int]] = field(default_factory=list)


def tcptrace_series(analysis: TcpStreamAnalysis, direction: str = "ab") -> TcpTraceData:
    """Sequence/ack/window lines for one direction, in relative sequence numbers."""
    direction = _check_direction(direction)
    data = TcpTraceData(direction)
    base = analysis.base[direction]
    for s in analysis.segments:
        t = _rel_time(analysis, s.ts_ns)
        if s.direction == direction:
            if s.payload_len > 0:
                mark = (t, s.seq_abs - base, s.seq_abs + s.payload_len - base)
                data.segments.append(mark)
                if "retransmission" in s.flags_out:
                    data.retransmissions.append(mark)
        elif s.is_pure_ack and s.ack_abs is not None and base is not None:
            rel = s.ack_abs - base
            data.acks.append((t, rel))
            data.windows.append((t, rel + s.window))
    return data


@dataclass(frozen=True)
class ExpertEvent:
    severity: str
    kind: str
    packet: int
    stream: Optional[int]
    message: str


@dataclass
class ExpertReport:
    events: list[ExpertEvent]
    counts: dict[str, int]


def _segment_message(kind: str, seg: SegmentMeta) -> str:
    if kind == "duplicate-ack":
        return f"Duplicate ACK (#{seg.dup_ack_count})"
    if kind == "connection-start":
        return "Connection establish acknowledge (SYN+ACK)" if "ACK" in seg.flags else "Connection establish request (SYN)"
    return {
        "retransmission": "Retransmission (suspected)",
        "out-of-order": "Out-of-order segment",
        "keep-alive": "Keep-alive",
        "zero-window": "Zero window",
        "window-full": "Window full",
        "connection-fin": "Connection finish (FIN)",
        "connection-reset": "Connection reset (RST)",
    }[kind]


def expert_events(analyses: Sequence[TcpStreamAnalysis], frames: Sequence[Frame] = ()) -> ExpertReport:
    events = []
    for f in frames:
        if f.stack.malformed is not None:
            layer, reason = f.stack.malformed
            events.append(ExpertEvent("error", "malformed", f.index, None, f"Malformed {layer}: {reason}"))
    for a in analyses:
        for seg in a.segments:
            kinds = set(seg.flags_out)
            if "SYN" in seg.flags:
                kinds.add("connection-start")
            if "FIN" in seg.flags:
                kinds.add("connection-fin")
            if "RST" in seg.flags:
                kinds.add("connection-reset")
            for kind in kinds:
                events.append(ExpertEvent(SEVERITY[kind], kind, seg.packet, a.key.stream_index,
                                          _segment_message(kind, seg)))
    events.sort(key=lambda e: (e.packet, _KIND_ORDER[e.kind]))
    tally = Counter(e.severity for e in events)
    return ExpertReport(events, {sev: tally.get(sev, 0) for sev in SEVERITIES})
