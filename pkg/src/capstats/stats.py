"""Capture-wide tables: summary, protocol hierarchy, conversations, resolved names."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from .dissect import Frame, protocol_path

NS = 1_000_000_000
CONVERSATION_LAYERS = ("ethernet", "ip", "tcp", "udp")
_LAYER_ALIASES = {"eth": "ethernet", "ethernet": "ethernet", "ip": "ip", "ipv4": "ip", "ipv6": "ip",
                  "tcp": "tcp", "udp": "udp"}


@dataclass(frozen=True)
class CaptureSummary:
    file_name: str
    packet_count: int
    byte_total: int
    start_ns: Optional[int]
    end_ns: Optional[int]
    duration: Fraction
    avg_packets_per_s: Fraction
    avg_bytes_per_s: Fraction
    linktype: Optional[int] = None
    snaplen: Optional[int] = None
    drop_info: str = "unavailable"


def summarize(frames: Sequence[Frame], file_name: str = "", header=None) -> CaptureSummary:
    if not frames:
        zero = Fraction(0)
        return CaptureSummary(file_name, 0, 0, None, None, zero, zero, zero,
                              getattr(header, "linktype", None), getattr(header, "snaplen", None))
    start = min(f.ts_ns for f in frames)
    end = max(f.ts_ns for f in frames)
    total = sum(f.length for f in frames)
    duration = Fraction(end - start, NS)
    pps = Fraction(len(frames)) / duration if duration else Fraction(0)
    bps = Fraction(total) / duration if duration else Fraction(0)
    return CaptureSummary(file_name, len(frames), total, start, end, duration, pps, bps,
                          getattr(header, "linktype", None), getattr(header, "snaplen", None))


@dataclass
class HierarchyNode:
    name: str
    packets: int = 0
    bytes: int = 0
    percent_packets: Fraction = Fraction(0)
    percent_bytes: Fraction = Fraction(0)
    children: list["HierarchyNode"] = field(default_factory=list)

    @property
    def ending_here(self) -> int:
        return self.packets - sum(c.packets for c in self.children)

    def walk(self, depth: int = 0):
        yield depth, self
        for child in self.children:
            yield from child.walk(depth + 1)

    def find(self, *path: str) -> Optional["HierarchyNode"]:
        node = self
        for name in path:
            node = next((c for c in node.children if c.name == name), None)
            if node is None:
                return None
        return node


def protocol_hierarchy(frames: Sequence[Frame]) -> HierarchyNode:
    root = HierarchyNode("frame")
    index: dict[tuple[str, ...], HierarchyNode] = {}
    for f in frames:
        root.packets += 1
        root.bytes += f.length
        node = root
        path = protocol_path(f.stack)
        for depth in range(1, len(path)):
            key = tuple(path[1:depth + 1])
            child = index.get(key)
            if child is None:
                child = index[key] = HierarchyNode(path[depth])
                node.children.append(child)
            child.packets += 1
            child.bytes += f.length
            node = child
    for _, node in root.walk():
        if root.packets:
            node.percent_packets = Fraction(100 * node.packets, root.packets)
        if root.bytes:
            node.percent_bytes = Fraction(100 * node.bytes, root.bytes)
        node.children.sort(key=lambda c: (-c.packets, c.name))
    return root


@dataclass(frozen=True)
class ConversationKey:
    layer: str
    address_a: str
    address_b: str
    port_a: Optional[int] = None
    port_b: Optional[int] = None


@dataclass
class ConversationStats:
    packets_ab: int = 0
    packets_ba: int = 0
    bytes_ab: int = 0
    bytes_ba: int = 0
    first_ns: int = 0
    last_ns: int = 0
    rel_start: Fraction = Fraction(0)
    duration: Fraction = Fraction(0)
    bps_ab: Fraction = Fraction(0)
    bps_ba: Fraction = Fraction(0)
    first_index: int = 0
    stream: Optional[int] = None

    @property
    def abs_start_ns(self) -> int:
        return self.first_ns

    @property
    def packets(self) -> int:
        return self.packets_ab + self.packets_ba

    @property
    def bytes(self) -> int:
        return self.bytes_ab + self.bytes_ba


@dataclass(frozen=True)
class Conversation:
    key: ConversationKey
    stats: ConversationStats


def normalize_layer(layer: str) -> str:
    try:
        return _LAYER_ALIASES[layer.lower()]
    except KeyError:
        raise ValueError(f"conversation layer must be one of eth, ip, tcp, udp; got {layer!r}") from None


def _endpoints(frame: Frame, layer: str):
    """(family, src, dst) for the given layer, or None if the frame lacks it."""
    stack = frame.stack
    if layer == "ethernet":
        eth = stack.get("ethernet")
        return None if eth is None else ("ethernet", (eth["src"],), (eth["dst"],))
    ip = stack.ip
    if ip is None:
        return None
    if layer == "ip":
        return (ip.name, (ip["src"],), (ip["dst"],))
    tl = stack.get(layer)
    if tl is None:
        return None
    return (ip.name, (ip["src"], tl["src_port"]), (ip["dst"], tl["dst_port"]))


def conversations(frames: Sequence[Frame], layer: str) -> list[Conversation]:
    layer = normalize_layer(layer)
    ordered = sorted(frames, key=lambda f: (f.ts_ns, f.index))
    capture_start = ordered[0].ts_ns if ordered else 0
    table: dict[tuple, tuple[ConversationKey, ConversationStats]] = {}
    for f in ordered:
        ends = _endpoints(f, layer)
        if ends is None:
            continue
        family, src, dst = ends
        canon = (family,) + tuple(sorted((src, dst)))
        entry = table.get(canon)
        if entry is None:
            key = ConversationKey(
                "ip" if layer == "ip" else layer, src[0], dst[0],
                src[1] if len(src) > 1 else None, dst[1] if len(dst) > 1 else None,
            )
            entry = table[canon] = (key, ConversationStats(first_ns=f.ts_ns, last_ns=f.ts_ns,
                                                           first_index=f.index))
        key, st = entry
        forward = (src[0], src[1] if len(src) > 1 else None) == (key.address_a, key.port_a)
        if src == dst:
            forward = True
        if forward:
            st.packets_ab += 1
            st.bytes_ab += f.length
        else:
            st.packets_ba += 1
            st.bytes_ba += f.length
        st.last_ns = max(st.last_ns, f.ts_ns)
    rows = []
    for stream, (key, st) in enumerate(sorted(table.values(), key=lambda e: e[1].first_index)):
        st.rel_start = Fraction(st.first_ns - capture_start, NS)
        st.duration = Fraction(st.last_ns - st.first_ns, NS)
        if st.duration > 0:
            st.bps_ab = st.bytes_ab * 8 / st.duration
            st.bps_ba = st.bytes_ba * 8 / st.duration
        if layer == "tcp":
            st.stream = stream
        rows.append(Conversation(key, st))
    rows.sort(key=lambda c: (-c.stats.bytes, c.stats.first_index))
    return rows


@dataclass(frozen=True)
class ResolvedName:
    name: str
    packet: int
    source: str = "dns-answer"


def resolved_addresses(frames: Sequence[Frame]) -> dict[str, ResolvedName]:
    names: dict[str, ResolvedName] = {}
    for f in sorted(frames, key=lambda f: f.index):
        dns = f.stack.get("dns")
        if dns is None or not dns["is_response"]:
            continue
        for name, _rtype, address in dns["answers"]:
            names[address] = ResolvedName(name, f.index)
    return names
