"""Deterministic synthetic captures.

A :class:`FixtureScenario` lists devices and timed traffic events; running it
through :func:`generate_fixture` yields byte-identical packet records every
time. TCP events keep per-connection sequence state, so handshakes, transfers
and injected anomalies carry consistent seq/ack arithmetic.

All timestamps are quantized to whole microseconds so fixtures survive a
round trip through a microsecond PCAP file.
"""

from __future__ import annotations

import ipaddress
import struct
import zlib
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Optional, Union

from .capture_io import PacketRecord, make_record

BROADCAST_MAC = "ff:ff:ff:ff:ff:ff"
DEFAULT_WINDOW = 65535

EVENT_KINDS = (
    "tcp-handshake",
    "tcp-transfer",
    "tcp-ack",
    "tcp-close",
    "udp-exchange",
    "dns-query-response",
    "arp-request-reply",
    "inject-retransmission",
    "inject-zero-window",
    "inject-dup-ack",
)
TCP_KINDS = {k for k in EVENT_KINDS if k.startswith(("tcp-", "inject-"))}


class InconsistentScenario(ValueError):
    pass


def seconds_to_ns(value: Union[str, int, float, Decimal]) -> int:
    return int(Decimal(str(value)) * 1_000_000_000)


def _quantize_us(ns: int) -> int:
    return (ns + 500) // 1000 * 1000


def mac_for_ip(ip: str) -> str:
    last = ipaddress.ip_address(ip).packed[-1]
    return f"02:00:00:00:00:{last:02x}"


@dataclass(frozen=True)
class Device:
    label: str
    ip: str
    mac: str = ""

    def __post_init__(self):
        ipaddress.ip_address(self.ip)
        if not self.mac:
            object.__setattr__(self, "mac", mac_for_ip(self.ip))


@dataclass(frozen=True)
class Event:
    """One timed traffic event between two devices.

    ``src`` initiates (TCP client, DNS resolver, ARP asker); ``params``
    carries kind-specific options such as ``sizes`` or ``ack_delay``.
    """

    time_ns: int
    kind: str
    src: str
    dst: str
    sport: int = 0
    dport: int = 0
    params: dict[str, Any] = field(default_factory=dict, hash=False)

    def param(self, name: str, default: Any = None) -> Any:
        return self.params.get(name, default)


@dataclass
class FixtureScenario:
    devices: list[Device] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)
    strict: bool = True

    def device(self, label: str) -> Device:
        for dev in self.devices:
            if dev.label == label:
                return dev
        raise InconsistentScenario(f"undeclared device {label!r}")

    def validate(self) -> None:
        labels = [d.label for d in self.devices]
        if len(set(labels)) != len(labels):
            raise InconsistentScenario("duplicate device label")
        prev = None
        for ev in self.events:
            if ev.kind not in EVENT_KINDS:
                raise InconsistentScenario(f"unknown event kind {ev.kind!r}")
            if prev is not None and ev.time_ns < prev:
                raise InconsistentScenario(f"event at {ev.time_ns} ns goes back in time")
            prev = ev.time_ns
            self.device(ev.src)
            self.device(ev.dst)


# --- wire encoders ---------------------------------------------------------

def _mac_bytes(mac: str) -> bytes:
    return bytes(int(part, 16) for part in mac.split(":"))


def _checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    total = sum(struct.unpack(f"!{len(data) // 2}H", data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def ethernet_frame(src_mac: str, dst_mac: str, ethertype: int, payload: bytes) -> bytes:
    return _mac_bytes(dst_mac) + _mac_bytes(src_mac) + struct.pack("!H", ethertype) + payload


def ip_packet(src: str, dst: str, proto: int, payload: bytes, ident: int = 0, ttl: int = 64) -> tuple[int, bytes]:
    """Return (ethertype, packet) for an IPv4 or IPv6 packet."""
    s, d = ipaddress.ip_address(src), ipaddress.ip_address(dst)
    if s.version != d.version:
        raise InconsistentScenario(f"address family mismatch {src} / {dst}")
    if s.version == 6:
        head = struct.pack("!IHBB", 6 << 28, len(payload), proto, ttl) + s.packed + d.packed
        return 0x86DD, head + payload
    head = struct.pack(
        "!BBHHHBBH4s4s", 0x45, 0, 20 + len(payload), ident & 0xFFFF, 0x4000, ttl, proto, 0, s.packed, d.packed
    )
    head = head[:10] + struct.pack("!H", _checksum(head)) + head[12:]
    return 0x0800, head + payload


def _pseudo_header(src: str, dst: str, proto: int, length: int) -> bytes:
    s, d = ipaddress.ip_address(src), ipaddress.ip_address(dst)
    if s.version == 6:
        return s.packed + d.packed + struct.pack("!IxxxB", length, proto)
    return s.packed + d.packed + struct.pack("!BBH", 0, proto, length)


TCP_FLAG_VALUES = {"FIN": 0x01, "SYN": 0x02, "RST": 0x04, "PSH": 0x08, "ACK": 0x10, "URG": 0x20}


def tcp_segment(src: str, dst: str, sport: int, dport: int, seq: int, ack: int,
                flags, window: int, payload: bytes = b"") -> bytes:
    bits = 0
    for name in flags:
        bits |= TCP_FLAG_VALUES[name]
    head = struct.pack("!HHIIHHHH", sport, dport, seq & 0xFFFFFFFF, ack & 0xFFFFFFFF,
                       (5 << 12) | bits, window, 0, 0)
    csum = _checksum(_pseudo_header(src, dst, 6, len(head) + len(payload)) + head + payload)
    return head[:16] + struct.pack("!H", csum) + head[18:] + payload


def udp_datagram(src: str, dst: str, sport: int, dport: int, payload: bytes) -> bytes:
    head = struct.pack("!HHHH", sport, dport, 8 + len(payload), 0)
    csum = _checksum(_pseudo_header(src, dst, 17, len(head) + len(payload)) + head + payload) or 0xFFFF
    return head[:6] + struct.pack("!H", csum) + payload


def _dns_name(name: str) -> bytes:
    out = b""
    for label in name.strip(".").split("."):
        if label:
            raw = label.encode("ascii")
            out += bytes([len(raw)]) + raw
    return out + b"\x00"


def dns_message(ident: int, name: str, address: Optional[str] = None, response: bool = False) -> bytes:
    qtype = 1
    rdata = b""
    if address is not None:
        addr = ipaddress.ip_address(address)
        qtype = 1 if addr.version == 4 else 28
        rdata = addr.packed
    flags = 0x8180 if response else 0x0100
    ancount = 1 if response and address is not None else 0
    msg = struct.pack("!HHHHHH", ident, flags, 1, ancount, 0, 0)
    msg += _dns_name(name) + struct.pack("!HH", qtype, 1)
    if ancount:
        # answer name points back at the question name (offset 12)
        msg += struct.pack("!HHHIH", 0xC00C, qtype, 1, 300, len(rdata)) + rdata
    return msg


def arp_packet(opcode: int, sender_mac: str, sender_ip: str, target_mac: str, target_ip: str) -> bytes:
    return (
        struct.pack("!HHBBH", 1, 0x0800, 6, 4, opcode)
        + _mac_bytes(sender_mac) + ipaddress.IPv4Address(sender_ip).packed
        + _mac_bytes(target_mac) + ipaddress.IPv4Address(target_ip).packed
    )


def payload_bytes(offset: int, length: int) -> bytes:
    """Deterministic payload whose content depends only on stream offset."""
    return bytes((offset + i) % 251 for i in range(length))


def build_tcp_frame(src: Device, dst: Device, sport: int, dport: int, seq: int, ack: int,
                    flags, window: int = DEFAULT_WINDOW, payload: bytes = b"", ident: int = 0) -> bytes:
    seg = tcp_segment(src.ip, dst.ip, sport, dport, seq, ack, flags, window, payload)
    ethertype, pkt = ip_packet(src.ip, dst.ip, 6, seg, ident)
    return ethernet_frame(src.mac, dst.mac, ethertype, pkt)


# --- generator -------------------------------------------------------------

@dataclass
class _Side:
    device: Device
    port: int
    isn: int
    snd_nxt: int
    rcv_nxt: int = 0
    window: int = DEFAULT_WINDOW
    last_pure_ack: Optional[tuple[int, int]] = None
    last_data: Optional[tuple[int, int, bytes]] = None  # (seq, ack, payload)


@dataclass
class _Conn:
    client: _Side
    server: _Side

    def sides(self, sender: str) -> tuple[_Side, _Side]:
        return (self.client, self.server) if sender == "client" else (self.server, self.client)


def default_isn(src: str, sport: int, dst: str, dport: int) -> int:
    return zlib.crc32(f"{src}:{sport}>{dst}:{dport}".encode())


class _Generator:
    def __init__(self, scenario: FixtureScenario):
        self.sc = scenario
        self.out: list[tuple[int, int, bytes]] = []
        self.conns: dict[tuple[str, int, str, int], _Conn] = {}
        self.ip_ids: dict[str, int] = {}
        self.dns_ids = 0
        self.udp_ports = 0

    def emit(self, ts_ns: int, frame: bytes) -> None:
        self.out.append((_quantize_us(ts_ns), len(self.out), frame))

    def next_id(self, dev: Device) -> int:
        n = self.ip_ids.get(dev.label, zlib.crc32(dev.label.encode()) & 0xFFFF)
        self.ip_ids[dev.label] = (n + 1) & 0xFFFF
        return n

    def send_tcp(self, ts: int, src: _Side, dst: _Side, seq: int, ack: int, flags,
                 window: int, payload: bytes = b"") -> None:
        frame = build_tcp_frame(src.device, dst.device, src.port, dst.port, seq, ack, flags,
                                window, payload, self.next_id(src.device))
        self.emit(ts, frame)

    def conn(self, ev: Event, create: bool = False) -> _Conn:
        key = (ev.src, ev.sport, ev.dst, ev.dport)
        conn = self.conns.get(key)
        if conn is None:
            if not create and self.sc.strict:
                raise InconsistentScenario(
                    f"{ev.kind} on {ev.src}:{ev.sport} -> {ev.dst}:{ev.dport} before tcp-handshake"
                )
            c_isn = int(ev.param("isn", default_isn(*key)))
            s_isn = int(ev.param("peer_isn", default_isn(ev.dst, ev.dport, ev.src, ev.sport)))
            conn = _Conn(
                _Side(self.sc.device(ev.src), ev.sport, c_isn, c_isn, s_isn),
                _Side(self.sc.device(ev.dst), ev.dport, s_isn, s_isn, c_isn),
            )
            if not create:
                # implicit, already-established connection
                for side in (conn.client, conn.server):
                    side.snd_nxt = (side.isn + 1) & 0xFFFFFFFF
                conn.client.rcv_nxt = conn.server.snd_nxt
                conn.server.rcv_nxt = conn.client.snd_nxt
            self.conns[key] = conn
        return conn

    def run(self) -> list[PacketRecord]:
        self.sc.validate()
        for ev in self.sc.events:
            getattr(self, "ev_" + ev.kind.replace("-", "_"))(ev)
        self.out.sort(key=lambda item: (item[0], item[1]))
        return [make_record(i, ts, frame) for i, (ts, _, frame) in enumerate(self.out, start=1)]

    # TCP events

    def ev_tcp_handshake(self, ev: Event) -> None:
        if (ev.src, ev.sport, ev.dst, ev.dport) in self.conns:
            raise InconsistentScenario(f"second handshake on {ev.src}:{ev.sport} -> {ev.dst}:{ev.dport}")
        conn = self.conn(ev, create=True)
        c, s = conn.client, conn.server
        delay = seconds_to_ns(ev.param("delay", "0.01"))
        window = int(ev.param("window", DEFAULT_WINDOW))
        c.window = s.window = window
        t = ev.time_ns
        self.send_tcp(t, c, s, c.isn, 0, {"SYN"}, window)
        c.snd_nxt = (c.isn + 1) & 0xFFFFFFFF
        s.rcv_nxt = c.snd_nxt
        self.send_tcp(t + delay, s, c, s.isn, s.rcv_nxt, {"SYN", "ACK"}, window)
        s.snd_nxt = (s.isn + 1) & 0xFFFFFFFF
        c.rcv_nxt = s.snd_nxt
        self.send_tcp(t + 2 * delay, c, s, c.snd_nxt, c.rcv_nxt, {"ACK"}, window)
        c.last_pure_ack = (c.rcv_nxt, window)

    def ev_tcp_transfer(self, ev: Event) -> None:
        conn = self.conn(ev)
        snd, rcv = conn.sides(ev.param("from", "client"))
        sizes = [int(x) for x in ev.param("sizes", [])]
        gap = seconds_to_ns(ev.param("gap", "0.001"))
        ack_delay = ev.param("ack_delay", "0.05")
        delays = ev.param("ack_delays")
        if delays is not None and len(delays) != len(sizes):
            raise InconsistentScenario("ack_delays must match sizes")
        for i, size in enumerate(sizes):
            ts = ev.time_ns + i * gap
            seq = snd.snd_nxt
            payload = payload_bytes((seq - snd.isn) & 0xFFFFFFFF, size)
            self.send_tcp(ts, snd, rcv, seq, snd.rcv_nxt, {"ACK", "PSH"}, snd.window, payload)
            snd.last_data = (seq, snd.rcv_nxt, payload)
            snd.snd_nxt = (seq + size) & 0xFFFFFFFF
            rcv.rcv_nxt = snd.snd_nxt
            d = delays[i] if delays is not None else ack_delay
            if str(d).lower() == "none":
                continue
            self.send_tcp(ts + seconds_to_ns(d), rcv, snd, rcv.snd_nxt, rcv.rcv_nxt, {"ACK"}, rcv.window)
            rcv.last_pure_ack = (rcv.rcv_nxt, rcv.window)

    def ev_tcp_ack(self, ev: Event) -> None:
        conn = self.conn(ev)
        side, peer = conn.sides(ev.param("from", "server"))
        self.send_tcp(ev.time_ns, side, peer, side.snd_nxt, side.rcv_nxt, {"ACK"}, side.window)
        side.last_pure_ack = (side.rcv_nxt, side.window)

    def ev_tcp_close(self, ev: Event) -> None:
        conn = self.conn(ev)
        a, b = conn.sides(ev.param("from", "client"))
        delay = seconds_to_ns(ev.param("delay", "0.01"))
        t = ev.time_ns
        self.send_tcp(t, a, b, a.snd_nxt, a.rcv_nxt, {"FIN", "ACK"}, a.window)
        a.snd_nxt = (a.snd_nxt + 1) & 0xFFFFFFFF
        b.rcv_nxt = a.snd_nxt
        self.send_tcp(t + delay, b, a, b.snd_nxt, b.rcv_nxt, {"FIN", "ACK"}, b.window)
        b.snd_nxt = (b.snd_nxt + 1) & 0xFFFFFFFF
        a.rcv_nxt = b.snd_nxt
        self.send_tcp(t + 2 * delay, a, b, a.snd_nxt, a.rcv_nxt, {"ACK"}, a.window)
        a.last_pure_ack = (a.rcv_nxt, a.window)

    def ev_inject_retransmission(self, ev: Event) -> None:
        conn = self.conn(ev)
        snd, rcv = conn.sides(ev.param("from", "client"))
        if snd.last_data is None:
            raise InconsistentScenario("inject-retransmission with no prior data segment")
        seq, ack, payload = snd.last_data
        self.send_tcp(ev.time_ns, snd, rcv, seq, ack, {"ACK", "PSH"}, snd.window, payload)

    def ev_inject_zero_window(self, ev: Event) -> None:
        conn = self.conn(ev)
        side, peer = conn.sides(ev.param("from", "server"))
        self.send_tcp(ev.time_ns, side, peer, side.snd_nxt, side.rcv_nxt, {"ACK"}, 0)
        side.last_pure_ack = (side.rcv_nxt, 0)
        duration = ev.param("duration", "0.01")
        if str(duration).lower() == "none":
            side.window = 0
            return
        self.send_tcp(ev.time_ns + seconds_to_ns(duration), side, peer, side.snd_nxt, side.rcv_nxt,
                      {"ACK"}, side.window)
        side.last_pure_ack = (side.rcv_nxt, side.window)

    def ev_inject_dup_ack(self, ev: Event) -> None:
        conn = self.conn(ev)
        side, peer = conn.sides(ev.param("from", "server"))
        count = int(ev.param("count", 1))
        gap = seconds_to_ns(ev.param("gap", "0.001"))
        t = ev.time_ns
        current = (side.rcv_nxt, side.window)
        if side.last_pure_ack != current:
            self.send_tcp(t, side, peer, side.snd_nxt, side.rcv_nxt, {"ACK"}, side.window)
            side.last_pure_ack = current
            t += gap
        for k in range(count):
            self.send_tcp(t + k * gap, side, peer, side.snd_nxt, side.rcv_nxt, {"ACK"}, side.window)

    # other protocols

    def ev_udp_exchange(self, ev: Event) -> None:
        a, b = self.sc.device(ev.src), self.sc.device(ev.dst)
        sizes = [int(x) for x in ev.param("sizes", [])]
        delay = seconds_to_ns(ev.param("delay", "0.01"))
        for i, size in enumerate(sizes):
            src, dst, sp, dp = (a, b, ev.sport, ev.dport) if i % 2 == 0 else (b, a, ev.dport, ev.sport)
            self._send_udp(ev.time_ns + i * delay, src, dst, sp, dp, payload_bytes(i, size))

    def _send_udp(self, ts: int, src: Device, dst: Device, sport: int, dport: int, payload: bytes) -> None:
        dgram = udp_datagram(src.ip, dst.ip, sport, dport, payload)
        ethertype, pkt = ip_packet(src.ip, dst.ip, 17, dgram, self.next_id(src))
        self.emit(ts, ethernet_frame(src.mac, dst.mac, ethertype, pkt))

    def ev_dns_query_response(self, ev: Event) -> None:
        client, server = self.sc.device(ev.src), self.sc.device(ev.dst)
        name = ev.param("name")
        if not name:
            raise InconsistentScenario("dns-query-response needs name=")
        address = ev.param("address")
        delay = seconds_to_ns(ev.param("delay", "0.02"))
        self.dns_ids += 1
        ident = int(ev.param("id", 0x1000 + self.dns_ids))
        if ev.sport:
            sport = ev.sport
        else:
            self.udp_ports += 1
            sport = 49151 + self.udp_ports
        dport = ev.dport or 53
        self._send_udp(ev.time_ns, client, server, sport, dport, dns_message(ident, name))
        self._send_udp(ev.time_ns + delay, server, client, dport, sport,
                       dns_message(ident, name, address, response=True))

    def ev_arp_request_reply(self, ev: Event) -> None:
        a, b = self.sc.device(ev.src), self.sc.device(ev.dst)
        delay = seconds_to_ns(ev.param("delay", "0.001"))
        req = arp_packet(1, a.mac, a.ip, "00:00:00:00:00:00", b.ip)
        self.emit(ev.time_ns, ethernet_frame(a.mac, BROADCAST_MAC, 0x0806, req))
        rep = arp_packet(2, b.mac, b.ip, a.mac, a.ip)
        self.emit(ev.time_ns + delay, ethernet_frame(b.mac, a.mac, 0x0806, rep))


def generate_fixture(scenario: FixtureScenario) -> list[PacketRecord]:
    return _Generator(scenario).run()
