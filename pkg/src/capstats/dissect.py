"""Layered frame decoding: ethernet -> arp/ipv4/ipv6 -> tcp/udp/icmp -> dns.

Decoding is total: any failure is recorded in ``LayerStack.malformed`` and the
layers decoded up to that point are kept.
"""

from __future__ import annotations

import ipaddress
import struct
from dataclasses import dataclass, field
from typing import Any, Optional

from .capture_io import LINKTYPE_ETHERNET, PacketRecord

ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_ARP = 0x0806
ETHERTYPE_VLAN = 0x8100
ETHERTYPE_IPV6 = 0x86DD

IPPROTO_ICMP = 1
IPPROTO_TCP = 6
IPPROTO_UDP = 17
IPPROTO_ICMPV6 = 58

TCP_FLAG_BITS = (
    ("FIN", 0x01),
    ("SYN", 0x02),
    ("RST", 0x04),
    ("PSH", 0x08),
    ("ACK", 0x10),
    ("URG", 0x20),
)

DNS_TYPE_A = 1
DNS_TYPE_AAAA = 28
MAX_POINTER_JUMPS = 32


@dataclass(frozen=True)
class Layer:
    name: str
    fields: dict[str, Any] = field(hash=False)
    start: int
    end: int

    def __getitem__(self, key: str) -> Any:
        return self.fields[key]

    def get(self, key: str, default: Any = None) -> Any:
        return self.fields.get(key, default)


@dataclass(frozen=True)
class LayerStack:
    layers: tuple[Layer, ...] = ()
    malformed: Optional[tuple[str, str]] = None

    def names(self) -> list[str]:
        return [layer.name for layer in self.layers]

    def get(self, name: str) -> Optional[Layer]:
        for layer in self.layers:
            if layer.name == name:
                return layer
        return None

    def __contains__(self, name: str) -> bool:
        return self.get(name) is not None

    @property
    def ip(self) -> Optional[Layer]:
        return self.get("ipv4") or self.get("ipv6")

    @property
    def transport(self) -> Optional[Layer]:
        return self.get("tcp") or self.get("udp")


class _Malformed(Exception):
    def __init__(self, layer: str, reason: str):
        super().__init__(reason)
        self.layer = layer
        self.reason = reason


def format_mac(raw: bytes) -> str:
    return ":".join(f"{b:02x}" for b in raw)


def tcp_flag_names(bits: int) -> frozenset[str]:
    return frozenset(name for name, mask in TCP_FLAG_BITS if bits & mask)


class _Decoder:
    def __init__(self, data: bytes):
        self.data = data
        self.layers: list[Layer] = []

    def add(self, name: str, start: int, end: int, **fields: Any) -> None:
        self.layers.append(Layer(name, fields, start, end))

    def data_layer(self, start: int, end: int) -> None:
        if end > start:
            self.add("data", start, end, length=end - start)

    def ethernet(self) -> None:
        data = self.data
        if len(data) < 14:
            raise _Malformed("ethernet", "frame shorter than 14 bytes")
        dst, src = data[0:6], data[6:12]
        (ethertype,) = struct.unpack_from("!H", data, 12)
        off = 14
        vlans = []
        while ethertype == ETHERTYPE_VLAN:
            if len(data) < off + 4:
                raise _Malformed("ethernet", "truncated 802.1Q tag")
            tci, ethertype = struct.unpack_from("!HH", data, off)
            vlans.append(tci & 0x0FFF)
            off += 4
        self.add(
            "ethernet", 0, off,
            src=format_mac(src), dst=format_mac(dst), ethertype=ethertype, vlans=tuple(vlans),
        )
        if ethertype == ETHERTYPE_IPV4:
            self.ipv4(off)
        elif ethertype == ETHERTYPE_IPV6:
            self.ipv6(off)
        elif ethertype == ETHERTYPE_ARP:
            self.arp(off)
        else:
            self.data_layer(off, len(data))

    def arp(self, off: int) -> None:
        data = self.data
        if len(data) < off + 8:
            raise _Malformed("arp", "truncated ARP header")
        htype, ptype, hlen, plen, opcode = struct.unpack_from("!HHBBH", data, off)
        end = off + 8 + 2 * (hlen + plen)
        if len(data) < end:
            raise _Malformed("arp", "truncated ARP addresses")
        p = off + 8
        sha = data[p:p + hlen]
        spa = data[p + hlen:p + hlen + plen]
        tha = data[p + hlen + plen:p + 2 * hlen + plen]
        tpa = data[p + 2 * hlen + plen:end]

        def proto_addr(raw: bytes) -> str:
            return str(ipaddress.IPv4Address(raw)) if plen == 4 else raw.hex()

        self.add(
            "arp", off, end,
            opcode=opcode, hardware_type=htype, protocol_type=ptype,
            sender_mac=format_mac(sha), sender_ip=proto_addr(spa),
            target_mac=format_mac(tha), target_ip=proto_addr(tpa),
        )

    def ipv4(self, off: int) -> None:
        data = self.data
        if len(data) < off + 20:
            raise _Malformed("ipv4", "truncated IPv4 header")
        ver_ihl, tos, total_length, ident, frag, ttl, proto = struct.unpack_from("!BBHHHBB", data, off)
        if ver_ihl >> 4 != 4:
            raise _Malformed("ipv4", f"bad IP version {ver_ihl >> 4}")
        hlen = (ver_ihl & 0x0F) * 4
        if hlen < 20:
            raise _Malformed("ipv4", f"header length {hlen} below 20")
        if len(data) < off + hlen:
            raise _Malformed("ipv4", "truncated IPv4 options")
        if total_length < hlen:
            raise _Malformed("ipv4", f"total length {total_length} below header length {hlen}")
        end = min(off + total_length, len(data))
        flags = frag >> 13
        frag_offset = (frag & 0x1FFF) * 8
        self.add(
            "ipv4", off, end,
            src=str(ipaddress.IPv4Address(data[off + 12:off + 16])),
            dst=str(ipaddress.IPv4Address(data[off + 16:off + 20])),
            protocol=proto, total_length=total_length, header_length=hlen,
            flags=flags, fragment_offset=frag_offset, ttl=ttl, id=ident,
            truncated=off + total_length > len(data),
        )
        if frag_offset > 0:
            return
        self.transport(proto, off + hlen, end, off + total_length)

    def ipv6(self, off: int) -> None:
        data = self.data
        if len(data) < off + 40:
            raise _Malformed("ipv6", "truncated IPv6 header")
        vtf, payload_length, next_header, hop_limit = struct.unpack_from("!IHBB", data, off)
        if vtf >> 28 != 6:
            raise _Malformed("ipv6", f"bad IP version {vtf >> 28}")
        wire_end = off + 40 + payload_length
        end = min(wire_end, len(data))
        self.add(
            "ipv6", off, end,
            src=str(ipaddress.IPv6Address(data[off + 8:off + 24])),
            dst=str(ipaddress.IPv6Address(data[off + 24:off + 40])),
            next_header=next_header, payload_length=payload_length, hop_limit=hop_limit,
            truncated=wire_end > len(data),
        )
        self.transport(next_header, off + 40, end, wire_end)

    def transport(self, proto: int, off: int, end: int, wire_end: int) -> None:
        if proto == IPPROTO_TCP:
            self.tcp(off, end, wire_end)
        elif proto == IPPROTO_UDP:
            self.udp(off, end)
        elif proto in (IPPROTO_ICMP, IPPROTO_ICMPV6):
            if end < off + 4:
                raise _Malformed("icmp", "truncated ICMP header")
            self.add("icmp", off, end, type=self.data[off], code=self.data[off + 1])
        else:
            self.data_layer(off, end)

    def tcp(self, off: int, end: int, wire_end: int) -> None:
        data = self.data
        if end < off + 20:
            raise _Malformed("tcp", "truncated TCP header")
        sport, dport, seq, ack, off_flags, window = struct.unpack_from("!HHIIHH", data, off)
        hlen = (off_flags >> 12) * 4
        if hlen < 20:
            raise _Malformed("tcp", f"header length {hlen} below 20")
        if end < off + hlen:
            raise _Malformed("tcp", "truncated TCP options")
        self.add(
            "tcp", off, off + hlen,
            src_port=sport, dst_port=dport, seq=seq, ack=ack,
            flags=tcp_flag_names(off_flags & 0x3F), window=window, header_length=hlen,
            payload_length=end - off - hlen,
            truncated=wire_end > end,
        )
        self.data_layer(off + hlen, end)

    def udp(self, off: int, end: int) -> None:
        data = self.data
        if end < off + 8:
            raise _Malformed("udp", "truncated UDP header")
        sport, dport, length = struct.unpack_from("!HHH", data, off)
        self.add("udp", off, off + 8, src_port=sport, dst_port=dport, length=length)
        if end > off + 8 and 53 in (sport, dport):
            self.dns(off + 8, end)
        else:
            self.data_layer(off + 8, end)

    def dns(self, off: int, end: int) -> None:
        data = self.data[:end]
        if end < off + 12:
            raise _Malformed("dns", "truncated DNS header")
        ident, flags, qdcount, ancount = struct.unpack_from("!HHHH", data, off)
        pos = off + 12
        questions = []
        for _ in range(qdcount):
            name, pos = _read_name(data, off, pos)
            if pos + 4 > end:
                raise _Malformed("dns", "truncated DNS question")
            qtype, _qclass = struct.unpack_from("!HH", data, pos)
            pos += 4
            questions.append((name, qtype))
        answers = []
        for _ in range(ancount):
            name, pos = _read_name(data, off, pos)
            if pos + 10 > end:
                raise _Malformed("dns", "truncated DNS resource record")
            rtype, _rclass, _ttl, rdlen = struct.unpack_from("!HHIH", data, pos)
            pos += 10
            if pos + rdlen > end:
                raise _Malformed("dns", "truncated DNS rdata")
            rdata = data[pos:pos + rdlen]
            pos += rdlen
            if rtype == DNS_TYPE_A and rdlen == 4:
                answers.append((name, "A", str(ipaddress.IPv4Address(rdata))))
            elif rtype == DNS_TYPE_AAAA and rdlen == 16:
                answers.append((name, "AAAA", str(ipaddress.IPv6Address(rdata))))
        self.add(
            "dns", off, end,
            id=ident, is_response=bool(flags & 0x8000), rcode=flags & 0x0F,
            questions=tuple(questions), answers=tuple(answers),
        )


def _read_name(data: bytes, msg_start: int, pos: int) -> tuple[str, int]:
    labels = []
    jumps = 0
    resume = None
    while True:
        if pos >= len(data):
            raise _Malformed("dns", "name runs past end of message")
        length = data[pos]
        if length & 0xC0 == 0xC0:
            if pos + 1 >= len(data):
                raise _Malformed("dns", "truncated compression pointer")
            jumps += 1
            if jumps > MAX_POINTER_JUMPS:
                raise _Malformed("dns", "compression pointer loop")
            if resume is None:
                resume = pos + 2
            pos = msg_start + (((length & 0x3F) << 8) | data[pos + 1])
            continue
        if length & 0xC0:
            raise _Malformed("dns", f"unsupported label type 0x{length:02x}")
        pos += 1
        if length == 0:
            break
        if pos + length > len(data):
            raise _Malformed("dns", "label runs past end of message")
        labels.append(data[pos:pos + length].decode("ascii", errors="replace"))
        pos += length
    return ".".join(labels), (resume if resume is not None else pos)


def dissect_packet(record: PacketRecord, linktype: int = LINKTYPE_ETHERNET) -> LayerStack:
    data = record.data
    if linktype != LINKTYPE_ETHERNET:
        if not data:
            return LayerStack()
        return LayerStack((Layer("data", {"length": len(data)}, 0, len(data)),))
    dec = _Decoder(data)
    try:
        dec.ethernet()
    except _Malformed as exc:
        return LayerStack(tuple(dec.layers), (exc.layer, exc.reason))
    return LayerStack(tuple(dec.layers))


def protocol_path(stack: LayerStack) -> list[str]:
    return ["frame"] + stack.names()


@dataclass(frozen=True)
class Frame:
    """A captured record together with its dissection."""

    record: PacketRecord
    stack: LayerStack

    @property
    def index(self) -> int:
        return self.record.index

    @property
    def ts_ns(self) -> int:
        return self.record.ts_ns

    @property
    def length(self) -> int:
        return self.record.captured_len


def dissect_all(records, linktype: int = LINKTYPE_ETHERNET) -> list[Frame]:
    return [Frame(rec, dissect_packet(rec, linktype)) for rec in records]


@dataclass
class Capture:
    """A whole capture file read and dissected."""

    path: str
    header: Any
    frames: list[Frame]
    error: Optional[Exception] = None

    @property
    def file_name(self) -> str:
        return self.path.replace("\\", "/").rsplit("/", 1)[-1]


def load_capture(path) -> Capture:
    from .capture_io import open_capture

    with open_capture(path) as reader:
        records = list(reader)
        return Capture(str(path), reader.header, dissect_all(records, reader.header.linktype), reader.error)
