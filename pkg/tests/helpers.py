"""Shared fixtures builders and brute-force oracles for the test suite.

The oracles here deliberately avoid the library's incremental state: they
rescan every earlier packet for each decision.
"""

from __future__ import annotations

import random
from collections import Counter, defaultdict

from capstats.capture_io import make_record
from capstats.dissect import dissect_all
from capstats.fixture import Device, build_tcp_frame, generate_fixture
from capstats.scenario import parse_scenario

ROUTER = Device("Router", "192.168.100.1")
LAPTOP = Device("Laptop 1", "192.168.100.15")

TWO_HOSTS = """
device Router 192.168.100.1
device Laptop 192.168.100.15
"""


def frames_of(text: str):
    return dissect_all(generate_fixture(parse_scenario(TWO_HOSTS + text)))


def records_of(text: str):
    return generate_fixture(parse_scenario(TWO_HOSTS + text))


def us(seconds: float) -> int:
    return round(seconds * 1_000_000) * 1000


# --- hierarchy / conversation recounts ------------------------------------

def recount_paths(frames):
    """packets per protocol-path prefix by direct linear scan."""
    counts = Counter()
    for f in frames:
        path = ("frame",) + tuple(layer.name for layer in f.stack.layers)
        for i in range(1, len(path) + 1):
            counts[path[:i]] += 1
    return counts


def recount_layer_packets(frames, layer):
    names = {"ip": ("ipv4", "ipv6"), "ethernet": ("ethernet",)}.get(layer, (layer,))
    return sum(1 for f in frames if any(n in f.stack for n in names))


# --- random TCP streams -------------------------------------------------------

def random_stream(rng: random.Random, max_segments: int = 500):
    """Frames of one TCP connection with losses, reordering, repeats, dup ACKs
    and zero windows, plus the raw per-packet tuples used by the oracle."""
    a, b = LAPTOP, ROUTER
    sport, dport = 40000 + rng.randrange(1000), 80
    isn_a = rng.choice([rng.randrange(1 << 32), (1 << 32) - rng.randrange(1, 5000)])
    isn_b = rng.randrange(1 << 32)
    t = us(rng.uniform(0, 5))
    packets = []  # (ts, src_is_a, seq, ack, flags, window, payload_len)

    def add(src_is_a, seq, ack, flags, window, length):
        packets.append((t, src_is_a, seq & 0xFFFFFFFF, ack & 0xFFFFFFFF, frozenset(flags), window, length))

    def step():
        nonlocal t
        t += us(rng.choice([0.0002, 0.001, 0.002, 0.0035, 0.006, 0.02]))

    handshake = rng.random() < 0.7
    if handshake:
        add(True, isn_a, 0, {"SYN"}, 65535, 0)
        step()
        add(False, isn_b, isn_a + 1, {"SYN", "ACK"}, 65535, 0)
        step()
        add(True, isn_a + 1, isn_b + 1, {"ACK"}, 65535, 0)
    nxt = isn_a + 1
    rcv_ack = isn_a + 1
    sent = []  # (seq, length)
    held = []  # segments not yet captured (lost)
    n_segments = rng.randrange(1, max_segments)
    window = 65535
    while len(packets) < n_segments:
        step()
        r = rng.random()
        if r < 0.45:
            length = rng.randrange(1, 300)
            if rng.random() < 0.1:
                held.append((nxt, length))
            else:
                add(True, nxt, isn_b + 1, {"ACK", "PSH"}, 65535, length)
            sent.append((nxt, length))
            nxt += length
        elif r < 0.55 and held:
            seq, length = held.pop(rng.randrange(len(held)))
            add(True, seq, isn_b + 1, {"ACK"}, 65535, length)
        elif r < 0.62 and sent:
            seq, length = rng.choice(sent)
            add(True, seq, isn_b + 1, {"ACK"}, 65535, length)
        elif r < 0.65:
            add(True, nxt - 1, isn_b + 1, {"ACK"}, 65535, rng.choice([0, 1]))
        elif r < 0.9:
            if rng.random() < 0.6:
                rcv_ack = max(rcv_ack, nxt - rng.randrange(0, 200))
            if rng.random() < 0.1:
                window = 0 if window else 65535
            add(False, isn_b + 1, rcv_ack, {"ACK"}, window, 0)
        elif r < 0.97 and packets:
            last_b = [p for p in packets if not p[1] and p[6] == 0 and "ACK" in p[4]
                      and not p[4] & {"SYN", "FIN", "RST"}]
            if last_b:
                p = last_b[-1]
                add(False, p[2], p[3], {"ACK"}, p[5], 0)
        else:
            add(False, isn_b + 1, rcv_ack, {"ACK"}, 0 if rng.random() < 0.5 else window, 0)
    frames = []
    for i, (ts, src_is_a, seq, ack, flags, win, length) in enumerate(packets, start=1):
        src, dst = (a, b) if src_is_a else (b, a)
        sp, dp = (sport, dport) if src_is_a else (dport, sport)
        payload = bytes(length)
        frames.append(make_record(i, ts, build_tcp_frame(src, dst, sp, dp, seq, ack, flags, win, payload)))
    return dissect_all(frames), packets


def brute_force_flags(packets, threshold_ns: int = 3_000_000):
    """Independent classifier: every decision rescans all earlier packets of
    the same direction. Returns a list of (flags, dup_count) per packet."""
    origin = {}
    for p in packets:
        origin.setdefault(p[1], (p[2] - (1 << 20)) & 0xFFFFFFFF)

    def rel(direction, value):
        return (value - origin[direction]) & 0xFFFFFFFF

    results = []
    for i, (ts, d, seq, ack, flags, window, length) in enumerate(packets):
        control = flags & {"SYN", "FIN", "RST"}
        seg_len = length + ("SYN" in flags) + ("FIN" in flags)
        prior = [j for j in range(i) if packets[j][1] == d]
        out = set()
        dup = 0
        if window == 0 and not control:
            out.add("zero-window")
        start = rel(d, seq)
        keep_alive = False
        if prior:
            ne = max(rel(d, packets[j][2]) + packets[j][6] + ("SYN" in packets[j][4]) + ("FIN" in packets[j][4])
                     for j in prior)
            if length <= 1 and not control and start == ne - 1:
                keep_alive = True
                out.add("keep-alive")
            elif seg_len > 0 and start < ne:
                seen = set()
                for j in prior:
                    if "keep-alive" in results[j][0]:
                        continue
                    pj = packets[j]
                    lj = pj[6] + ("SYN" in pj[4]) + ("FIN" in pj[4])
                    s = rel(d, pj[2])
                    seen.update(range(s, s + lj))
                if all(x in seen for x in range(start, start + seg_len)):
                    out.add("retransmission")
                elif length > 0 and ts - packets[prior[-1]][0] <= threshold_ns:
                    out.add("out-of-order")
                else:
                    out.add("retransmission")
        if length == 0 and "ACK" in flags and not control and not keep_alive:
            earlier = [j for j in prior
                       if packets[j][6] == 0 and "ACK" in packets[j][4]
                       and not packets[j][4] & {"SYN", "FIN", "RST"}
                       and "keep-alive" not in results[j][0]]
            if earlier:
                pj = packets[earlier[-1]]
                if (pj[3], pj[5]) == (ack, window):
                    dup = results[earlier[-1]][1] + 1
                    out.add("duplicate-ack")
        results.append((out, dup))
    return results


# --- random scenarios ------------------------------------------------------

def random_scenario_text(rng: random.Random, max_events: int = 40) -> str:
    hosts = [("Router", "192.168.100.1"), ("Laptop1", "192.168.100.15"), ("Laptop2", "192.168.100.47"),
             ("Phone1", "192.168.100.62"), ("Phone2", "192.168.100.23"), ("TV", "192.168.100.35")]
    lines = [f"device {label} {ip}" for label, ip in hosts]
    t = 0.0
    open_streams = []
    port = 50000
    for _ in range(rng.randrange(0, max_events)):
        t += rng.choice([0.0, 0.001, 0.013, 0.2, 0.5])
        a, b = rng.sample([h[0] for h in hosts], 2)
        kind = rng.random()
        if kind < 0.25 or not open_streams:
            port += 1
            lines.append(f"at {t:.6f} tcp-handshake {a}:{port} -> {b}:80 delay=0.002")
            open_streams.append((a, port, b))
        elif kind < 0.5:
            a, p, b = rng.choice(open_streams)
            sizes = ",".join(str(rng.randrange(1, 1400)) for _ in range(rng.randrange(1, 6)))
            side = rng.choice(["client", "server"])
            lines.append(f"at {t:.6f} tcp-transfer {a}:{p} -> {b}:80 sizes={sizes} from={side} ack_delay=0.01")
        elif kind < 0.65:
            sizes = ",".join(str(rng.randrange(0, 500)) for _ in range(rng.randrange(1, 5)))
            lines.append(f"at {t:.6f} udp-exchange {a}:{rng.randrange(1024, 65535)} -> {b}:9999 sizes={sizes}")
        elif kind < 0.8:
            lines.append(f"at {t:.6f} dns-query-response {a} -> {b} name=h{rng.randrange(99)}.test "
                         f"address=10.0.{rng.randrange(256)}.{rng.randrange(256)}")
        else:
            lines.append(f"at {t:.6f} arp-request-reply {a} -> {b}")
    return "\n".join(lines) + "\n"


def recount_conversations(frames, layer):
    """(sorted endpoint pair) -> [packets, bytes] by direct grouping."""
    out = defaultdict(lambda: [0, 0])
    for f in frames:
        st = f.stack
        if layer == "ethernet":
            eth = st.get("ethernet")
            if eth is None:
                continue
            pair = tuple(sorted([(eth["src"],), (eth["dst"],)]))
        else:
            ip = st.ip
            if ip is None:
                continue
            if layer == "ip":
                pair = tuple(sorted([(ip["src"],), (ip["dst"],)]))
            else:
                tl = st.get(layer)
                if tl is None:
                    continue
                pair = tuple(sorted([(ip["src"], tl["src_port"]), (ip["dst"], tl["dst_port"])]))
        out[pair][0] += 1
        out[pair][1] += f.length
    return dict(out)
