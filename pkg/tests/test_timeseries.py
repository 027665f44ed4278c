import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from capstats.dfilter import parse_filter
from capstats.dissect import dissect_all
from capstats.fixture import generate_fixture
from capstats.scenario import parse_scenario
from capstats.timeseries import (FlowGraph, FlowRow, InvalidTick, as_fraction, bin_index, check_tick,
                                 flow_graph, io_graph, render_flow_text)

from helpers import frames_of, random_scenario_text

HANDSHAKE = frames_of("at 0 tcp-handshake Laptop:50000 -> Router:80\n")


def scenario_frames(seed):
    return dissect_all(generate_fixture(parse_scenario(random_scenario_text(random.Random(seed)))))


def test_tick_bounds():
    assert check_tick("0.001") == Fraction(1, 1000)
    assert check_tick(10) == 10
    for bad in ("0.0009", "10.5", "0"):
        with pytest.raises(InvalidTick):
            check_tick(bad)


def test_as_fraction_exact():
    assert as_fraction(0.1) == Fraction(1, 10)
    assert as_fraction("0.25") == Fraction(1, 4)


def test_bin_index_exact():
    assert bin_index(300_000_000, 0, Fraction(1, 10)) == 3
    assert bin_index(299_999_999, 0, Fraction(1, 10)) == 2


def test_io_graph_empty():
    (s,) = io_graph([])
    assert s.points == [] and s.label == "all packets"


def test_io_graph_dense_bins():
    frames = frames_of("at 0 udp-exchange Laptop:1 -> Router:2 sizes=1\n"
                       "at 2.5 udp-exchange Laptop:1 -> Router:2 sizes=1\n")
    (s,) = io_graph(frames, tick="1")
    assert s.points == [(0, 1), (1, 0), (2, 1)]
    (b,) = io_graph(frames, tick="1", unit="bytes")
    assert sum(b.values()) == sum(f.length for f in frames)
    (bits,) = io_graph(frames, tick="1", unit="bits")
    assert bits.values() == [8 * v for v in b.values()]


@pytest.mark.parametrize("seed", range(10))
def test_conservation_monotone_rebinning(seed):
    frames = scenario_frames(seed)
    if not frames:
        return
    (total,) = io_graph(frames, tick="1")
    assert sum(total.values()) == len(frames)
    tcp, udp = io_graph(frames, [parse_filter("tcp"), parse_filter("udp")], tick="1")
    assert all(a <= t for a, t in zip(tcp.values(), total.values()))
    assert all(a <= t for a, t in zip(udp.values(), total.values()))
    (fine,) = io_graph(frames, tick=0.1)
    coarse = [sum(fine.values()[i:i + 10]) for i in range(0, len(fine.values()), 10)]
    assert coarse == total.values()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["0.001", "0.01", "0.1"]), st.sampled_from([2, 5, 10]))
def test_rebinning_property(seed, fine_tick, factor):
    frames = scenario_frames(seed)
    if not frames:
        return
    (fine,) = io_graph(frames, tick=fine_tick, unit="bytes")
    (coarse,) = io_graph(frames, tick=Fraction(fine_tick) * factor, unit="bytes")
    v = fine.values()
    assert [sum(v[i:i + factor]) for i in range(0, len(v), factor)] == coarse.values()


def test_flow_graph_handshake():
    g = flow_graph(HANDSHAKE)
    assert g.endpoints == ["192.168.100.15", "192.168.100.1"]
    assert [r.label for r in g.rows] == [
        "TCP 50000→80 [SYN] seq=0 win=65535",
        "TCP 80→50000 [SYN, ACK] seq=0 ack=1 win=65535",
        "TCP 50000→80 [ACK] seq=1 ack=1 win=65535",
    ]


GOLDEN_HANDSHAKE = """\
Time       192.168.100.15                192.168.100.1
 0.000000  |--TCP 50000→80 [SYN] s..---->|  TCP 50000→80 [SYN] seq=0 win=65535
 0.010000  |<----TCP 80→50000 [SYN, A..--|  TCP 80→50000 [SYN, ACK] seq=0 ack=1 win=65535
 0.020000  |--TCP 50000→80 [ACK] s..---->|  TCP 50000→80 [ACK] seq=1 ack=1 win=65535
"""


def test_flow_text_handshake_golden():
    assert render_flow_text(flow_graph(HANDSHAKE)) == GOLDEN_HANDSHAKE


def test_flow_text_short_labels_fit():
    g = FlowGraph(["a", "b"], [FlowRow(Fraction(1, 2), "b", "a", "hi", 1)])
    assert render_flow_text(g).splitlines()[1] == " 0.500000  |<" + "-" * 22 + "--hi--|"


def test_flow_text_empty_and_self():
    assert render_flow_text(FlowGraph()) == "Time\n"
    g = FlowGraph(["10.0.0.1"], [FlowRow(Fraction(0), "10.0.0.1", "10.0.0.1", "UDP 1→2 len=3", 1)])
    assert "[self] UDP 1→2 len=3" in render_flow_text(g)


def test_flow_graph_arp_uses_macs():
    g = flow_graph(frames_of("at 0 arp-request-reply Laptop -> Router\n"))
    assert g.endpoints == ["02:00:00:00:00:0f", "ff:ff:ff:ff:ff:ff", "02:00:00:00:00:01"]
    assert g.rows[0].label == "ARP who has 192.168.100.1? tell 192.168.100.15"
