import pytest
from hypothesis import given, settings, strategies as st

from capstats.dfilter import (ADDRESS_FIELDS, PORT_FIELDS, PROTOCOLS, And, Compare, Not, Or, ParseError, Proto,
                              format_filter, match_filter, parse_filter)

from helpers import frames_of

FRAMES = frames_of(
    "at 0 tcp-handshake Laptop:50000 -> Router:80\n"
    "at 0.1 tcp-transfer Laptop:50000 -> Router:80 sizes=10\n"
    "at 0.2 udp-exchange Laptop:5000 -> Router:6000 sizes=3\n"
    "at 0.3 dns-query-response Laptop -> Router name=x.test address=10.0.0.9\n"
    "at 0.4 arp-request-reply Laptop -> Router\n"
)
STACKS = [f.stack for f in FRAMES]
TCP, UDP, ARP = STACKS[0], STACKS[5], STACKS[-1]


def m(text, stack):
    return match_filter(parse_filter(text), stack)


def test_simple_matches():
    assert m("tcp", TCP)
    assert not m("udp", TCP)
    assert m("ip.addr==192.168.100.15", TCP)
    assert m("ip.addr == 192.168.100.1", TCP)
    assert not m("ip.src == 192.168.100.1", TCP)
    assert m("!(tcp || udp)", ARP)
    assert not m("ip", ARP)
    assert m("tcp.port == 80 && tcp.srcport == 50000", TCP)
    assert m("udp.dstport == 6000", UDP)
    assert m("DNS or arp", ARP)
    assert m("not tcp and udp", UDP)


def test_truth_table_on_small_set():
    for stack in STACKS:
        names = set(stack.names())
        is_tcp, is_udp = "tcp" in names, "udp" in names
        assert m("!(tcp || udp)", stack) == (not (is_tcp or is_udp))
        assert m("tcp && !udp", stack) == (is_tcp and not is_udp)


def test_precedence():
    assert parse_filter("tcp || udp && arp") == Or(Proto("tcp"), And(Proto("udp"), Proto("arp")))
    assert parse_filter("!tcp && udp") == And(Not(Proto("tcp")), Proto("udp"))


@pytest.mark.parametrize("text,offset", [
    ("tcp &&", 6),
    ("", 0),
    ("(tcp", 4),
    ("tcp udp", 4),
    ("foo", 0),
    ("ip.addr == 300.1.1.1", 11),
    ("tcp.port == 70000", 12),
    ("tcp.window == 3", 0),
    ("tcp )", 4),
    ("tcp $", 4),
])
def test_parse_errors(text, offset):
    with pytest.raises(ParseError) as info:
        parse_filter(text)
    assert info.value.offset == offset


# random small ASTs
atoms = st.one_of(
    st.sampled_from(sorted(PROTOCOLS)).map(Proto),
    st.builds(Compare, st.sampled_from(ADDRESS_FIELDS),
              st.sampled_from(["192.168.100.1", "192.168.100.15", "10.0.0.9"])),
    st.builds(Compare, st.sampled_from(PORT_FIELDS), st.sampled_from([53, 80, 5000, 6000, 50000])),
)
exprs = st.recursive(atoms, lambda sub: st.one_of(
    st.builds(Not, sub), st.builds(And, sub, sub), st.builds(Or, sub, sub)), max_leaves=8)


@settings(max_examples=200, deadline=None)
@given(exprs)
def test_print_parse_round_trip(expr):
    text = format_filter(expr)
    assert parse_filter(text) == expr
    assert parse_filter(format_filter(parse_filter(text))) == parse_filter(text)


@settings(max_examples=200, deadline=None)
@given(exprs, exprs)
def test_de_morgan(a, b):
    for stack in STACKS:
        assert match_filter(Not(And(a, b)), stack) == match_filter(Or(Not(a), Not(b)), stack)
        assert match_filter(Not(Or(a, b)), stack) == match_filter(And(Not(a), Not(b)), stack)
