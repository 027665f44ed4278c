"""A small display-filter language.

    expr  := or
    or    := and (("||" | "or") and)*
    and   := unary (("&&" | "and") unary)*
    unary := "!" unary | "not" unary | "(" expr ")" | atom | comparison

Atoms are protocol names (``tcp``, ``udp``, ``ip`` ...). Comparisons are
equality only: ``ip.addr == 192.168.100.1`` or ``tcp.port == 80``.
"""

from __future__ import annotations

import ipaddress
import re
from dataclasses import dataclass
from typing import Union

from .dissect import LayerStack

PROTOCOLS = {
    "eth": ("ethernet",),
    "arp": ("arp",),
    "ip": ("ipv4", "ipv6"),
    "ipv6": ("ipv6",),
    "icmp": ("icmp",),
    "tcp": ("tcp",),
    "udp": ("udp",),
    "dns": ("dns",),
}
ADDRESS_FIELDS = ("ip.addr", "ip.src", "ip.dst")
PORT_FIELDS = ("tcp.port", "udp.port", "tcp.srcport", "tcp.dstport", "udp.srcport", "udp.dstport")


class ParseError(ValueError):
    def __init__(self, offset: int, expected: str, text: str = ""):
        self.offset = offset
        self.expected = expected
        super().__init__(f"offset {offset}: expected {expected}" + (f" in {text!r}" if text else ""))


@dataclass(frozen=True)
class Proto:
    name: str


@dataclass(frozen=True)
class Compare:
    field: str
    value: Union[str, int]


@dataclass(frozen=True)
class Not:
    operand: "FilterExpr"


@dataclass(frozen=True)
class And:
    left: "FilterExpr"
    right: "FilterExpr"


@dataclass(frozen=True)
class Or:
    left: "FilterExpr"
    right: "FilterExpr"


FilterExpr = Union[Proto, Compare, Not, And, Or]

_TOKEN = re.compile(r"\s*(?:(?P<op>&&|\|\||==|!|\(|\))|(?P<word>[A-Za-z0-9_.:]+))")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ParseError(start, "an operator, parenthesis or name", text)
        kind = "op" if m.group("op") else "word"
        value = m.group(kind)
        tokens.append((kind, value, m.start(kind)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def offset(self) -> int:
        tok = self.peek()
        return tok[2] if tok else len(self.text)

    def accept(self, *values: str) -> bool:
        tok = self.peek()
        if tok and tok[1].lower() in values:
            self.i += 1
            return True
        return False

    def parse(self) -> FilterExpr:
        expr = self.parse_or()
        if self.peek() is not None:
            raise ParseError(self.offset(), "'&&', '||' or end of filter", self.text)
        return expr

    def parse_or(self) -> FilterExpr:
        left = self.parse_and()
        while self.accept("||", "or"):
            left = Or(left, self.parse_and())
        return left

    def parse_and(self) -> FilterExpr:
        left = self.parse_unary()
        while self.accept("&&", "and"):
            left = And(left, self.parse_unary())
        return left

    def parse_unary(self) -> FilterExpr:
        if self.accept("!", "not"):
            return Not(self.parse_unary())
        if self.accept("("):
            expr = self.parse_or()
            if not self.accept(")"):
                raise ParseError(self.offset(), "')'", self.text)
            return expr
        tok = self.peek()
        if tok is None or tok[0] != "word":
            raise ParseError(self.offset(), "a protocol, field comparison, '!' or '('", self.text)
        name = tok[1].lower()
        self.i += 1
        if name in PROTOCOLS:
            return Proto(name)
        if name in ADDRESS_FIELDS or name in PORT_FIELDS:
            if not self.accept("=="):
                raise ParseError(self.offset(), "'=='", self.text)
            val = self.peek()
            if val is None or val[0] != "word":
                raise ParseError(self.offset(), "a value", self.text)
            self.i += 1
            return Compare(name, self._value(name, val))
        raise ParseError(tok[2], "a protocol or field name", self.text)

    def _value(self, name: str, tok) -> Union[str, int]:
        if name in ADDRESS_FIELDS:
            try:
                return str(ipaddress.IPv4Address(tok[1]))
            except ValueError:
                raise ParseError(tok[2], "an IPv4 address", self.text) from None
        if not tok[1].isdigit() or int(tok[1]) > 0xFFFF:
            raise ParseError(tok[2], "a port number 0-65535", self.text)
        return int(tok[1])


def parse_filter(text: str) -> FilterExpr:
    return _Parser(text).parse()


def format_filter(expr: FilterExpr) -> str:
    """Canonical text form; ``parse_filter(format_filter(e)) == e``."""
    if isinstance(expr, Proto):
        return expr.name
    if isinstance(expr, Compare):
        return f"{expr.field} == {expr.value}"
    if isinstance(expr, Not):
        return f"!{format_filter(expr.operand)}"
    op = "&&" if isinstance(expr, And) else "||"
    return f"({format_filter(expr.left)} {op} {format_filter(expr.right)})"


def match_filter(expr: FilterExpr, stack: LayerStack) -> bool:
    if isinstance(expr, Proto):
        return any(name in stack for name in PROTOCOLS[expr.name])
    if isinstance(expr, Not):
        return not match_filter(expr.operand, stack)
    if isinstance(expr, And):
        return match_filter(expr.left, stack) and match_filter(expr.right, stack)
    if isinstance(expr, Or):
        return match_filter(expr.left, stack) or match_filter(expr.right, stack)
    proto, _, attr = expr.field.partition(".")
    if proto == "ip":
        layer = stack.get("ipv4")
        if layer is None:
            return False
        wanted = {"addr": ("src", "dst"), "src": ("src",), "dst": ("dst",)}[attr]
    else:
        layer = stack.get(proto)
        if layer is None:
            return False
        wanted = {"port": ("src_port", "dst_port"), "srcport": ("src_port",), "dstport": ("dst_port",)}[attr]
    return any(layer[key] == expr.value for key in wanted)
