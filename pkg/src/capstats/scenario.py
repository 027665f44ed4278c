"""Line-oriented scenario files for the fixture generator.

Grammar (one stanza per line, ``#`` starts a comment)::

    strict on|off
    device <label> <ip-address> [mac=<aa:bb:cc:dd:ee:ff>]
    at <seconds> <event-kind> <src>[:<port>] -> <dst>[:<port>] [key=value ...]

Labels containing spaces are written in double quotes (``"Laptop 1":50000``).
List-valued options are comma separated (``sizes=100,200,300``).
"""

from __future__ import annotations

import shlex
from decimal import Decimal, InvalidOperation
from importlib import resources
from pathlib import Path
from typing import Union

from .fixture import EVENT_KINDS, Device, Event, FixtureScenario, seconds_to_ns

LIST_PARAMS = {"sizes", "ack_delays"}
BUILTIN = ("home", "home-renumbered")


class ScenarioParseError(ValueError):
    def __init__(self, line: int, message: str):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}")


def _endpoint(text: str, lineno: int) -> tuple[str, int]:
    label, sep, port = text.rpartition(":")
    if not sep:
        return text, 0
    try:
        value = int(port)
    except ValueError:
        raise ScenarioParseError(lineno, f"bad port in {text!r}") from None
    if not 0 <= value <= 0xFFFF:
        raise ScenarioParseError(lineno, f"port {value} out of range")
    return label, value


def parse_scenario(text: str) -> FixtureScenario:
    scenario = FixtureScenario()
    labels: set[str] = set()
    last_time = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        try:
            words = shlex.split(raw, comments=True)
        except ValueError as exc:
            raise ScenarioParseError(lineno, str(exc)) from None
        if not words:
            continue
        head = words[0].lower()
        if head == "strict":
            if len(words) != 2 or words[1].lower() not in ("on", "off"):
                raise ScenarioParseError(lineno, "expected 'strict on' or 'strict off'")
            scenario.strict = words[1].lower() == "on"
        elif head == "device":
            if len(words) not in (3, 4):
                raise ScenarioParseError(lineno, "expected 'device <label> <ip> [mac=..]'")
            label, ip = words[1], words[2]
            if label in labels:
                raise ScenarioParseError(lineno, f"device {label!r} declared twice")
            mac = ""
            if len(words) == 4:
                if not words[3].startswith("mac="):
                    raise ScenarioParseError(lineno, f"unexpected {words[3]!r}")
                mac = words[3][4:]
            try:
                scenario.devices.append(Device(label, ip, mac))
            except ValueError as exc:
                raise ScenarioParseError(lineno, str(exc)) from None
            labels.add(label)
        elif head == "at":
            if len(words) < 6 or words[4] != "->":
                raise ScenarioParseError(lineno, "expected 'at <seconds> <kind> <src> -> <dst> [k=v ...]'")
            try:
                if Decimal(words[1]) < 0:
                    raise InvalidOperation
                time_ns = seconds_to_ns(words[1])
            except InvalidOperation:
                raise ScenarioParseError(lineno, f"bad time {words[1]!r}") from None
            if last_time is not None and time_ns < last_time:
                raise ScenarioParseError(lineno, "event times must be nondecreasing")
            last_time = time_ns
            kind = words[2].lower()
            if kind not in EVENT_KINDS:
                raise ScenarioParseError(lineno, f"unknown event kind {kind!r}")
            src, sport = _endpoint(words[3], lineno)
            dst, dport = _endpoint(words[5], lineno)
            for label in (src, dst):
                if label not in labels:
                    raise ScenarioParseError(lineno, f"undeclared device {label!r}")
            params = {}
            for word in words[6:]:
                key, eq, value = word.partition("=")
                if not eq:
                    raise ScenarioParseError(lineno, f"expected key=value, got {word!r}")
                params[key] = value.split(",") if key in LIST_PARAMS else value
            scenario.events.append(Event(time_ns, kind, src, dst, sport, dport, params))
        else:
            raise ScenarioParseError(lineno, f"unknown stanza {words[0]!r}")
    return scenario


def scenario_load(path: Union[str, Path]) -> FixtureScenario:
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


def builtin_scenario(name: str) -> FixtureScenario:
    """Scenarios shipped with the package.

    ``home`` is a seven-device home network in which the second laptop and
    the game console share 192.168.100.47; ``home-renumbered`` moves the
    console to 192.168.100.48 so every device has its own address.
    """
    if name not in BUILTIN:
        raise KeyError(name)
    text = resources.files("capstats").joinpath("scenarios", f"{name}.scn").read_text(encoding="utf-8")
    return parse_scenario(text)
