import csv
import io
import json

import pytest

from capstats.cli import run
from capstats.render import check_wellformed

SUBCOMMANDS = [
    ["summary"], ["hierarchy"], ["conv"], ["conv", "--layer", "tcp"], ["conv", "--layer", "eth"],
    ["conv", "--layer", "udp"], ["resolve"], ["iograph"], ["iograph", "--tick", "0.1", "--unit", "bits"],
    ["flow"], ["rtt", "--dir", "ba"], ["throughput", "--tick", "0.5"], ["tcptrace"], ["expert"],
]


@pytest.fixture(scope="module")
def pcap(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "home.pcap"
    assert run(["fixture", "--builtin", "home", "--out", str(path)]) == 0
    return path


def output(capsys, argv):
    code = run(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.mark.parametrize("argv", SUBCOMMANDS, ids=" ".join)
def test_csv_output_round_trips(capsys, pcap, argv):
    code, out, _ = output(capsys, argv + [str(pcap), "--format", "csv"])
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows and all(len(r) == len(rows[0]) for r in rows)


@pytest.mark.parametrize("argv", SUBCOMMANDS, ids=" ".join)
def test_default_format_is_deterministic(capsys, pcap, argv):
    first = output(capsys, argv + [str(pcap)])
    second = output(capsys, argv + [str(pcap)])
    assert first[0] == 0 and first == second


@pytest.mark.parametrize("cmd", ["iograph", "rtt", "throughput", "tcptrace"])
def test_svg_wellformed(capsys, pcap, cmd):
    code, out, _ = output(capsys, [cmd, str(pcap), "--format", "svg"])
    assert code == 0 and check_wellformed(out.encode())


def test_json_expert(capsys, pcap):
    code, out, _ = output(capsys, ["expert", str(pcap), "--format", "json"])
    doc = json.loads(out)
    assert set(doc["counts"]) == {"error", "warning", "note", "chat"}


def test_filter_applies(capsys, pcap):
    _, out, _ = output(capsys, ["hierarchy", str(pcap), "--filter", "arp", "--format", "csv"])
    rows = list(csv.DictReader(io.StringIO(out)))
    assert {r["protocol"] for r in rows} == {"frame", "ethernet", "arp"}


def test_iograph_one_series_per_filter(capsys, pcap):
    _, out, _ = output(capsys, ["iograph", str(pcap), "--filter", "tcp", "--filter", "udp", "--format", "csv"])
    rows = list(csv.DictReader(io.StringIO(out)))
    assert {r["series"] for r in rows} == {"tcp", "udp"}


def test_out_file(tmp_path, pcap):
    target = tmp_path / "h.csv"
    assert run(["hierarchy", str(pcap), "--format", "csv", "--out", str(target)]) == 0
    assert target.read_text().startswith("depth,protocol")


def test_missing_file(capsys, tmp_path):
    code, out, err = output(capsys, ["summary", str(tmp_path / "nope.pcap")])
    assert code == 1 and "no such file" in err and out == ""


def test_bad_capture(capsys, tmp_path):
    bad = tmp_path / "bad.pcap"
    bad.write_bytes(b"not a pcap at all, really not")
    code, _, err = output(capsys, ["summary", str(bad)])
    assert code == 1 and "magic" in err


def test_unknown_stream(capsys, pcap):
    code, _, err = output(capsys, ["rtt", str(pcap), "--stream", "99"])
    assert code == 1 and "stream 99" in err


@pytest.mark.parametrize("argv", [
    ["iograph", "{pcap}", "--tick", "20"],
    ["iograph", "{pcap}", "--tick", "0.0001"],
    ["iograph", "{pcap}", "--tick", "abc"],
    ["summary", "{pcap}", "--filter", "tcp &&"],
    ["summary", "{pcap}", "--format", "svg"],
    ["frobnicate", "{pcap}"],
])
def test_usage_errors_exit_2(capsys, pcap, argv):
    with pytest.raises(SystemExit) as info:
        run([a.format(pcap=pcap) for a in argv])
    assert info.value.code == 2


def test_truncated_capture_warns_and_continues(capsys, pcap, tmp_path):
    cut = tmp_path / "cut.pcap"
    cut.write_bytes(pcap.read_bytes()[:-10])
    code, out, err = output(capsys, ["summary", str(cut)])
    assert code == 0 and "warning" in err and "packet_count" in out


def test_fixture_from_scenario_file(tmp_path):
    scn = tmp_path / "s.scn"
    scn.write_text("device a 10.0.0.1\ndevice b 10.0.0.2\nat 0 tcp-handshake a:1 -> b:2\n")
    out = tmp_path / "s.pcap"
    assert run(["fixture", "--scenario", str(scn), "--out", str(out), "--nanosecond"]) == 0
    assert out.read_bytes()[:4] == bytes.fromhex("4d3cb2a1")


def test_fixture_scenario_error(capsys, tmp_path):
    scn = tmp_path / "s.scn"
    scn.write_text("device a 10.0.0.1\nat 0 arp-request-reply a -> z\n")
    code, _, err = output(capsys, ["fixture", "--scenario", str(scn), "--out", str(tmp_path / "x.pcap")])
    assert code == 1 and "line 2" in err
