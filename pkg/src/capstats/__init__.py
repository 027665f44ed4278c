"""Offline packet-capture statistics: capture summary, protocol hierarchy,
conversations, resolved names, I/O and flow graphs, TCP RTT/throughput/tcptrace
series and expert-info classification."""

from .capture_io import (CaptureHeader, CaptureReader, PacketRecord, open_capture, read_capture,
                         write_capture)
from .dfilter import format_filter, match_filter, parse_filter
from .dissect import Capture, Frame, LayerStack, dissect_all, dissect_packet, load_capture, protocol_path
from .fixture import Device, Event, FixtureScenario, generate_fixture
from .scenario import builtin_scenario, parse_scenario, scenario_load
from .stats import conversations, protocol_hierarchy, resolved_addresses, summarize
from .tcp_analysis import (analyze_capture, analyze_stream, assign_streams, expert_events, rtt_series,
                           tcptrace_series, throughput_series)
from .timeseries import TimeSeries, flow_graph, io_graph, render_flow_text

__version__ = "0.1.0"
