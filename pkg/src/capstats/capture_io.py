"""Classic PCAP reading and writing.

Only the original libpcap format is handled (microsecond magic ``0xa1b2c3d4``
and nanosecond magic ``0xa1b23c4d``, either byte order). pcapng files are
detected and rejected with :class:`UnsupportedFormat`.
"""

from __future__ import annotations

import struct
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, Optional, Union

MAGIC_USEC = 0xA1B2C3D4
MAGIC_NSEC = 0xA1B23C4D
PCAPNG_MAGIC = 0x0A0D0D0A

LINKTYPE_ETHERNET = 1

GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16

NATIVE_BYTEORDER = "<" if sys.byteorder == "little" else ">"

PathLike = Union[str, Path]


class CaptureError(Exception):
    """Base class for capture file problems."""


class MalformedGlobalHeader(CaptureError):
    pass


class UnsupportedFormat(MalformedGlobalHeader):
    """A recognised capture format other than classic PCAP (e.g. pcapng)."""

    def __init__(self, fmt: str, path: Optional[PathLike] = None):
        self.format = fmt
        where = f"{path}: " if path is not None else ""
        super().__init__(f"{where}{fmt} files are not supported, only classic PCAP")


class TruncatedRecord(CaptureError):
    def __init__(self, index: int, offset: int, reason: str):
        self.index = index
        self.offset = offset
        self.reason = reason
        super().__init__(f"record {index} at byte offset {offset}: {reason}")


class InvalidRecord(CaptureError):
    pass


class IoFailure(CaptureError):
    pass


class UnsupportedLinkType(UserWarning):
    """Capture is readable, but frames will be dissected as opaque data."""


@dataclass(frozen=True)
class CaptureHeader:
    snaplen: int = 65535
    linktype: int = LINKTYPE_ETHERNET
    nanosecond: bool = False
    version_major: int = 2
    version_minor: int = 4
    thiszone: int = 0
    sigfigs: int = 0
    byteorder: str = NATIVE_BYTEORDER

    @property
    def magic(self) -> int:
        return MAGIC_NSEC if self.nanosecond else MAGIC_USEC

    @property
    def version(self) -> tuple[int, int]:
        return (self.version_major, self.version_minor)

    @property
    def ticks_per_second(self) -> int:
        return 1_000_000_000 if self.nanosecond else 1_000_000


@dataclass(frozen=True)
class PacketRecord:
    """One captured frame. ``ts_ns`` is the absolute timestamp in nanoseconds."""

    index: int
    ts_ns: int
    captured_len: int
    original_len: int
    data: bytes = field(repr=False)

    @property
    def ts_sec(self) -> int:
        return self.ts_ns // 1_000_000_000

    @property
    def timestamp(self) -> float:
        return self.ts_ns / 1e9


def make_record(index: int, ts_ns: int, data: bytes, original_len: Optional[int] = None) -> PacketRecord:
    data = bytes(data)
    return PacketRecord(
        index=index,
        ts_ns=ts_ns,
        captured_len=len(data),
        original_len=len(data) if original_len is None else original_len,
        data=data,
    )


def _detect_header(raw: bytes, path: Optional[PathLike]) -> CaptureHeader:
    if len(raw) < GLOBAL_HEADER_LEN:
        if len(raw) >= 4 and struct.unpack("<I", raw[:4])[0] == PCAPNG_MAGIC:
            raise UnsupportedFormat("pcapng", path)
        raise MalformedGlobalHeader(
            f"global header needs {GLOBAL_HEADER_LEN} bytes, file has {len(raw)}"
        )
    if struct.unpack("<I", raw[:4])[0] == PCAPNG_MAGIC:
        raise UnsupportedFormat("pcapng", path)
    for order in ("<", ">"):
        (magic,) = struct.unpack(order + "I", raw[:4])
        if magic in (MAGIC_USEC, MAGIC_NSEC):
            break
    else:
        raise MalformedGlobalHeader(f"unknown magic number 0x{raw[:4].hex()}")
    _, major, minor, thiszone, sigfigs, snaplen, linktype = struct.unpack(
        order + "IHHiIII", raw[:GLOBAL_HEADER_LEN]
    )
    return CaptureHeader(
        snaplen=snaplen,
        linktype=linktype,
        nanosecond=magic == MAGIC_NSEC,
        version_major=major,
        version_minor=minor,
        thiszone=thiszone,
        sigfigs=sigfigs,
        byteorder=order,
    )


class CaptureReader:
    """Iterates the records of one open capture file.

    A truncated trailing record ends iteration early; the problem is kept in
    :attr:`error` instead of being raised so that the complete records
    before it remain usable.
    """

    def __init__(self, fh: BinaryIO, path: Optional[PathLike] = None, *, owns_file: bool = True):
        self._fh = fh
        self._owns = owns_file
        self.path = path
        self.header = _detect_header(fh.read(GLOBAL_HEADER_LEN), path)
        self.error: Optional[TruncatedRecord] = None
        self._rec = struct.Struct(self.header.byteorder + "IIII")
        self._offset = GLOBAL_HEADER_LEN
        self._index = 0
        self._done = False
        if self.header.linktype != LINKTYPE_ETHERNET:
            warnings.warn(
                f"linktype {self.header.linktype} is not Ethernet; frames are opaque data",
                UnsupportedLinkType,
                stacklevel=2,
            )

    def __iter__(self) -> Iterator[PacketRecord]:
        return self

    def __next__(self) -> PacketRecord:
        if self._done:
            raise StopIteration
        raw = self._fh.read(RECORD_HEADER_LEN)
        if not raw:
            self._finish()
            raise StopIteration
        index = self._index + 1
        if len(raw) < RECORD_HEADER_LEN:
            self._truncated(index, f"record header has {len(raw)} of {RECORD_HEADER_LEN} bytes")
        ts_sec, ts_frac, incl_len, orig_len = self._rec.unpack(raw)
        data = self._fh.read(incl_len)
        if len(data) < incl_len:
            self._truncated(index, f"record body has {len(data)} of {incl_len} bytes")
        scale = 1 if self.header.nanosecond else 1000
        self._index = index
        self._offset += RECORD_HEADER_LEN + incl_len
        return PacketRecord(
            index=index,
            ts_ns=ts_sec * 1_000_000_000 + ts_frac * scale,
            captured_len=incl_len,
            original_len=orig_len,
            data=data,
        )

    def _truncated(self, index: int, reason: str) -> None:
        self.error = TruncatedRecord(index, self._offset, reason)
        self._finish()
        raise StopIteration

    def _finish(self) -> None:
        self._done = True
        self.close()

    def close(self) -> None:
        if self._owns and not self._fh.closed:
            self._fh.close()

    def __enter__(self) -> "CaptureReader":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def open_capture(path: PathLike) -> CaptureReader:
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise IoFailure(f"{path}: {exc.strerror or exc}") from exc
    try:
        return CaptureReader(fh, path)
    except Exception:
        fh.close()
        raise


def read_capture(path: PathLike) -> tuple[CaptureHeader, list[PacketRecord], Optional[TruncatedRecord]]:
    with open_capture(path) as reader:
        records = list(reader)
        return reader.header, records, reader.error


def validate_record(header: CaptureHeader, rec: PacketRecord) -> None:
    if rec.captured_len != len(rec.data):
        raise InvalidRecord(f"record {rec.index}: captured_len {rec.captured_len} != data length {len(rec.data)}")
    if rec.captured_len > rec.original_len:
        raise InvalidRecord(f"record {rec.index}: captured_len exceeds original_len")
    if rec.captured_len > header.snaplen:
        raise InvalidRecord(f"record {rec.index}: captured_len {rec.captured_len} exceeds snaplen {header.snaplen}")
    if rec.ts_ns < 0 or rec.ts_ns // 1_000_000_000 > 0xFFFFFFFF:
        raise InvalidRecord(f"record {rec.index}: timestamp out of range")
    if rec.original_len > 0xFFFFFFFF:
        raise InvalidRecord(f"record {rec.index}: original_len out of range")
    if not header.nanosecond and rec.ts_ns % 1000:
        raise InvalidRecord(f"record {rec.index}: timestamp has sub-microsecond part in a microsecond capture")


def encode_capture(header: CaptureHeader, records: Iterable[PacketRecord]) -> bytes:
    if header.version != (2, 4):
        raise InvalidRecord(f"only version 2.4 is written, got {header.version}")
    bo = header.byteorder
    out = [
        struct.pack(
            bo + "IHHiIII",
            header.magic,
            header.version_major,
            header.version_minor,
            header.thiszone,
            header.sigfigs,
            header.snaplen,
            header.linktype,
        )
    ]
    div = 1 if header.nanosecond else 1000
    for rec in records:
        validate_record(header, rec)
        sec, frac = divmod(rec.ts_ns, 1_000_000_000)
        out.append(struct.pack(bo + "IIII", sec, frac // div, rec.captured_len, rec.original_len))
        out.append(rec.data)
    return b"".join(out)


def write_capture(path: PathLike, header: CaptureHeader, records: Iterable[PacketRecord]) -> None:
    payload = encode_capture(header, records)
    try:
        with open(path, "wb") as fh:
            fh.write(payload)
    except OSError as exc:
        raise IoFailure(f"{path}: {exc.strerror or exc}") from exc
