"""Per-scan interference reports and their fixed little-endian wire format.

Header (12 bytes)::

    magic u8 = 0xA5 | version u8 | node_id u16 | scan_seq u16 |
    scan_start_ms u32 | entry_count u8 | flags u8 (bit0 = overflow)

Entry (6 bytes)::

    channel:4 | tech:4 (one byte, channel in the high nibble) |
    burst_count u16 | mean_power i8 (dBm) | busy_time u16 (µs)

At most 15 entries, so a report never exceeds 102 bytes.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..radiometer import MAX_OBSERVATION_US, ScanSchedule
from ..scene import Technology

MAGIC = 0xA5
VERSION = 2
HEADER = struct.Struct("<BBHHIBB")
ENTRY = struct.Struct("<BHbH")
MAX_REPORT_BYTES = 102
CAPACITY = (MAX_REPORT_BYTES - HEADER.size) // ENTRY.size
FLAG_OVERFLOW = 0x01

N_CHANNELS = 16
POWER_RANGE_DBM = (-100, 0)


class ReportError(ValueError):
    """Base class for malformed or invalid reports."""


class BadMagicError(ReportError):
    pass


class BadVersionError(ReportError):
    pass


class BadLengthError(ReportError):
    pass


class FieldRangeError(ReportError):
    pass


@dataclass(frozen=True)
class ReportEntry:
    channel: int
    tech: Technology
    burst_count: int
    mean_power: int
    busy_time: int

    def validate(self, observation_time: int = MAX_OBSERVATION_US) -> None:
        if not 0 <= self.channel < N_CHANNELS:
            raise FieldRangeError(f"channel index {self.channel} outside 0..15")
        if int(self.tech) not in {int(t) for t in Technology}:
            raise FieldRangeError(f"unknown technology code {int(self.tech)}")
        if not 1 <= self.burst_count <= 0xFFFF:
            raise FieldRangeError(f"burst_count {self.burst_count} outside 1..65535")
        if not POWER_RANGE_DBM[0] <= self.mean_power <= POWER_RANGE_DBM[1]:
            raise FieldRangeError(f"mean_power {self.mean_power} dBm outside [-100, 0]")
        if not 0 <= self.busy_time <= observation_time:
            raise FieldRangeError(f"busy_time {self.busy_time} µs outside 0..{observation_time}")


@dataclass(frozen=True)
class InterferenceReport:
    node_id: int
    scan_seq: int
    scan_start: int  # µs, whole milliseconds on the wire
    entries: tuple[ReportEntry, ...] = ()
    overflow: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))

    def validate(self, observation_time: int = MAX_OBSERVATION_US) -> None:
        if not 0 <= self.node_id <= 0xFFFF:
            raise FieldRangeError(f"node_id {self.node_id} outside u16")
        if not 0 <= self.scan_seq <= 0xFFFF:
            raise FieldRangeError(f"scan_seq {self.scan_seq} outside u16")
        if self.scan_start % 1000 or not 0 <= self.scan_start // 1000 <= 0xFFFFFFFF:
            raise FieldRangeError(f"scan_start {self.scan_start} µs is not a u32 millisecond count")
        if len(self.entries) > CAPACITY:
            raise FieldRangeError(f"{len(self.entries)} entries exceed capacity {CAPACITY}")
        seen = set()
        for e in self.entries:
            e.validate(observation_time)
            key = (e.channel, int(e.tech))
            if key in seen:
                raise FieldRangeError(f"duplicate entry for channel {e.channel}, {e.tech.name}")
            seen.add(key)

    def to_dict(self) -> dict:
        return {
            "node_id": self.node_id,
            "scan_seq": self.scan_seq,
            "scan_start_us": self.scan_start,
            "overflow": self.overflow,
            "entries": [
                {"channel": e.channel, "tech": e.tech.name, "burst_count": e.burst_count,
                 "mean_power": e.mean_power, "busy_time": e.busy_time}
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InterferenceReport":
        entries = tuple(
            ReportEntry(int(e["channel"]), Technology.parse(e["tech"]), int(e["burst_count"]),
                        int(e["mean_power"]), int(e["busy_time"]))
            for e in d.get("entries", ())
        )
        return cls(int(d["node_id"]), int(d["scan_seq"]), int(d["scan_start_us"]), entries,
                   bool(d.get("overflow", False)))

    @property
    def encoded_size(self) -> int:
        return HEADER.size + ENTRY.size * len(self.entries)


def _burst_power_dbm(samples: np.ndarray) -> float:
    return 10.0 * math.log10(float(np.mean(10.0 ** (np.asarray(samples, dtype=float) / 10.0))))


def build_report(
    classified: Iterable[tuple[int, object, Technology]],
    schedule: ScanSchedule,
    node_id: int,
    scan_seq: int,
) -> InterferenceReport:
    """Aggregate one scan's classified bursts into a report.

    ``classified`` yields (channel_index, burst, tech) where ``burst`` has
    ``samples``, ``duration`` and ``classifiable``.  Per (channel, tech) the
    report carries the number of classifiable bursts, their linear-mean power
    and the summed busy time; unclassifiable tails add busy time only.  Above
    capacity the highest busy-time entries are kept and the overflow flag set.
    """
    power_sum: dict[tuple[int, Technology], float] = {}
    count: dict[tuple[int, Technology], int] = {}
    busy: dict[tuple[int, Technology], int] = {}
    for ci, b, tech in classified:
        key = (int(ci), Technology(tech))
        busy[key] = busy.get(key, 0) + int(round(b.duration))
        if b.classifiable:
            power_sum[key] = power_sum.get(key, 0.0) + 10.0 ** (_burst_power_dbm(b.samples) / 10.0)
            count[key] = count.get(key, 0) + 1
    entries = []
    for key, n in count.items():
        mean = 10.0 * math.log10(power_sum[key] / n)
        p = int(min(max(math.floor(mean + 0.5), POWER_RANGE_DBM[0]), POWER_RANGE_DBM[1]))
        entries.append(ReportEntry(key[0], key[1], n, p, min(busy[key], schedule.observation_time)))
    overflow = len(entries) > CAPACITY
    if overflow:
        entries.sort(key=lambda e: (-e.busy_time, e.channel, int(e.tech)))
        entries = entries[:CAPACITY]
    entries.sort(key=lambda e: (e.channel, int(e.tech)))
    return InterferenceReport(node_id, scan_seq, schedule.scan_start(scan_seq), tuple(entries), overflow)


def encode_report(report: InterferenceReport) -> bytes:
    report.validate()
    out = [HEADER.pack(MAGIC, VERSION, report.node_id, report.scan_seq, report.scan_start // 1000,
                       len(report.entries), FLAG_OVERFLOW if report.overflow else 0)]
    for e in report.entries:
        out.append(ENTRY.pack((e.channel << 4) | int(e.tech), e.burst_count, e.mean_power, e.busy_time))
    return b"".join(out)


def decode_report(data: bytes) -> InterferenceReport:
    data = bytes(data)
    if len(data) < HEADER.size:
        raise BadLengthError(f"{len(data)} bytes is shorter than the {HEADER.size}-byte header")
    magic, version, node_id, scan_seq, start_ms, n, flags = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic 0x{magic:02X}")
    if version != VERSION:
        raise BadVersionError(f"unsupported version {version}")
    if n > CAPACITY:
        raise FieldRangeError(f"entry_count {n} exceeds capacity {CAPACITY}")
    if len(data) != HEADER.size + n * ENTRY.size:
        raise BadLengthError(f"{len(data)} bytes does not match entry_count {n}")
    if flags & ~FLAG_OVERFLOW:
        raise FieldRangeError(f"reserved flag bits set: 0x{flags:02X}")
    entries = []
    for k in range(n):
        ct, count, power, busy = ENTRY.unpack_from(data, HEADER.size + k * ENTRY.size)
        ch, code = ct >> 4, ct & 0x0F
        if code >= len(Technology):
            raise FieldRangeError(f"unknown technology code {code}")
        entries.append(ReportEntry(ch, Technology(code), count, power, busy))
    report = InterferenceReport(node_id, scan_seq, start_ms * 1000, tuple(entries), bool(flags & FLAG_OVERFLOW))
    report.validate()
    return report


def reports_from_classified(
    grouped: dict[tuple[int, int], Sequence[tuple[int, object, Technology]]],
    schedule: ScanSchedule,
) -> list[InterferenceReport]:
    """One report per (node, scan) key, ordered by (node_id, scan_seq)."""
    return [build_report(grouped[key], schedule, key[0], key[1]) for key in sorted(grouped)]


def write_reports(reports: Iterable[InterferenceReport], path) -> int:
    """Length-prefixed stream: one u8 length byte, then the encoded report. Returns bytes written."""
    chunks = []
    for r in reports:
        b = encode_report(r)
        chunks.append(bytes([len(b)]) + b)
    data = b"".join(chunks)
    with open(path, "wb") as f:
        f.write(data)
    return len(data)


def read_reports(path) -> list[InterferenceReport]:
    with open(path, "rb") as f:
        data = f.read()
    out, pos = [], 0
    while pos < len(data):
        n = data[pos]
        if pos + 1 + n > len(data):
            raise BadLengthError(f"truncated report at byte {pos}")
        out.append(decode_report(data[pos + 1:pos + 1 + n]))
        pos += 1 + n
    return out
