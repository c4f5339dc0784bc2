"""Network-manager aggregation of reports into (time, channel, tech, node) tensors."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from ..scene import Area, Position, Technology
from .report import N_CHANNELS, InterferenceReport

N_TECH = len(Technology)
# Linear power is accumulated as integers in units of 1e-13 mW, so sums are
# exact and independent of report order. -100 dBm is 1000 units.
POWER_UNIT_MW = 1e-13
_POWER_UNITS = {p: int(round(10.0 ** (p / 10.0) / POWER_UNIT_MW)) for p in range(-100, 1)}
_INT64_MAX = np.iinfo(np.int64).max


class UnknownNodeError(KeyError):
    pass


@dataclass
class NodeRegistry:
    """Known sensing-node positions, indexed densely in node-id order."""

    positions: dict[int, Position]
    area: Area | None = None

    def __post_init__(self) -> None:
        self.positions = {int(k): v for k, v in sorted(self.positions.items())}
        coords = [(p.x, p.y) for p in self.positions.values()]
        if len(set(coords)) != len(coords):
            raise ValueError("node positions must be distinct")
        if self.area is not None:
            for nid, p in self.positions.items():
                if not self.area.contains(p):
                    raise ValueError(f"node {nid} at ({p.x}, {p.y}) lies outside the area")
        self._index = {nid: i for i, nid in enumerate(self.positions)}

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, Position]], area: Area | None = None) -> "NodeRegistry":
        return cls(dict(pairs), area)

    def __len__(self) -> int:
        return len(self.positions)

    def __contains__(self, node_id: int) -> bool:
        return node_id in self._index

    @property
    def node_ids(self) -> list[int]:
        return list(self.positions)

    def index(self, node_id: int) -> int:
        try:
            return self._index[int(node_id)]
        except KeyError:
            raise UnknownNodeError(f"node {node_id} is not registered") from None

    def xy(self) -> np.ndarray:
        return np.array([(p.x, p.y) for p in self.positions.values()], dtype=float)


@dataclass
class InterferenceTensor:
    """Power and busy-time accumulators over (bin, channel, tech, node).

    Busy fraction is normalized per channel observation window: summed busy
    time over ``observation_time`` times the number of scans per bin.
    """

    registry: NodeRegistry
    bin_us: int = 5_000_000
    scan_period_us: int = 5_000_000
    observation_time: int = 50_000
    n_bins: int = 0
    power_units: np.ndarray = field(default=None, repr=False)
    count: np.ndarray = field(default=None, repr=False)
    busy_us: np.ndarray = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.bin_us <= 0 or self.bin_us % self.scan_period_us:
            raise ValueError("bin width must be a positive multiple of the scan period")
        shape = (self.n_bins, N_CHANNELS, N_TECH, len(self.registry))
        if self.power_units is None:
            self.power_units = np.zeros(shape, dtype=np.int64)
            self.count = np.zeros(shape, dtype=np.int64)
            self.busy_us = np.zeros(shape, dtype=np.int64)

    @property
    def scans_per_bin(self) -> int:
        return self.bin_us // self.scan_period_us

    @property
    def shape(self) -> tuple[int, ...]:
        return self.count.shape

    def _grow(self, n_bins: int) -> None:
        if n_bins <= self.n_bins:
            return
        pad = ((0, n_bins - self.n_bins), (0, 0), (0, 0), (0, 0))
        self.power_units = np.pad(self.power_units, pad)
        self.count = np.pad(self.count, pad)
        self.busy_us = np.pad(self.busy_us, pad)
        self.n_bins = n_bins

    def accumulate(self, report: InterferenceReport) -> "InterferenceTensor":
        """Add one report in place; returns self for chaining."""
        node = self.registry.index(report.node_id)
        if report.scan_start < 0:
            raise ValueError("scan_start must be >= 0")
        if not report.entries:
            return self
        b = report.scan_start // self.bin_us
        self._grow(b + 1)
        for e in report.entries:
            if e.busy_time > self.observation_time:
                raise ValueError(f"busy_time {e.busy_time} exceeds the observation window")
            cell = (b, e.channel, int(e.tech), node)
            add = e.burst_count * _POWER_UNITS[e.mean_power]
            if int(self.power_units[cell]) > _INT64_MAX - add:
                raise OverflowError("power accumulator overflow")
            self.power_units[cell] += add
            self.count[cell] += e.burst_count
            self.busy_us[cell] += e.busy_time
        return self

    def accumulate_all(self, reports: Iterable[InterferenceReport]) -> "InterferenceTensor":
        for r in reports:
            self.accumulate(r)
        return self

    def rebin(self, bin_us: int) -> "InterferenceTensor":
        """Coarser copy; ``bin_us`` must be a multiple of the current width."""
        if bin_us % self.bin_us:
            raise ValueError(f"new bin width {bin_us} µs is not a multiple of {self.bin_us} µs")
        k = bin_us // self.bin_us
        n = -(-self.n_bins // k)
        out = InterferenceTensor(self.registry, bin_us, self.scan_period_us, self.observation_time, n)
        for name in ("power_units", "count", "busy_us"):
            src = getattr(self, name)
            pad = np.pad(src, ((0, n * k - self.n_bins), (0, 0), (0, 0), (0, 0)))
            setattr(out, name, pad.reshape(n, k, *src.shape[1:]).sum(axis=1))
        return out

    def power_dbm(self) -> np.ndarray:
        """Mean burst power per cell in dBm; NaN where no bursts were counted."""
        out = np.full(self.count.shape, np.nan)
        has = self.count > 0
        out[has] = 10.0 * np.log10(self.power_units[has] * POWER_UNIT_MW / self.count[has])
        return out

    def busy_fraction(self) -> np.ndarray:
        return self.busy_us / float(self.observation_time * self.scans_per_bin)

    def linear_power_sum(self) -> np.ndarray:
        """Summed burst power in mW (count-weighted), for further averaging."""
        return self.power_units * POWER_UNIT_MW

    def to_csv(self, path: str | Path | None = None) -> str:
        """Rows bin,channel,tech,node,power_dbm,busy_frac for every active cell."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("bin", "channel", "tech", "node", "power_dbm", "busy_frac"))
        power = self.power_dbm()
        busy = self.busy_fraction()
        nodes = self.registry.node_ids
        for b, c, t, n in zip(*np.nonzero((self.count > 0) | (self.busy_us > 0))):
            p = power[b, c, t, n]
            w.writerow((b, c, Technology(t).name, nodes[n], "" if math.isnan(p) else f"{p:.3f}",
                        f"{busy[b, c, t, n]:.6f}"))
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def bin_of(self, t_us: int) -> int:
        return int(t_us) // self.bin_us


def build_tensor(reports: Iterable[InterferenceReport], registry: NodeRegistry, *, bin_us: int = 5_000_000,
                 scan_period_us: int = 5_000_000, observation_time: int = 50_000,
                 horizon_us: int | None = None) -> InterferenceTensor:
    """Fresh tensor sized to ``horizon_us`` (when given) with ``reports`` accumulated."""
    n = 0 if horizon_us is None else -(-int(horizon_us) // bin_us)
    t = InterferenceTensor(registry, bin_us, scan_period_us, observation_time, n)
    return t.accumulate_all(reports)

