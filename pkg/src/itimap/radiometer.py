"""RSSI sampling on a constrained IEEE 802.15.4-class radio."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .scene import BurstLedger, PathLoss, Position, Scenario, link_shadowing_db

# IEEE 802.15.4 channels 11..26
CHANNELS_MHZ = tuple(2405.0 + 5.0 * k for k in range(16))

MIN_OBSERVATION_US = 30_000
MAX_OBSERVATION_US = 50_000
MIN_DWELL_US = 600_000
MAX_DWELL_US = 800_000

ROLLOFF_WIDTH_MHZ = 3.0
ROLLOFF_FLOOR_DB = 40.0

DEFAULT_RETUNE_DWELL_US = 64


@dataclass(frozen=True)
class DeviceModel:
    node_id: int
    position: Position
    calibration_offset: float = 0.0
    dynamic_range: tuple[float, float] = (-100.0, 0.0)
    freq_range: tuple[float, float] = (2400.0, 2485.0)
    freq_granularity: float = 1.0
    sampling_rate: float = 20_000.0
    rbw: float = 2.0
    sample_width: int = 8
    noise_floor: float = -98.0
    rssi_noise_db: float = 0.0

    def __post_init__(self) -> None:
        if abs(self.calibration_offset) > 6.0:
            raise ValueError("calibration_offset must lie within ±6 dB")
        if not 10_000 <= self.sampling_rate <= 30_000:
            raise ValueError("sampling_rate must lie within [10, 30] kS/s")
        if not 1.5 <= self.rbw <= 4.0:
            raise ValueError("rbw must lie within [1.5, 4] MHz")
        lo, hi = self.dynamic_range
        if lo >= hi:
            raise ValueError("dynamic_range must be increasing")
        if (hi - lo + 1) > 2**self.sample_width:
            raise ValueError("dynamic range not representable in sample_width bits at 1 dB")
        if self.rssi_noise_db < 0:
            raise ValueError("rssi_noise_db must be >= 0")

    @property
    def sample_period(self) -> float:
        return 1e6 / self.sampling_rate

    def to_dict(self) -> dict:
        d = asdict(self)
        d["position"] = {"x": self.position.x, "y": self.position.y}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceModel":
        d = dict(d)
        pos = d.pop("position")
        d["position"] = Position(float(pos["x"]), float(pos["y"]))
        for key in ("dynamic_range", "freq_range"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "DeviceModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def make_device(node_id: int, position: Position, seed: int, **overrides) -> DeviceModel:
    """Create a device whose calibration offset is drawn once from ``seed``."""
    if "calibration_offset" not in overrides:
        rng = np.random.default_rng([seed, 104729, node_id])
        overrides["calibration_offset"] = float(rng.uniform(-6.0, 6.0))
    return DeviceModel(node_id=node_id, position=position, **overrides)


@dataclass(frozen=True)
class ScanSchedule:
    channels: tuple[float, ...]
    observation_time: int
    period: int

    @property
    def dwell(self) -> int:
        return len(self.channels) * self.observation_time

    @property
    def duty_cycle(self) -> float:
        return self.dwell / self.period

    def window(self, scan_seq: int, channel_index: int) -> tuple[int, int]:
        t0 = scan_seq * self.period + channel_index * self.observation_time
        return t0, t0 + self.observation_time

    def scan_start(self, scan_seq: int) -> int:
        return scan_seq * self.period

    def n_scans(self, horizon: int) -> int:
        """Number of complete scans that fit into ``horizon``."""
        if horizon < self.dwell:
            return 0
        return (horizon - self.dwell) // self.period + 1


def build_schedule(observation_time: int = 50_000, period: int = 5_000_000) -> ScanSchedule:
    """16-channel sequential scan; a dwell below 600 ms only warns."""
    if not MIN_OBSERVATION_US <= observation_time <= MAX_OBSERVATION_US:
        raise ValueError(
            f"observation_time {observation_time} µs outside [{MIN_OBSERVATION_US}, {MAX_OBSERVATION_US}]"
        )
    sched = ScanSchedule(CHANNELS_MHZ, int(observation_time), int(period))
    if period < sched.dwell:
        raise ValueError(f"period {period} µs shorter than dwell {sched.dwell} µs")
    if sched.dwell < MIN_DWELL_US:
        warnings.warn(
            f"dwell {sched.dwell} µs is below the usual {MIN_DWELL_US} µs full-scan time",
            stacklevel=2,
        )
    return sched


def filter_attenuation(delta_f, rbw: float):
    """Channel-filter attenuation in dB at ``delta_f`` MHz from the burst band edge.

    Flat up to rbw/2, then linear in dB reaching 40 dB at rbw/2 + 3 MHz.
    Accepts scalars or arrays.
    """
    d = np.asarray(delta_f, dtype=float)
    if np.any(d < 0):
        raise ValueError("delta_f must be non-negative")
    att = np.clip((d - rbw / 2.0) * (ROLLOFF_FLOOR_DB / ROLLOFF_WIDTH_MHZ), 0.0, ROLLOFF_FLOOR_DB)
    return float(att) if att.ndim == 0 else att


def band_distance(freq: float, center, bandwidth):
    """Distance from ``freq`` to the nearest edge of [center ± bw/2], 0 inside."""
    return np.maximum(np.abs(freq - np.asarray(center)) - np.asarray(bandwidth) / 2.0, 0.0)


def quantize(x):
    """Round to the nearest whole dB, halves upward."""
    return np.floor(np.asarray(x, dtype=float) + 0.5)


def link_powers(scenario: Scenario, device: DeviceModel) -> dict[int, float]:
    """Received power (dBm) at ``device`` for every emitter in ``scenario``."""
    out = {}
    pl: PathLoss = scenario.pathloss
    for e in scenario.emitters:
        rx = e.tx_power - pl.loss_db(device.position.distance(e.position))
        out[e.id] = rx + link_shadowing_db(pl, scenario.seed, e.id, device.node_id)
    return out


def _rx_array(ledger: BurstLedger, idx: np.ndarray, links: Mapping[int, float] | Scenario, device: DeviceModel) -> np.ndarray:
    if isinstance(links, Scenario):
        links = link_powers(links, device)
    eids = ledger.emitter_id[idx]
    return np.array([links[int(e)] for e in eids], dtype=float)


@dataclass
class RssiTrace:
    node_id: int
    channel: float
    t0: int
    sample_period: float
    samples: np.ndarray

    def times(self) -> np.ndarray:
        return self.t0 + self.sample_period * np.arange(len(self.samples))

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class SweepSample:
    offset: float
    rssi: int
    t: float
    complete: bool = True


def _finish(lin: np.ndarray, device: DeviceModel, rng: np.random.Generator | None) -> np.ndarray:
    db = device.calibration_offset + 10.0 * np.log10(lin)
    if device.rssi_noise_db > 0 and rng is not None:
        db = db + rng.normal(0.0, device.rssi_noise_db, size=db.shape)
    lo, hi = device.dynamic_range
    return quantize(np.clip(db, lo, hi)).astype(np.int16)


def _check_freq(device: DeviceModel, freq: float) -> None:
    lo, hi = device.freq_range
    if not lo <= freq <= hi:
        raise ValueError(f"frequency {freq} MHz outside device range {device.freq_range}")


def sample_trace(
    ledger: BurstLedger,
    device: DeviceModel,
    channel: float,
    window: tuple[int, int],
    seed: int = 0,
    *,
    links: Mapping[int, float] | Scenario,
) -> RssiTrace:
    """Poll the RSSI register across ``window`` while tuned to ``channel``.

    ``links`` maps emitter id to received power at this device (or is the
    scenario, from which the map is computed).
    """
    _check_freq(device, channel)
    w0, w1 = window
    if w0 < 0 or w1 > ledger.horizon or w1 <= w0:
        raise ValueError(f"window {window} outside ledger horizon {ledger.horizon}")
    T = device.sample_period
    n = int(math.floor((w1 - w0) / T + 1e-9))
    lin = np.full(n, 10.0 ** (device.noise_floor / 10.0))
    idx = ledger.indices_overlapping(w0, w1)
    if len(idx):
        rx = _rx_array(ledger, idx, links, device)
        att = filter_attenuation(band_distance(channel, ledger.center[idx], ledger.bandwidth[idx]), device.rbw)
        p = 10.0 ** ((rx - att) / 10.0)
        k0 = np.clip(np.ceil((ledger.t_start[idx] - w0) / T - 1e-9), 0, n).astype(np.int64)
        k1 = np.clip(np.ceil((ledger.t_end[idx] - w0) / T - 1e-9), 0, n).astype(np.int64)
        for a, b, pw in zip(k0.tolist(), k1.tolist(), p.tolist()):
            if b > a:
                lin[a:b] += pw
    rng = np.random.default_rng([seed, device.node_id, int(channel), w0]) if device.rssi_noise_db > 0 else None
    return RssiTrace(device.node_id, float(channel), int(w0), T, _finish(lin, device, rng))


def powers_at(
    ledger: BurstLedger,
    device: DeviceModel,
    freqs: Sequence[float],
    times: Sequence[float],
    links: Mapping[int, float] | Scenario,
) -> np.ndarray:
    """Unquantized linear power (mW) at each (frequency, instant) pair."""
    freqs = np.asarray(freqs, dtype=float)
    times = np.asarray(times, dtype=float)
    lin = np.full(len(times), 10.0 ** (device.noise_floor / 10.0))
    if not len(times):
        return lin
    idx = ledger.indices_overlapping(int(math.floor(times.min())), int(math.floor(times.max())) + 1)
    if len(idx):
        rx = _rx_array(ledger, idx, links, device)
        ts = ledger.t_start[idx][None, :]
        te = ledger.t_end[idx][None, :]
        active = (ts <= times[:, None]) & (te > times[:, None])
        att = filter_attenuation(
            band_distance(freqs[:, None], ledger.center[idx][None, :], ledger.bandwidth[idx][None, :]),
            device.rbw,
        )
        lin += np.sum(np.where(active, 10.0 ** ((rx[None, :] - att) / 10.0), 0.0), axis=1)
    return lin


def sweep_during_burst(
    ledger: BurstLedger,
    device: DeviceModel,
    burst_window: tuple[float, float],
    anchor_channel: float,
    offsets: Sequence[float],
    seed: int = 0,
    *,
    links: Mapping[int, float] | Scenario,
    retune_dwell: int = DEFAULT_RETUNE_DWELL_US,
    grid_origin: float | None = None,
) -> list[SweepSample]:
    """Retune through ``offsets`` starting at ``burst_window[0]``.

    Each offset costs one ``retune_dwell``; its RSSI read happens at the
    first polling instant after the dwell ends.  Reads at or after the
    burst end are flagged incomplete.
    """
    if not len(offsets):
        raise ValueError("empty offset list")
    g = device.freq_granularity
    for off in offsets:
        if not math.isclose(off / g, round(off / g), abs_tol=1e-9):
            raise ValueError(f"offset {off} MHz is not a multiple of {g} MHz")
        _check_freq(device, anchor_channel + off)
    t_a, t_b = burst_window
    T = device.sample_period
    origin = t_a if grid_origin is None else grid_origin
    reads = []
    for k in range(len(offsets)):
        t_ready = t_a + (k + 1) * retune_dwell
        reads.append(origin + math.ceil((t_ready - origin) / T - 1e-9) * T)
    freqs = [anchor_channel + off for off in offsets]
    lin = powers_at(ledger, device, freqs, reads, links)
    rng = np.random.default_rng([seed, device.node_id, int(anchor_channel), int(t_a), 1]) if device.rssi_noise_db > 0 else None
    rssi = _finish(lin, device, rng)
    return [SweepSample(float(off), int(r), float(t), bool(t < t_b))
            for off, r, t in zip(offsets, rssi.tolist(), reads)]


def traces_to_csv(traces: Sequence[RssiTrace], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("node_id", "channel_mhz", "t_us", "rssi_dbm"))
        for tr in traces:
            for t, s in zip(tr.times().tolist(), tr.samples.tolist()):
                w.writerow((tr.node_id, f"{tr.channel:g}", f"{t:g}", s))
