"""Burst detection on RSSI traces and feature extraction."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .radiometer import (
    DEFAULT_RETUNE_DWELL_US,
    ROLLOFF_WIDTH_MHZ,
    DeviceModel,
    RssiTrace,
    SweepSample,
    band_distance,
    filter_attenuation,
    sweep_during_burst,
)
from .scene import BurstLedger, Scenario, Technology

MIN_BURST_US = 350
MAX_BURST_US = 5000
DEFAULT_THRESHOLD_DBM = -85.0
DEFAULT_HYSTERESIS_DB = 3.0
SWEEP_TRIGGER_US = 128
DEFAULT_OFFSETS = tuple(float(k) for k in range(9))
SF_SENTINEL_DB = 40.0
SF_SIMILAR_DB = 6.0

FEATURE_NAMES = ("f1", "f2", "f3", "f4", "f5", "f6", "f7", "f8")
ENVELOPE_FEATURES = (0, 1, 2, 3, 4)


@dataclass
class ObservedBurst:
    node_id: int
    channel: float
    t_start: float
    duration: float
    samples: np.ndarray
    sweep: list[SweepSample] = field(default_factory=list)
    classifiable: bool = True
    # True when the burst touches the start or end of the observation window
    clipped: bool = False

    @property
    def t_end(self) -> float:
        return self.t_start + self.duration


@dataclass(frozen=True)
class FeatureVector:
    duration: float
    mean_power: float
    peak_power: float
    power_std: float
    crest: float
    sf_ratio_3: float
    sf_ratio_8: float
    sf_bw_count: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.duration,
                self.mean_power,
                self.peak_power,
                self.power_std,
                self.crest,
                self.sf_ratio_3,
                self.sf_ratio_8,
                self.sf_bw_count,
            ],
            dtype=float,
        )

    @classmethod
    def from_array(cls, a: Sequence[float]) -> "FeatureVector":
        return cls(*(float(v) for v in a))


@dataclass(frozen=True)
class LabeledBurst:
    features: FeatureVector
    label: Technology


def detect_bursts(
    trace: RssiTrace,
    threshold: float = DEFAULT_THRESHOLD_DBM,
    hysteresis: float = DEFAULT_HYSTERESIS_DB,
) -> list[ObservedBurst]:
    """Threshold detector with hysteresis.

    A burst opens at the first sample >= ``threshold`` and closes at the
    first later sample < ``threshold - hysteresis``.  Bursts shorter than
    350 µs are dropped; longer than 5 ms are split into a classifiable
    5 ms head and an unclassifiable tail.
    """
    if hysteresis < 0:
        raise ValueError("hysteresis must be >= 0")
    s = trace.samples
    n = len(s)
    if n == 0:
        return []
    T = trace.sample_period
    ups = np.flatnonzero(s >= threshold)
    downs = np.flatnonzero(s < threshold - hysteresis)
    head_len = int(math.floor(MAX_BURST_US / T + 1e-9))
    out: list[ObservedBurst] = []
    pos = 0
    while True:
        j = np.searchsorted(ups, pos)
        if j >= len(ups):
            break
        k_open = int(ups[j])
        m = np.searchsorted(downs, k_open)
        k_close = int(downs[m]) if m < len(downs) else n
        pos = k_close
        length = k_close - k_open
        duration = length * T
        if duration < MIN_BURST_US - 1e-9:
            continue
        clipped = k_open == 0 or k_close == n
        t_open = trace.t0 + k_open * T
        if length > head_len:
            out.append(ObservedBurst(trace.node_id, trace.channel, t_open, head_len * T,
                                     s[k_open:k_open + head_len].copy(), clipped=clipped))
            out.append(ObservedBurst(trace.node_id, trace.channel, t_open + head_len * T,
                                     (length - head_len) * T, s[k_open + head_len:k_close].copy(),
                                     classifiable=False, clipped=clipped))
        else:
            out.append(ObservedBurst(trace.node_id, trace.channel, t_open, duration,
                                     s[k_open:k_close].copy(), clipped=clipped))
    return out


def attach_sweeps(
    bursts: Iterable[ObservedBurst],
    ledger: BurstLedger,
    device: DeviceModel,
    *,
    links: Mapping[int, float] | Scenario,
    offsets: Sequence[float] = DEFAULT_OFFSETS,
    seed: int = 0,
    retune_dwell: int = DEFAULT_RETUNE_DWELL_US,
    trace_t0: float | None = None,
) -> None:
    """Run a frequency sweep inside each classifiable burst still open after 128 µs."""
    lo, hi = device.freq_range
    T = device.sample_period
    for b in bursts:
        if not b.classifiable or b.duration <= SWEEP_TRIGGER_US:
            continue
        usable = [o for o in offsets if lo <= b.channel + o <= hi]
        if not usable:
            continue
        origin = b.t_start if trace_t0 is None else trace_t0
        t_trig = b.t_start + SWEEP_TRIGGER_US
        t_trig = origin + math.ceil((t_trig - origin) / T - 1e-9) * T
        b.sweep = sweep_during_burst(
            ledger, device, (t_trig, b.t_end), b.channel, usable, seed,
            links=links, retune_dwell=retune_dwell, grid_origin=origin,
        )


def extract_features(burst: ObservedBurst) -> FeatureVector:
    """Envelope features from the RSSI slice plus spectral features from the sweep."""
    s = np.asarray(burst.samples, dtype=float)
    if s.size == 0:
        raise ValueError("burst has no samples")
    lin_mean = float(np.mean(10.0 ** (s / 10.0)))
    mean_p = 10.0 * math.log10(lin_mean)
    peak = float(s.max())
    # guard float rounding on constant envelopes
    mean_p = min(mean_p, peak)
    std = float(s.std())
    crest = peak - mean_p

    by_offset = {round(sw.offset): sw for sw in burst.sweep if sw.complete}
    p0 = by_offset.get(0)
    if p0 is None:
        f6 = f7 = SF_SENTINEL_DB
        f8 = 0.0
    else:
        f6 = float(p0.rssi - by_offset[3].rssi) if 3 in by_offset else SF_SENTINEL_DB
        f7 = float(p0.rssi - by_offset[8].rssi) if 8 in by_offset else SF_SENTINEL_DB
        f8 = float(sum(1 for sw in by_offset.values() if abs(sw.rssi - p0.rssi) <= SF_SIMILAR_DB))
    return FeatureVector(float(burst.duration), mean_p, peak, std, crest, f6, f7, f8)


def observed_span(channel: float, rbw: float) -> tuple[float, float]:
    """Frequency span a device tuned to ``channel`` can pick energy from."""
    half = rbw / 2.0 + ROLLOFF_WIDTH_MHZ
    return channel - half, channel + half


def attribute_burst(
    burst: ObservedBurst,
    ledger: BurstLedger,
    *,
    rbw: float = 2.0,
    links: Mapping[int, float] | None = None,
    min_rx_dbm: float | None = None,
) -> int | None:
    """Ledger index with maximal time-frequency overlap, or None.

    With ``links`` and ``min_rx_dbm`` only bursts whose filtered received
    power reaches ``min_rx_dbm`` at this device are candidates, and when no
    candidate overlaps the channel in frequency (leakage through the filter
    floor) the one with the longest time overlap wins, then the strongest.
    """
    t0, t1 = burst.t_start, burst.t_end
    idx = ledger.indices_overlapping(int(math.floor(t0)), int(math.ceil(t1)))
    if not len(idx):
        return None
    f_lo, f_hi = observed_span(burst.channel, rbw)
    half = ledger.bandwidth[idx] / 2.0
    fo = np.minimum(ledger.center[idx] + half, f_hi) - np.maximum(ledger.center[idx] - half, f_lo)
    to = np.minimum(ledger.t_end[idx], t1) - np.maximum(ledger.t_start[idx], t0)
    ov = np.clip(fo, 0, None) * np.clip(to, 0, None)
    if links is not None and min_rx_dbm is not None:
        rx = np.array([links[int(e)] for e in ledger.emitter_id[idx]])
        att = filter_attenuation(band_distance(burst.channel, ledger.center[idx], ledger.bandwidth[idx]), rbw)
        visible = (rx - att >= min_rx_dbm) & (to > 0)
        ov = np.where(visible, ov, 0.0)
        if ov.max() <= 0 and visible.any():
            order = np.lexsort((-(rx - att), -np.where(visible, to, -np.inf)))
            return int(idx[order[0]])
    if ov.max() <= 0:
        return None
    # argmax picks the earliest ledger entry on ties
    return int(idx[int(np.argmax(ov))])


def label_bursts(
    observed: Sequence[ObservedBurst],
    ledger: BurstLedger,
    *,
    rbw: float = 2.0,
    links: Mapping[int, Mapping[int, float]] | None = None,
    min_rx_dbm: float | None = None,
) -> tuple[list[LabeledBurst], int]:
    """Attach ground-truth technologies; returns (labeled, dropped_count).

    ``links`` is keyed by node id, then emitter id.
    """
    labeled: list[LabeledBurst] = []
    dropped = 0
    for b in observed:
        node_links = links.get(b.node_id) if links is not None else None
        i = attribute_burst(b, ledger, rbw=rbw, links=node_links, min_rx_dbm=min_rx_dbm)
        if i is None:
            dropped += 1
            continue
        labeled.append(LabeledBurst(extract_features(b), Technology(int(ledger.tech[i]))))
    return labeled, dropped


def write_dataset(rows: Iterable[LabeledBurst], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow((*FEATURE_NAMES, "label"))
        for r in rows:
            w.writerow((*(repr(float(v)) for v in r.features.as_array()), r.label.name))


def read_dataset(path: str | Path) -> list[LabeledBurst]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = set(FEATURE_NAMES + ("label",)) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"dataset {path} lacks columns {sorted(missing)}")
        return [
            LabeledBurst(FeatureVector.from_array([float(r[k]) for k in FEATURE_NAMES]), Technology.parse(r["label"]))
            for r in reader
        ]
