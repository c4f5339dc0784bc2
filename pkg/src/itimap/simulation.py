"""Scene -> radiometer -> burst pipeline for a set of sensing nodes."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bursts import (
    DEFAULT_HYSTERESIS_DB,
    attribute_burst,
    DEFAULT_OFFSETS,
    DEFAULT_THRESHOLD_DBM,
    LabeledBurst,
    ObservedBurst,
    attach_sweeps,
    detect_bursts,
    extract_features,
    label_bursts,
)
from .radiometer import (
    DEFAULT_RETUNE_DWELL_US,
    DeviceModel,
    RssiTrace,
    ScanSchedule,
    band_distance,
    build_schedule,
    filter_attenuation,
    link_powers,
    make_device,
    quantize,
    sample_trace,
)
from .scenarios import TRAINING_HORIZON_US, training_nodes, training_scenario
from .classifier import predict
from .scene import BurstLedger, Scenario, Technology, generate_ledger

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DetectorConfig:
    threshold: float = DEFAULT_THRESHOLD_DBM
    hysteresis: float = DEFAULT_HYSTERESIS_DB
    offsets: tuple[float, ...] = DEFAULT_OFFSETS
    retune_dwell: int = DEFAULT_RETUNE_DWELL_US


@dataclass
class ChannelObservation:
    scan_seq: int
    channel_index: int
    bursts: list[ObservedBurst]


@dataclass
class NodeRun:
    node_id: int
    observations: list[ChannelObservation] = field(default_factory=list)
    traces: list[RssiTrace] = field(default_factory=list)
    traces_sampled: int = 0
    traces_skipped: int = 0

    def bursts(self) -> list[ObservedBurst]:
        return [b for ob in self.observations for b in ob.bursts]


def _cannot_trigger(ledger: BurstLedger, idx: np.ndarray, links: dict, device: DeviceModel,
                    channel: float, threshold: float) -> bool:
    """True when even all overlapping bursts at once stay below ``threshold``."""
    if device.rssi_noise_db > 0:
        return False
    rx = np.array([links[int(e)] for e in ledger.emitter_id[idx]])
    att = filter_attenuation(band_distance(channel, ledger.center[idx], ledger.bandwidth[idx]), device.rbw)
    total = float(np.sum(10.0 ** ((rx - att) / 10.0))) + 10.0 ** (device.noise_floor / 10.0)
    bound = min(device.calibration_offset + 10.0 * math.log10(total), device.dynamic_range[1])
    return float(quantize(bound)) < threshold


def observe_node(
    scenario: Scenario,
    ledger: BurstLedger,
    device: DeviceModel,
    schedule: ScanSchedule,
    detector: DetectorConfig = DetectorConfig(),
    seed: int = 0,
    *,
    n_scans: int | None = None,
    keep_traces: bool = False,
) -> NodeRun:
    """Run every scan of one node over the ledger horizon.

    Windows in which no burst could reach the threshold are skipped
    without sampling; they cannot produce detections.
    """
    links = link_powers(scenario, device)
    total = schedule.n_scans(ledger.horizon)
    if n_scans is not None:
        total = min(total, n_scans)
    run = NodeRun(device.node_id)
    for k in range(total):
        for ci, ch in enumerate(schedule.channels):
            w0, w1 = schedule.window(k, ci)
            idx = ledger.indices_overlapping(w0, w1)
            if (not len(idx) and device.rssi_noise_db == 0) or (
                len(idx) and _cannot_trigger(ledger, idx, links, device, ch, detector.threshold)
            ):
                run.traces_skipped += 1
                continue
            trace = sample_trace(ledger, device, ch, (w0, w1), seed, links=links)
            run.traces_sampled += 1
            bursts = detect_bursts(trace, detector.threshold, detector.hysteresis)
            attach_sweeps(bursts, ledger, device, links=links, offsets=detector.offsets, seed=seed,
                          retune_dwell=detector.retune_dwell, trace_t0=trace.t0)
            if bursts:
                run.observations.append(ChannelObservation(k, ci, bursts))
            if keep_traces:
                run.traces.append(trace)
    return run


def _observe_args(args):
    return observe_node(*args[0], **args[1])


def observe_nodes(
    scenario: Scenario,
    ledger: BurstLedger,
    devices: Sequence[DeviceModel],
    schedule: ScanSchedule,
    detector: DetectorConfig = DetectorConfig(),
    seed: int = 0,
    *,
    n_scans: int | None = None,
    keep_traces: bool = False,
    workers: int = 1,
) -> list[NodeRun]:
    """Per-node fan-out; results come back ordered by node id."""
    jobs = [((scenario, ledger, d, schedule, detector, seed), {"n_scans": n_scans, "keep_traces": keep_traces})
            for d in devices]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            runs = list(ex.map(_observe_args, jobs))
    else:
        runs = [_observe_args(j) for j in jobs]
    return sorted(runs, key=lambda r: r.node_id)


def label_runs(
    runs: Sequence[NodeRun],
    scenario: Scenario,
    ledger: BurstLedger,
    devices: Sequence[DeviceModel],
    detector: DetectorConfig = DetectorConfig(),
) -> tuple[list[LabeledBurst], int]:
    """Ground-truth labels for every classifiable observed burst.

    Candidate ledger bursts must reach the hysteresis floor at the node
    (after filtering and calibration offset).
    """
    by_node = {d.node_id: d for d in devices}
    links = {}
    for r in runs:
        dev = by_node[r.node_id]
        links[r.node_id] = {e: p + dev.calibration_offset for e, p in link_powers(scenario, dev).items()}
    observed = [b for r in runs for b in r.bursts() if b.classifiable]
    rbw = devices[0].rbw if devices else 2.0
    return label_bursts(observed, ledger, rbw=rbw, links=links,
                        min_rx_dbm=detector.threshold - detector.hysteresis)


def build_dataset(
    scenario: Scenario,
    devices: Sequence[DeviceModel],
    schedule: ScanSchedule,
    detector: DetectorConfig = DetectorConfig(),
    seed: int | None = None,
) -> tuple[list[LabeledBurst], dict]:
    """Simulate ``scenario`` end to end and return labeled bursts plus a summary."""
    seed = scenario.seed if seed is None else seed
    ledger = generate_ledger_for(scenario, seed)
    runs = observe_nodes(scenario, ledger, devices, schedule, detector, seed)
    rows, dropped = label_runs(runs, scenario, ledger, devices, detector)
    detected = sum(len(r.bursts()) for r in runs)
    summary = {
        "bursts_generated": len(ledger),
        "bursts_detected": detected,
        "bursts_labeled": len(rows),
        "bursts_dropped": dropped,
        "duty_cycle": schedule.duty_cycle,
    }
    return rows, summary


def default_dataset(seed: int = 42, horizon_us: int | None = None) -> tuple[list[LabeledBurst], dict]:
    """Labeled bursts from the training hall: 4 nodes, all six technologies."""
    scenario = training_scenario(TRAINING_HORIZON_US if horizon_us is None else horizon_us, seed)
    devices = [make_device(i, p, seed) for i, p in training_nodes()]
    return build_dataset(scenario, devices, build_schedule(), DetectorConfig(), seed)


def generate_ledger_for(scenario: Scenario, seed: int | None = None) -> BurstLedger:
    return generate_ledger(scenario.emitters, scenario.horizon_us, scenario.seed if seed is None else seed)


Grouped = dict[tuple[int, int], list[tuple[int, ObservedBurst, Technology]]]


def _group(runs: Sequence[NodeRun], techs: Sequence[Technology | None]) -> Grouped:
    """Pair bursts (in run order) with technologies; tails inherit their head's.

    A ``None`` technology drops the burst and any tail that follows it.
    """
    out: Grouped = {}
    it = iter(techs)
    for r in runs:
        for ob in r.observations:
            group = out.setdefault((r.node_id, ob.scan_seq), [])
            last = None
            for b in ob.bursts:
                if b.classifiable:
                    last = next(it)
                if last is not None:
                    group.append((ob.channel_index, b, last))
    return out


def classified_bursts(runs: Sequence[NodeRun], model) -> Grouped:
    """Classify bursts and group them per (node, scan) as (channel_index, burst, tech).

    Unclassifiable tails inherit the technology of the head they follow.
    """
    heads = [b for r in runs for b in r.bursts() if b.classifiable]
    if not heads:
        return _group(runs, [])
    X = np.array([extract_features(b).as_array() for b in heads])
    return _group(runs, [Technology(int(k)) for k in predict(model, X)])


def truth_bursts(
    runs: Sequence[NodeRun],
    scenario: Scenario,
    ledger: BurstLedger,
    devices: Sequence[DeviceModel],
    detector: DetectorConfig = DetectorConfig(),
) -> Grouped:
    """Like ``classified_bursts`` but with ground-truth labels; unattributable bursts are left out."""
    by_node = {d.node_id: d for d in devices}
    techs: list[Technology | None] = []
    for r in runs:
        dev = by_node[r.node_id]
        links = {e: p + dev.calibration_offset for e, p in link_powers(scenario, dev).items()}
        for b in r.bursts():
            if b.classifiable:
                i = attribute_burst(b, ledger, rbw=dev.rbw, links=links,
                                    min_rx_dbm=detector.threshold - detector.hysteresis)
                techs.append(None if i is None else Technology(int(ledger.tech[i])))
    return _group(runs, techs)


def burst_samples_csv(runs: Sequence[NodeRun], sample_period: float, path) -> None:
    """Trace export restricted to the samples inside detected bursts."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("node_id", "channel_mhz", "t_us", "rssi_dbm"))
        for r in runs:
            for b in r.bursts():
                for k, v in enumerate(b.samples.tolist()):
                    w.writerow((r.node_id, f"{b.channel:g}", f"{b.t_start + k * sample_period:g}", v))
