"""Built-in technology profiles and scenarios."""

from __future__ import annotations

import numpy as np

from .scene import Area, Distribution, EmitterSpec, PathLoss, Position, Scenario, Technology

WLAN_CHANNELS_MHZ = (2412.0, 2437.0, 2462.0)
BT_HOPS_MHZ = tuple(float(f) for f in range(2402, 2481))
BLE_HOPS_MHZ = tuple(float(f) for f in range(2402, 2481, 2))
ZIGBEE_CHANNELS_MHZ = tuple(2405.0 + 5.0 * k for k in range(16))

BT_SLOT_US = 625
BT_SLOT_AIRTIME_US = 366
ZIGBEE_MAX_FRAME_US = 4256  # 133 bytes at 250 kbit/s

OFFICE_AREA = Area(12.0, 25.0)


def profile(tech: Technology | str, emitter_id: int, position: Position, **overrides) -> EmitterSpec:
    """Default emitter for ``tech``; any EmitterSpec field can be overridden."""
    tech = Technology.parse(tech)
    if tech in (Technology.Wlan11b, Technology.Wlan11g, Technology.Wlan11n):
        skew = {Technology.Wlan11b: 2.5, Technology.Wlan11g: 1.0, Technology.Wlan11n: 0.4}[tech]
        kw = dict(
            tx_power=15.0,
            bandwidth=20.0,
            center=WLAN_CHANNELS_MHZ[emitter_id % 3],
            duration=Distribution("loguniform", {"low": 200, "high": 5000, "skew": skew}),
            interarrival=Distribution("exponential", {"mean": 40_000}),
        )
    elif tech is Technology.Bt802151:
        kw = dict(
            tx_power=6.0,
            bandwidth=1.0,
            hop_set=BT_HOPS_MHZ,
            duration=Distribution("choice", {"values": [366, 1622, 2870], "probs": [0.4, 0.35, 0.25]}),
            interarrival=Distribution("exponential", {"mean": 8_000}),
            slot_us=BT_SLOT_US,
        )
    elif tech is Technology.Ble:
        kw = dict(
            tx_power=6.0,
            bandwidth=2.0,
            hop_set=BLE_HOPS_MHZ,
            duration=Distribution("uniform", {"low": 400, "high": 2120}),
            interarrival=Distribution("exponential", {"mean": 12_000}),
        )
    else:
        kw = dict(
            tx_power=5.0,
            bandwidth=2.0,
            center=ZIGBEE_CHANNELS_MHZ[emitter_id % 16],
            duration=Distribution("frame", {"bytes_low": 10, "bytes_high": 127, "kbps": 250.0, "overhead_bytes": 6}),
            interarrival=Distribution("exponential", {"mean": 15_000}),
        )
    kw.update(overrides)
    return EmitterSpec(id=emitter_id, tech=tech, position=position, **kw)


def office_nodes() -> list[tuple[int, Position]]:
    """Gateway (node 0) plus 14 sensors spread over offices and corridors."""
    pts = [
        (6.0, 12.5),  # gateway
        (1.5, 1.5), (6.0, 2.0), (10.5, 1.5),
        (2.0, 6.5), (10.0, 6.0),
        (1.5, 10.5), (10.5, 10.0),
        (2.0, 15.0), (10.0, 15.5),
        (1.5, 19.5), (6.5, 19.0), (10.5, 20.0),
        (2.5, 23.5), (9.5, 23.5),
    ]
    return [(i, Position(x, y)) for i, (x, y) in enumerate(pts)]


def office_scenario(horizon_us: int = 900_000_000, seed: int = 1) -> Scenario:
    """12 x 25 m office with three WLAN access points and one Bluetooth pair."""
    emitters = [
        profile(Technology.Wlan11g, 1, Position(6.5, 2.5), center=2412.0),
        profile(Technology.Wlan11n, 2, Position(2.5, 11.0), center=2437.0),
        profile(Technology.Wlan11b, 3, Position(9.5, 20.5), center=2462.0),
        profile(Technology.Bt802151, 4, Position(10.0, 14.5), slot_us=2 * BT_SLOT_US, slot_phase_us=0),
        profile(Technology.Bt802151, 5, Position(10.5, 16.0), slot_us=2 * BT_SLOT_US, slot_phase_us=BT_SLOT_US),
    ]
    return Scenario(OFFICE_AREA, emitters, PathLoss(), seed, horizon_us)


TRAINING_AREA = Area(60.0, 60.0)
# Worst-case out-of-channel leakage (tx - path loss - 40 dB floor + 6 dB
# calibration) must stay this far below the hysteresis floor, otherwise a
# nearby emitter keeps every channel's trace above threshold and bursts merge.
LEAK_MARGIN_DB = 4.0


def training_nodes() -> list[tuple[int, Position]]:
    """2 x 2 grid of sensing nodes over the 60 x 60 m training hall."""
    return [(2 * r + c, Position(15.0 + 30.0 * c, 15.0 + 30.0 * r)) for r in range(2) for c in range(2)]


def leak_safe(tx_dbm: float, pos: Position, nodes, pathloss: PathLoss = PathLoss(),
              threshold_dbm: float = -85.0, hysteresis_db: float = 3.0) -> bool:
    """True when the emitter cannot hold a far channel above the hysteresis floor at any node."""
    limit = threshold_dbm - hysteresis_db - LEAK_MARGIN_DB
    return all(tx_dbm - pathloss.loss_db(pos.distance(p)) - 40.0 + 6.0 < limit for _, p in nodes)


# Training hall population: emitter count, tx power range (dBm) and mean
# inter-arrival (µs) per technology. Many emitters with a spread of tx powers
# keep received power from fingerprinting individual emitters; loads are set
# for roughly equal labeled-burst counts per class.
TRAINING_POPULATION = {
    Technology.Wlan11b: (20, (4.0, 14.0), 560_000),
    Technology.Wlan11g: (20, (4.0, 14.0), 400_000),
    Technology.Wlan11n: (20, (4.0, 14.0), 225_000),
    Technology.Bt802151: (30, (0.0, 12.0), 130_000),
    Technology.Ble: (30, (0.0, 10.0), 125_000),
    Technology.Zigbee802154: (30, (0.0, 8.0), 120_000),
}
TRAINING_HORIZON_US = 150_000_000


def training_scenario(horizon_us: int = TRAINING_HORIZON_US, seed: int = 42) -> Scenario:
    """All six technologies at seeded random positions, for dataset generation.

    Positions are redrawn until the emitter is leak-safe with respect to
    every node of ``training_nodes``.
    """
    rng = np.random.default_rng([seed, 17])
    nodes = training_nodes()
    emitters = []
    eid = 1
    for tech, (n, (tx_lo, tx_hi), mean_gap) in TRAINING_POPULATION.items():
        for k in range(n):
            overrides = {"interarrival": Distribution("exponential", {"mean": mean_gap})}
            if tech is Technology.Zigbee802154:
                overrides["center"] = ZIGBEE_CHANNELS_MHZ[int(rng.integers(0, 16))]
            elif tech in (Technology.Wlan11b, Technology.Wlan11g, Technology.Wlan11n):
                overrides["center"] = WLAN_CHANNELS_MHZ[k % 3]
            tx = float(np.round(rng.uniform(tx_lo, tx_hi)))
            for _ in range(10_000):
                pos = Position(float(rng.uniform(0.5, TRAINING_AREA.width_m - 0.5)),
                               float(rng.uniform(0.5, TRAINING_AREA.height_m - 0.5)))
                if leak_safe(tx, pos, nodes):
                    break
            else:
                raise ValueError(f"no leak-safe position for {tech.name} in the training area")
            emitters.append(profile(tech, eid, pos, tx_power=tx, **overrides))
            eid += 1
    return Scenario(TRAINING_AREA, emitters, PathLoss(), seed, horizon_us)


def doubling_scenario(bin_us: int = 60_000_000, seed: int = 5) -> Scenario:
    """One WLAN station whose packet rate doubles after the first bin.

    Packets are periodic with constant length and power; a second,
    co-located station with the same period and a half-period phase shift
    switches on so that its first packet falls just after ``bin_us``.
    """
    period, length = 10_000, 1_000
    common = dict(
        center=2437.0,
        duration=Distribution.constant(length),
        interarrival=Distribution.constant(period - length),
    )
    a = profile(Technology.Wlan11g, 1, Position(6.0, 10.0), **common)
    b = profile(Technology.Wlan11g, 2, Position(6.0, 10.0), active_us=(bin_us - period // 2, 2 * bin_us), **common)
    return Scenario(OFFICE_AREA, [a, b], PathLoss(), seed, 2 * bin_us)


FAST_FORWARD_HOURS = 42


def fast_forward_scenario(horizon_us: int = FAST_FORWARD_HOURS * 3_600_000_000, seed: int = 9) -> Scenario:
    """Sparse long-run WLAN traffic for the multi-hour spectrogram."""
    emitters = [
        profile(Technology.Wlan11g, 1, Position(6.5, 2.5), center=2412.0,
                interarrival=Distribution("exponential", {"mean": 1_000_000})),
        profile(Technology.Wlan11n, 2, Position(2.5, 11.0), center=2437.0,
                interarrival=Distribution("exponential", {"mean": 2_000_000})),
    ]
    return Scenario(OFFICE_AREA, emitters, PathLoss(), seed, int(horizon_us))


def _doubling(horizon_us: int = 120_000_000, seed: int = 5) -> Scenario:
    return doubling_scenario(int(horizon_us) // 2, seed)


# name -> (scenario factory taking (horizon_us, seed), node layout)
BUILTIN_SCENARIOS = {
    "office": (office_scenario, office_nodes),
    "training": (training_scenario, training_nodes),
    "doubling": (_doubling, office_nodes),
    "fast_forward": (fast_forward_scenario, office_nodes),
}
