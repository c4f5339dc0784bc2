"""Ground-truth burst traffic for coexisting 2.4 GHz emitters."""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

BAND_LOW_MHZ = 2400.0
BAND_HIGH_MHZ = 2485.0

LEDGER_HEADER = ("emitter_id", "tech", "t_start_us", "duration_us", "center_mhz", "bw_mhz", "tx_dbm")


class Technology(enum.IntEnum):
    """Closed set of interference technologies; the order is the tie-break order."""

    Wlan11b = 0
    Wlan11g = 1
    Wlan11n = 2
    Bt802151 = 3
    Ble = 4
    Zigbee802154 = 5

    @classmethod
    def parse(cls, name: str | int | "Technology") -> "Technology":
        if isinstance(name, Technology):
            return name
        if isinstance(name, (int, np.integer)):
            return cls(int(name))
        try:
            return cls[name]
        except KeyError:
            lowered = {t.name.lower(): t for t in cls}
            if name.lower() in lowered:
                return lowered[name.lower()]
            raise ValueError(f"unknown technology {name!r}") from None


# Groups accepted wherever a single technology can be named on the command line.
TECH_FAMILIES = {
    "wlan": (Technology.Wlan11b, Technology.Wlan11g, Technology.Wlan11n),
    "bt": (Technology.Bt802151,),
    "bluetooth": (Technology.Bt802151,),
    "ble": (Technology.Ble,),
    "zigbee": (Technology.Zigbee802154,),
}


def parse_tech_selection(name: str) -> tuple[Technology, ...]:
    """Resolve a technology name or family name to a tuple of technologies."""
    key = name.strip().lower()
    if key in TECH_FAMILIES:
        return TECH_FAMILIES[key]
    return (Technology.parse(name.strip()),)


@dataclass(frozen=True)
class Position:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite position ({self.x}, {self.y})")

    def distance(self, other: "Position") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Area:
    width_m: float
    height_m: float

    def contains(self, p: Position) -> bool:
        return 0.0 <= p.x <= self.width_m and 0.0 <= p.y <= self.height_m


@dataclass(frozen=True)
class PathLoss:
    """Log-distance path loss with an optional fixed per-link shadowing term."""

    pl0_db: float = 40.0
    d0_m: float = 1.0
    exponent: float = 3.0
    shadowing_sigma_db: float = 0.0

    def loss_db(self, d: float) -> float:
        d = max(d, self.d0_m)
        return self.pl0_db + 10.0 * self.exponent * math.log10(d / self.d0_m)


@dataclass(frozen=True)
class Distribution:
    """A parametric distribution over microseconds.

    kinds: ``constant`` (value), ``uniform`` (low, high), ``loguniform``
    (low, high, skew), ``exponential`` (mean), ``choice`` (values, probs),
    ``frame`` (bytes_low, bytes_high, kbps, overhead_bytes).
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        p = self.params
        k = self.kind
        if k == "constant":
            if p["value"] < 0:
                raise ValueError("constant distribution needs value >= 0")
        elif k in ("uniform", "loguniform"):
            if not (0 < p["low"] <= p["high"]):
                raise ValueError(f"{k} distribution needs 0 < low <= high")
            if p.get("skew", 1.0) <= 0:
                raise ValueError("skew must be positive")
        elif k == "exponential":
            if p["mean"] <= 0:
                raise ValueError("exponential distribution needs mean > 0")
        elif k == "choice":
            vals = p["values"]
            probs = p.get("probs") or [1.0 / len(vals)] * len(vals)
            if not vals or len(vals) != len(probs) or min(vals) <= 0 or min(probs) < 0:
                raise ValueError("choice distribution needs positive values and matching probs")
            if not math.isclose(sum(probs), 1.0, rel_tol=1e-9):
                raise ValueError("choice probabilities must sum to 1")
        elif k == "frame":
            if not (0 < p["bytes_low"] <= p["bytes_high"]) or p.get("kbps", 250.0) <= 0:
                raise ValueError("frame distribution needs 0 < bytes_low <= bytes_high and kbps > 0")
            if p.get("overhead_bytes", 6) < 0:
                raise ValueError("overhead_bytes must be >= 0")
        else:
            raise ValueError(f"unknown distribution kind {k!r}")

    @classmethod
    def constant(cls, value: float) -> "Distribution":
        return cls("constant", {"value": value})

    def mean(self) -> float:
        p = self.params
        k = self.kind
        if k == "constant":
            return p["value"]
        if k == "uniform":
            return 0.5 * (p["low"] + p["high"])
        if k == "loguniform":
            return math.sqrt(p["low"] * p["high"])
        if k == "exponential":
            return p["mean"]
        if k == "choice":
            probs = p.get("probs") or [1.0 / len(p["values"])] * len(p["values"])
            return float(np.dot(p["values"], probs))
        overhead = p.get("overhead_bytes", 6)
        return (0.5 * (p["bytes_low"] + p["bytes_high"]) + overhead) * 8e3 / p.get("kbps", 250.0)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``n`` values, rounded to whole microseconds."""
        p = self.params
        k = self.kind
        if k == "constant":
            out = np.full(n, float(p["value"]))
        elif k == "uniform":
            out = rng.uniform(p["low"], p["high"], n)
        elif k == "loguniform":
            u = rng.random(n) ** (1.0 / p.get("skew", 1.0))
            lo, hi = math.log(p["low"]), math.log(p["high"])
            out = np.exp(lo + (hi - lo) * u)
        elif k == "exponential":
            out = rng.exponential(p["mean"], n)
        elif k == "choice":
            probs = p.get("probs") or None
            out = rng.choice(np.asarray(p["values"], dtype=float), size=n, p=probs)
        else:
            nbytes = rng.integers(p["bytes_low"], p["bytes_high"], size=n, endpoint=True)
            out = (nbytes + p.get("overhead_bytes", 6)) * 8e3 / p.get("kbps", 250.0)
        return np.rint(out).astype(np.int64)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}

    @classmethod
    def from_dict(cls, d: dict) -> "Distribution":
        d = dict(d)
        kind = d.pop("kind")
        return cls(kind, d)


@dataclass(frozen=True)
class EmitterSpec:
    id: int
    tech: Technology
    position: Position
    tx_power: float
    bandwidth: float
    center: float | None = None
    hop_set: tuple[float, ...] | None = None
    duration: Distribution = field(default_factory=lambda: Distribution.constant(1000))
    interarrival: Distribution = field(default_factory=lambda: Distribution("exponential", {"mean": 10000}))
    slot_us: int | None = None
    slot_phase_us: int = 0
    active_us: tuple[int, int] | None = None

    def validate(self) -> None:
        if not -30.0 <= self.tx_power <= 30.0:
            raise ValueError(f"emitter {self.id}: tx_power {self.tx_power} outside [-30, 30] dBm")
        if self.bandwidth <= 0:
            raise ValueError(f"emitter {self.id}: bandwidth must be positive")
        if (self.center is None) == (self.hop_set is None):
            raise ValueError(f"emitter {self.id}: give exactly one of center or hop_set")
        centers = [self.center] if self.center is not None else list(self.hop_set)
        if not centers:
            raise ValueError(f"emitter {self.id}: empty hop set")
        for c in centers:
            if c - self.bandwidth / 2 < BAND_LOW_MHZ or c + self.bandwidth / 2 > BAND_HIGH_MHZ:
                raise ValueError(
                    f"emitter {self.id}: band {c}±{self.bandwidth / 2} MHz exceeds "
                    f"{BAND_LOW_MHZ:.0f}-{BAND_HIGH_MHZ:.0f} MHz"
                )
        if self.duration.kind == "constant" and self.duration.params["value"] <= 0:
            raise ValueError(f"emitter {self.id}: burst duration must be positive")
        if self.slot_us is not None and self.slot_us <= 0:
            raise ValueError(f"emitter {self.id}: slot_us must be positive")
        if self.active_us is not None and not 0 <= self.active_us[0] < self.active_us[1]:
            raise ValueError(f"emitter {self.id}: bad active interval {self.active_us}")

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "tech": self.tech.name,
            "position": {"x": self.position.x, "y": self.position.y},
            "tx_power": self.tx_power,
            "bandwidth": self.bandwidth,
            "duration": self.duration.to_dict(),
            "interarrival": self.interarrival.to_dict(),
        }
        if self.center is not None:
            d["center"] = self.center
        else:
            d["hop_set"] = list(self.hop_set)
        if self.slot_us is not None:
            d["slot_us"] = self.slot_us
            d["slot_phase_us"] = self.slot_phase_us
        if self.active_us is not None:
            d["active_us"] = list(self.active_us)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EmitterSpec":
        pos = d["position"]
        if isinstance(pos, dict):
            pos = Position(float(pos["x"]), float(pos["y"]))
        else:
            pos = Position(float(pos[0]), float(pos[1]))
        return cls(
            id=int(d["id"]),
            tech=Technology.parse(d["tech"]),
            position=pos,
            tx_power=float(d["tx_power"]),
            bandwidth=float(d["bandwidth"]),
            center=float(d["center"]) if d.get("center") is not None else None,
            hop_set=tuple(float(f) for f in d["hop_set"]) if d.get("hop_set") is not None else None,
            duration=Distribution.from_dict(d["duration"]),
            interarrival=Distribution.from_dict(d["interarrival"]),
            slot_us=int(d["slot_us"]) if d.get("slot_us") is not None else None,
            slot_phase_us=int(d.get("slot_phase_us", 0)),
            active_us=tuple(int(v) for v in d["active_us"]) if d.get("active_us") is not None else None,
        )


@dataclass(frozen=True)
class BurstEvent:
    emitter_id: int
    tech: Technology
    t_start: int
    duration: int
    center_freq: float
    bandwidth: float
    tx_power: float

    @property
    def t_end(self) -> int:
        return self.t_start + self.duration


@dataclass
class BurstLedger:
    """Time-sorted ground-truth bursts, stored column-wise."""

    horizon: int
    emitter_id: np.ndarray
    tech: np.ndarray
    t_start: np.ndarray
    duration: np.ndarray
    center: np.ndarray
    bandwidth: np.ndarray
    tx_power: np.ndarray

    def __post_init__(self) -> None:
        self._t_end = self.t_start + self.duration
        self._max_duration = int(self.duration.max()) if len(self.duration) else 0

    @classmethod
    def empty(cls, horizon: int) -> "BurstLedger":
        z = np.zeros(0)
        zi = np.zeros(0, dtype=np.int64)
        return cls(horizon, zi, zi.copy(), zi.copy(), zi.copy(), z, z.copy(), z.copy())

    def __len__(self) -> int:
        return len(self.t_start)

    def __getitem__(self, i: int) -> BurstEvent:
        return BurstEvent(
            int(self.emitter_id[i]),
            Technology(int(self.tech[i])),
            int(self.t_start[i]),
            int(self.duration[i]),
            float(self.center[i]),
            float(self.bandwidth[i]),
            float(self.tx_power[i]),
        )

    @property
    def events(self) -> list[BurstEvent]:
        return [self[i] for i in range(len(self))]

    def __iter__(self) -> Iterator[BurstEvent]:
        for i in range(len(self)):
            yield self[i]

    @property
    def t_end(self) -> np.ndarray:
        return self._t_end

    def max_duration(self) -> int:
        return self._max_duration

    def indices_overlapping(self, t0: int, t1: int) -> np.ndarray:
        """Indices of bursts intersecting [t0, t1)."""
        if not len(self):
            return np.zeros(0, dtype=np.int64)
        lo = int(np.searchsorted(self.t_start, t0 - self._max_duration, side="left"))
        hi = int(np.searchsorted(self.t_start, t1, side="left"))
        return lo + np.flatnonzero(self._t_end[lo:hi] > t0)

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LEDGER_HEADER)
        for i in range(len(self)):
            w.writerow(
                (
                    int(self.emitter_id[i]),
                    Technology(int(self.tech[i])).name,
                    int(self.t_start[i]),
                    int(self.duration[i]),
                    f"{self.center[i]:g}",
                    f"{self.bandwidth[i]:g}",
                    f"{self.tx_power[i]:g}",
                )
            )
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path: str | Path, horizon: int | None = None) -> "BurstLedger":
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        if not rows:
            return cls.empty(horizon or 0)
        led = cls(
            horizon=horizon if horizon is not None else 0,
            emitter_id=np.array([int(r["emitter_id"]) for r in rows], dtype=np.int64),
            tech=np.array([Technology.parse(r["tech"]) for r in rows], dtype=np.int64),
            t_start=np.array([int(r["t_start_us"]) for r in rows], dtype=np.int64),
            duration=np.array([int(r["duration_us"]) for r in rows], dtype=np.int64),
            center=np.array([float(r["center_mhz"]) for r in rows]),
            bandwidth=np.array([float(r["bw_mhz"]) for r in rows]),
            tx_power=np.array([float(r["tx_dbm"]) for r in rows]),
        )
        if horizon is None:
            led.horizon = int(led.t_end.max())
        return led


@dataclass
class Scenario:
    area: Area
    emitters: list[EmitterSpec]
    pathloss: PathLoss = field(default_factory=PathLoss)
    seed: int = 0
    horizon_us: int = 10_000_000

    def emitter(self, emitter_id: int) -> EmitterSpec:
        for e in self.emitters:
            if e.id == emitter_id:
                return e
        raise KeyError(emitter_id)

    def to_dict(self) -> dict:
        return {
            "area": {"width_m": self.area.width_m, "height_m": self.area.height_m},
            "emitters": [e.to_dict() for e in self.emitters],
            "pathloss": {
                "pl0_db": self.pathloss.pl0_db,
                "d0_m": self.pathloss.d0_m,
                "exponent": self.pathloss.exponent,
                "shadowing_sigma_db": self.pathloss.shadowing_sigma_db,
            },
            "seed": self.seed,
            "horizon_us": self.horizon_us,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        pl = d.get("pathloss", {})
        scenario = cls(
            area=Area(float(d["area"]["width_m"]), float(d["area"]["height_m"])),
            emitters=[EmitterSpec.from_dict(e) for e in d.get("emitters", [])],
            pathloss=PathLoss(
                pl0_db=float(pl.get("pl0_db", 40.0)),
                d0_m=float(pl.get("d0_m", 1.0)),
                exponent=float(pl.get("exponent", 3.0)),
                shadowing_sigma_db=float(pl.get("shadowing_sigma_db", 0.0)),
            ),
            seed=int(d.get("seed", 0)),
            horizon_us=int(d.get("horizon_us", 10_000_000)),
        )
        for e in scenario.emitters:
            if not scenario.area.contains(e.position):
                raise ValueError(f"emitter {e.id} lies outside the scenario area")
        return scenario

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def _emitter_bursts(spec: EmitterSpec, horizon: int, rng: np.random.Generator) -> tuple[np.ndarray, ...]:
    t_lo, t_hi = spec.active_us if spec.active_us is not None else (0, horizon)
    t_hi = min(t_hi, horizon)
    mean_cycle = max(spec.duration.mean() + spec.interarrival.mean(), 1.0)
    if spec.slot_us:
        mean_cycle = max(mean_cycle, spec.slot_us)
    starts_parts, dur_parts = [], []
    cursor = t_lo  # earliest allowed start of the next burst
    while cursor < t_hi:
        n = int((t_hi - cursor) / mean_cycle * 1.1) + 16
        dur = spec.duration.sample(rng, n)
        gap = spec.interarrival.sample(rng, n)
        if np.any(dur <= 0):
            dur = np.maximum(dur, 1)
        if spec.slot_us:
            slot = spec.slot_us
            # first start: first slot boundary at or after cursor + gap
            base = cursor + int(gap[0])
            k0 = -(-(base - spec.slot_phase_us) // slot)
            steps = -(-(dur[:-1] + gap[1:]) // slot)
            slots = k0 + np.concatenate(([0], np.cumsum(steps)))
            starts = slots * slot + spec.slot_phase_us
        else:
            offs = np.concatenate(([gap[0]], dur[:-1] + gap[1:]))
            starts = cursor + np.cumsum(offs)
        keep = starts < t_hi
        starts_parts.append(starts[keep])
        dur_parts.append(dur[keep])
        if keep.all():
            cursor = int(starts[-1] + dur[-1])
        else:
            break
    starts = np.concatenate(starts_parts) if starts_parts else np.zeros(0, dtype=np.int64)
    durs = np.concatenate(dur_parts) if dur_parts else np.zeros(0, dtype=np.int64)
    if spec.hop_set is not None:
        hops = np.asarray(spec.hop_set, dtype=float)
        centers = hops[rng.integers(0, len(hops), size=len(starts))]
    else:
        centers = np.full(len(starts), float(spec.center))
    return starts.astype(np.int64), durs.astype(np.int64), centers


def generate_ledger(scenario: Sequence[EmitterSpec], horizon: int, seed: int) -> BurstLedger:
    """Draw ground-truth bursts for every emitter up to ``horizon`` µs.

    Each emitter gets its own child stream of ``seed`` so adding an emitter
    never perturbs the bursts of the others.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    specs = list(scenario)
    for s in specs:
        s.validate()
    if not specs:
        return BurstLedger.empty(horizon)
    children = np.random.SeedSequence(seed).spawn(len(specs))
    cols: dict[str, list[np.ndarray]] = {k: [] for k in ("eid", "tech", "t", "d", "c", "bw", "tx")}
    for spec, ss in zip(specs, children):
        rng = np.random.default_rng(ss)
        t, d, c = _emitter_bursts(spec, horizon, rng)
        n = len(t)
        cols["eid"].append(np.full(n, spec.id, dtype=np.int64))
        cols["tech"].append(np.full(n, int(spec.tech), dtype=np.int64))
        cols["t"].append(t)
        cols["d"].append(d)
        cols["c"].append(c)
        cols["bw"].append(np.full(n, spec.bandwidth))
        cols["tx"].append(np.full(n, spec.tx_power))
    merged = {k: np.concatenate(v) for k, v in cols.items()}
    order = np.lexsort((merged["eid"], merged["t"]))
    return BurstLedger(
        horizon=int(horizon),
        emitter_id=merged["eid"][order],
        tech=merged["tech"][order],
        t_start=merged["t"][order],
        duration=merged["d"][order],
        center=merged["c"][order],
        bandwidth=merged["bw"][order],
        tx_power=merged["tx"][order],
    )


def received_power(
    burst: BurstEvent | float,
    rx: Position,
    emitter_pos: Position,
    pathloss: PathLoss = PathLoss(),
) -> float:
    """Log-distance received power in dBm; distances below d0 are clamped to d0."""
    tx = burst.tx_power if isinstance(burst, BurstEvent) else float(burst)
    return tx - pathloss.loss_db(rx.distance(emitter_pos))


def link_shadowing_db(pathloss: PathLoss, seed: int, emitter_id: int, node_id: int) -> float:
    """Fixed log-normal shadowing for one emitter-node link (0 when disabled)."""
    if pathloss.shadowing_sigma_db <= 0:
        return 0.0
    rng = np.random.default_rng([seed, 7919, emitter_id, node_id])
    return float(rng.normal(0.0, pathloss.shadowing_sigma_db))
