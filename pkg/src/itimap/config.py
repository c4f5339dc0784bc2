"""JSON run configuration shared by every CLI subcommand."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .radiometer import DeviceModel, ScanSchedule, build_schedule, make_device
from .scenarios import BUILTIN_SCENARIOS
from .scene import Position, Scenario, Technology, parse_tech_selection
from .simulation import DetectorConfig


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (CLI exit status 1)."""


@dataclass
class ClassifierConfig:
    model: str = "tree"
    max_splits: int = 20
    splits_list: tuple[int, ...] = (5, 20, 50, 200)
    forest_sizes: tuple[int, ...] = (30,)
    knn_k: tuple[int, ...] = (5,)
    train_fraction: float = 0.7
    speed_repeats: int = 20_000
    dataset: str | None = None
    model_file: str | None = None


@dataclass
class MapConfig:
    bin_seconds: float = 5.0
    cell_m: float = 0.5
    techs: tuple[str, ...] = ("wlan", "bt")
    window_s: tuple[float, float] | None = None
    channels: tuple[int, ...] | None = None
    labels: str = "classified"
    nodes: tuple[int, ...] | None = None


@dataclass
class RunConfig:
    scenario: str = "office"
    horizon_s: float | None = None
    nodes: Any = None
    device: dict = field(default_factory=dict)
    observation_us: int = 50_000
    period_us: int = 5_000_000
    detector: dict = field(default_factory=dict)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    map: MapConfig = field(default_factory=MapConfig)
    seed: int | None = None
    out: str = "out"
    traces: str = "bursts"
    workers: int = 1
    base_dir: Path = field(default_factory=Path.cwd, repr=False)

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "RunConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)} - {"base_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            clf = ClassifierConfig(**_tuples(d.pop("classifier", {}), ClassifierConfig))
            mp = MapConfig(**_tuples(d.pop("map", {}), MapConfig))
        except TypeError as e:
            raise ConfigError(str(e)) from None
        cfg = cls(**d, classifier=clf, map=mp, base_dir=base_dir or Path.cwd())
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            d = json.loads(p.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{p}: {e}") from None
        return cls.from_dict(d, p.parent.resolve())

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p

    def validate(self) -> None:
        if self.traces not in ("bursts", "all", "none"):
            raise ConfigError("traces must be one of bursts, all, none")
        if self.map.labels not in ("classified", "truth"):
            raise ConfigError("map.labels must be 'classified' or 'truth'")
        if self.classifier.model not in ("tree", "forest", "knn"):
            raise ConfigError("classifier.model must be tree, forest or knn")
        if not 0.0 < self.classifier.train_fraction < 1.0:
            raise ConfigError("classifier.train_fraction must be in (0, 1)")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.scenario not in BUILTIN_SCENARIOS and not self.resolve(self.scenario).is_file():
            raise ConfigError(f"scenario file not found: {self.scenario}")
        for name in (self.classifier.dataset, self.classifier.model_file):
            if name is not None and not self.resolve(name).is_file():
                raise ConfigError(f"file not found: {name}")
        for t in self.map.techs:
            try:
                parse_tech_selection(t)
            except ValueError as e:
                raise ConfigError(str(e)) from None
        try:
            self.schedule()
            self.detector_config()
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from None

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("a seed is required (config 'seed' or --seed)")
        return int(self.seed)

    def load_scenario(self) -> Scenario:
        seed = self.require_seed()
        if self.scenario in BUILTIN_SCENARIOS:
            make, _ = BUILTIN_SCENARIOS[self.scenario]
            sc = make(seed=seed) if self.horizon_s is None else make(int(self.horizon_s * 1e6), seed=seed)
        else:
            try:
                sc = Scenario.load(self.resolve(self.scenario))
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
                raise ConfigError(f"bad scenario file {self.scenario}: {e}") from None
            if self.horizon_s is not None:
                sc.horizon_us = int(self.horizon_s * 1e6)
            sc.seed = seed
        return sc

    def node_positions(self) -> list[tuple[int, Position]]:
        spec = self.nodes
        if spec is None:
            spec = "office" if self.scenario not in BUILTIN_SCENARIOS else self.scenario
        if isinstance(spec, str):
            if spec not in BUILTIN_SCENARIOS:
                raise ConfigError(f"unknown node set {spec!r}")
            return BUILTIN_SCENARIOS[spec][1]()
        try:
            return [(int(n["id"]), Position(float(n["x"]), float(n["y"]))) for n in spec]
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"bad node list: {e}") from None

    def devices(self) -> list[DeviceModel]:
        seed = self.require_seed()
        try:
            return [make_device(i, p, seed, **self.device) for i, p in self.node_positions()]
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad device parameters: {e}") from None

    def schedule(self) -> ScanSchedule:
        return build_schedule(self.observation_us, self.period_us)

    def detector_config(self) -> DetectorConfig:
        d = dict(self.detector)
        if "offsets" in d:
            d["offsets"] = tuple(float(o) for o in d["offsets"])
        return DetectorConfig(**d)

    def map_techs(self) -> list[tuple[str, tuple[Technology, ...]]]:
        return [(t.lower(), parse_tech_selection(t)) for t in self.map.techs]


def _tuples(d: dict, cls) -> dict:
    """Lists from JSON become tuples for the tuple-typed fields."""
    names = {f.name for f in fields(cls)}
    bad = set(d) - names
    if bad:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(bad)}")
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
