"""Command-line entry point: simulate, train-eval, map, spectrogram, report-codec.

Exit status: 0 success, 1 usage or configuration error, 2 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .bursts import read_dataset, write_dataset
from .classifier import (
    Dataset,
    ablate_spectral_features,
    evaluate,
    load_model,
    mean_comparisons,
    measure_speed,
    metrics_to_csv,
    save_model,
    stratified_split,
    sweep_complexity,
    train_forest,
    train_knn,
    train_tree,
)
from .config import ConfigError, RunConfig
from .maps import (
    GridSpec,
    InterferenceReport,
    InterpolationError,
    NodeRegistry,
    NoDataError,
    ReportError,
    UnknownNodeError,
    build_tensor,
    power_map,
    read_reports,
    reports_from_classified,
    spectrogram,
    spectrogram_to_csv,
    write_reports,
)
from .radiometer import traces_to_csv
from .scene import Scenario, Technology, parse_tech_selection
from .simulation import (
    NodeRun,
    burst_samples_csv,
    classified_bursts,
    default_dataset,
    generate_ledger_for,
    label_runs,
    observe_nodes,
    truth_bursts,
)

log = logging.getLogger("itimap")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
DEFAULT_DATASET_SEED = 42


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


# -- flag parsing helpers ------------------------------------------------------

def _window(text: str) -> tuple[float, float]:
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected START,END in seconds") from None
    if b <= a or a < 0:
        raise argparse.ArgumentTypeError("window needs 0 <= START < END")
    return a, b


def _channels(text: str) -> tuple[int, ...]:
    out: set[int] = set()
    try:
        for part in text.split(","):
            if "-" in part:
                lo, hi = (int(v) for v in part.split("-"))
                out.update(range(lo, hi + 1))
            else:
                out.add(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError("expected channel indices like 0,3,5-7") from None
    if not out or min(out) < 0 or max(out) > 15:
        raise argparse.ArgumentTypeError("channel indices must lie in 0..15")
    return tuple(sorted(out))


def _techs(text: str) -> tuple[str, ...]:
    names = tuple(t.strip() for t in text.split(",") if t.strip())
    try:
        for n in names:
            parse_tech_selection(n)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None
    return names


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--window", type=_window, help="time window START,END in seconds")
    common.add_argument("--tech", type=_techs, help="technology or family names, comma separated")
    common.add_argument("--channels", type=_channels, help="channel indices 0-15, e.g. 0,3,5-7")
    common.add_argument("--bin-seconds", type=float, help="time-bin width in seconds")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="itimap", description="Interference identification and mapping pipeline.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("simulate", parents=[common], help="scene -> traces -> labeled dataset")
    te = sub.add_parser("train-eval", parents=[common], help="complexity sweep and SF ablation")
    te.add_argument("--dataset", type=Path, help="labeled dataset CSV (f1..f8,label)")
    mp = sub.add_parser("map", parents=[common], help="power maps and spectrograms")
    mp.add_argument("--reports", type=Path, help="read reports instead of simulating")
    sp = sub.add_parser("spectrogram", parents=[common], help="per-node spectrograms")
    sp.add_argument("--reports", type=Path, help="read reports instead of simulating")
    sp.add_argument("--node", type=int, action="append", help="node id (repeatable; default all)")
    rc = sub.add_parser("report-codec", parents=[common], help="encode/decode report files")
    rc.add_argument("action", choices=("encode", "decode"))
    rc.add_argument("path", type=Path, help="JSON report list (encode) or report stream (decode)")
    return p


def load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = str(args.out)
    if args.window is not None:
        cfg.map.window_s = args.window
    if args.tech is not None:
        cfg.map.techs = args.tech
    if args.channels is not None:
        cfg.map.channels = args.channels
    if args.bin_seconds is not None:
        cfg.map.bin_seconds = args.bin_seconds
    cfg.validate()
    return cfg


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


# -- simulate ------------------------------------------------------------------

@dataclass
class SimResult:
    scenario: Scenario
    devices: list
    runs: list[NodeRun]
    ledger: object


def _simulate(cfg: RunConfig, node_ids: Sequence[int] | None = None, keep_traces: bool = False) -> SimResult:
    scenario = cfg.load_scenario()
    devices = cfg.devices()
    if node_ids:
        unknown = set(node_ids) - {d.node_id for d in devices}
        if unknown:
            raise UnknownNodeError(f"unknown node ids {sorted(unknown)}")
        devices = [d for d in devices if d.node_id in set(node_ids)]
    ledger = generate_ledger_for(scenario)
    runs = observe_nodes(scenario, ledger, devices, cfg.schedule(), cfg.detector_config(), scenario.seed,
                         keep_traces=keep_traces, workers=cfg.workers)
    return SimResult(scenario, devices, runs, ledger)


def cmd_simulate(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    sim = _simulate(cfg, keep_traces=cfg.traces == "all")
    detector = cfg.detector_config()
    rows, dropped = label_runs(sim.runs, sim.scenario, sim.ledger, sim.devices, detector)
    sim.ledger.to_csv(out / "ledger.csv")
    if cfg.traces == "all":
        traces_to_csv([t for r in sim.runs for t in r.traces], out / "traces.csv")
    elif cfg.traces == "bursts":
        period = sim.devices[0].sample_period if sim.devices else 50.0
        burst_samples_csv(sim.runs, period, out / "traces.csv")
    write_dataset(rows, out / "dataset.csv")
    counts = {t.name: 0 for t in Technology}
    for r in rows:
        counts[r.label.name] += 1
    summary = {
        "scenario": cfg.scenario,
        "seed": sim.scenario.seed,
        "horizon_s": sim.scenario.horizon_us / 1e6,
        "nodes": len(sim.devices),
        "bursts_generated": len(sim.ledger),
        "bursts_detected": sum(len(r.bursts()) for r in sim.runs),
        "bursts_labeled": len(rows),
        "bursts_dropped": dropped,
        "labels": counts,
        "duty_cycle": cfg.schedule().duty_cycle,
    }
    _write_json(out / "summary.json", summary)
    print(f"bursts generated {summary['bursts_generated']}, detected {summary['bursts_detected']}, "
          f"labeled {summary['bursts_labeled']} (dropped {dropped}); duty cycle {summary['duty_cycle']:.2f}")
    return EXIT_OK


# -- train-eval ----------------------------------------------------------------

def _load_dataset(cfg: RunConfig, path: Path | None) -> Dataset:
    if path is None and cfg.classifier.dataset:
        path = cfg.resolve(cfg.classifier.dataset)
    if path is None:
        path = Path(cfg.out) / "dataset.csv"
    if not Path(path).is_file():
        raise ConfigError(f"dataset not found: {path}")
    try:
        rows = read_dataset(path)
    except (ValueError, KeyError) as e:
        raise DataError(f"bad dataset {path}: {e}") from None
    if not rows:
        raise DataError("dataset is empty; need ≥ 2 classes")
    data = Dataset.from_rows(rows)
    if len(data.classes) < 2:
        raise DataError("need ≥ 2 classes")
    return data


def cmd_train_eval(cfg: RunConfig, dataset: Path | None) -> int:
    seed = cfg.require_seed()
    data = _load_dataset(cfg, dataset)
    out = _out_dir(cfg)
    c = cfg.classifier
    train, test = stratified_split(data, c.train_fraction, seed)
    if len(test) == 0 or len(train.classes) < 2:
        raise DataError("too few rows for a stratified split with >= 2 training classes")
    rows = sweep_complexity(train, test, c.splits_list, c.forest_sizes, knn_k=c.knn_k, seed=seed, speed_repeats=0)
    acc_with, acc_without = ablate_spectral_features(train, test, c.max_splits, seed)
    models = []
    timing = []
    for m in rows:
        kind = m.params["model"]
        if kind == "tree":
            model = train_tree(train, m.params["max_splits"], seed)
        elif kind == "forest":
            model = train_forest(train, m.params["n_trees"], None, seed)
        else:
            model = train_knn(train, m.params["k"])
        m.params["comparisons_per_burst"] = mean_comparisons(model, test.X)
        models.append(m.to_dict(include_speed=False))
        if c.speed_repeats:
            timing.append((m.label, measure_speed(model, test.X, c.speed_repeats)))
    metrics = {
        "n_train": len(train),
        "n_test": len(test),
        "seed": seed,
        "ablation": {"max_splits": c.max_splits, "accuracy_with_sf": acc_with,
                     "accuracy_without_sf": acc_without, "gain": acc_with - acc_without},
        "models": models,
    }
    _write_json(out / "metrics.json", metrics)
    metrics_to_csv(rows, out / "frontier.csv", include_speed=False)
    with open(out / "recall.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("label", *(t.name for t in Technology)))
        for m in rows:
            w.writerow((m.label, *(f"{m.recall[t]:.6f}" if t in m.recall else "" for t in Technology)))
    if timing:
        # wall-clock throughput is the one output that is not reproducible byte for byte
        with open(out / "timing.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(("label", "speed_kbps"))
            for label, bps in timing:
                w.writerow((label, f"{bps / 1e3:.3f}"))
    save_model(train_tree(train, c.max_splits, seed), out / "model.json")
    for m in rows:
        print(f"{m.label:<10} accuracy {m.accuracy:.3f}")
    print(f"SF ablation (s={c.max_splits}): with {acc_with:.3f}, without {acc_without:.3f}, "
          f"gain {acc_with - acc_without:+.3f}")
    return EXIT_OK


# -- map / spectrogram ---------------------------------------------------------

def _classifier(cfg: RunConfig):
    c = cfg.classifier
    if c.model_file:
        return load_model(cfg.resolve(c.model_file))
    if c.dataset:
        data = Dataset.from_rows(read_dataset(cfg.resolve(c.dataset)))
    else:
        rows, _ = default_dataset(DEFAULT_DATASET_SEED)
        data = Dataset.from_rows(rows)
    seed = cfg.require_seed()
    if c.model == "forest":
        return train_forest(data, c.forest_sizes[0], None, seed)
    if c.model == "knn":
        return train_knn(data, c.knn_k[0])
    return train_tree(data, c.max_splits, seed)


def _reports(cfg: RunConfig, reports_path: Path | None, node_ids=None) -> tuple[list[InterferenceReport], int | None]:
    """Reports from a stream file or from a simulate-through run; also the horizon when known."""
    if reports_path is not None:
        if not reports_path.is_file():
            raise ConfigError(f"reports file not found: {reports_path}")
        reports = read_reports(reports_path)
        if node_ids:
            reports = [r for r in reports if r.node_id in set(node_ids)]
        return reports, None
    sim = _simulate(cfg, node_ids)
    schedule = cfg.schedule()
    if cfg.map.labels == "truth":
        grouped = truth_bursts(sim.runs, sim.scenario, sim.ledger, sim.devices, cfg.detector_config())
    else:
        grouped = classified_bursts(sim.runs, _classifier(cfg))
    return reports_from_classified(grouped, schedule), sim.scenario.horizon_us


def _tensor(cfg: RunConfig, reports, horizon_us):
    registry = NodeRegistry.from_pairs(cfg.node_positions())
    bin_us = int(round(cfg.map.bin_seconds * 1e6))
    try:
        return build_tensor(reports, registry, bin_us=bin_us, scan_period_us=cfg.period_us,
                            observation_time=cfg.observation_us, horizon_us=horizon_us)
    except ValueError as e:
        if isinstance(e, ReportError):
            raise
        raise ConfigError(str(e)) from None


def _window_us(cfg: RunConfig):
    w = cfg.map.window_s
    return None if w is None else (int(round(w[0] * 1e6)), int(round(w[1] * 1e6)))


def cmd_map(cfg: RunConfig, reports_path: Path | None) -> int:
    cfg.require_seed()
    out = _out_dir(cfg)
    reports, horizon = _reports(cfg, reports_path)
    write_reports(reports, out / "reports.bin")
    tensor = _tensor(cfg, reports, horizon)
    tensor.to_csv(out / "tensor.csv")
    area = cfg.load_scenario().area
    grid = GridSpec.over(area, cfg.map.cell_m)
    for name, techs in cfg.map_techs():
        m = power_map(tensor, techs, grid, _window_us(cfg), cfg.map.channels)
        stem = out / f"map_{name}"
        m.to_csv(stem.with_suffix(".csv"))
        m.to_json(stem.with_suffix(".json"))
        m.to_pgm(stem.with_suffix(".pgm"))
        x, y = m.argmax_position()
        print(f"{name}: peak {np.nanmax(np.where(m.mask, np.nan, m.values)):.1f} dBm at ({x:.2f}, {y:.2f}) m")
        _write_spectrograms(tensor, techs, name, out, cfg.map.bin_seconds)
    return EXIT_OK


def _write_spectrograms(tensor, techs, name: str, out: Path, bin_seconds: float, node_ids=None) -> None:
    for nid in node_ids or tensor.registry.node_ids:
        power, busy = spectrogram(tensor, nid, techs)
        spectrogram_to_csv(power, bin_seconds, out / f"spectrogram_node{nid}_{name}_power.csv")
        spectrogram_to_csv(busy, bin_seconds, out / f"spectrogram_node{nid}_{name}_busy.csv", "{:.6f}")


def cmd_spectrogram(cfg: RunConfig, reports_path: Path | None, nodes: list[int] | None) -> int:
    cfg.require_seed()
    out = _out_dir(cfg)
    node_ids = nodes or (list(cfg.map.nodes) if cfg.map.nodes else None)
    reports, horizon = _reports(cfg, reports_path, node_ids)
    tensor = _tensor(cfg, reports, horizon)
    for nid in node_ids or []:
        tensor.registry.index(nid)
    for name, techs in cfg.map_techs():
        _write_spectrograms(tensor, techs, name, out, cfg.map.bin_seconds, node_ids)
    print(f"{tensor.n_bins} bins of {cfg.map.bin_seconds:g} s for {len(node_ids or tensor.registry.node_ids)} node(s)")
    return EXIT_OK


# -- report-codec --------------------------------------------------------------

def cmd_report_codec(cfg: RunConfig, action: str, path: Path) -> int:
    if not path.is_file():
        raise ConfigError(f"file not found: {path}")
    if action == "decode":
        print(json.dumps([r.to_dict() for r in read_reports(path)], indent=1))
        return EXIT_OK
    try:
        items = json.loads(path.read_text())
        reports = [InterferenceReport.from_dict(d) for d in items]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        if isinstance(e, ReportError):
            raise
        raise DataError(f"bad report JSON: {e}") from None
    out = _out_dir(cfg)
    n = write_reports(reports, out / "reports.bin")
    print(f"wrote {len(reports)} report(s), {n} bytes")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "train-eval":
            return cmd_train_eval(cfg, args.dataset)
        if args.command == "map":
            return cmd_map(cfg, args.reports)
        if args.command == "spectrogram":
            return cmd_spectrogram(cfg, args.reports, args.node)
        return cmd_report_codec(cfg, args.action, args.path)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, NoDataError, InterpolationError, ReportError, UnknownNodeError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"data error: {msg}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
