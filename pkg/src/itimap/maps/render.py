"""Power maps and per-node spectrograms from an InterferenceTensor."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from ..scene import Technology
from .interp import GridSpec, InterpolationError, SpatialMap, natural_neighbor
from .report import N_CHANNELS
from .tensor import POWER_UNIT_MW, InterferenceTensor

NO_DATA = "nodata"


class NoDataError(ValueError):
    pass


def _bin_slice(tensor: InterferenceTensor, window_us: tuple[int, int] | None) -> slice:
    if window_us is None:
        return slice(0, tensor.n_bins)
    t0, t1 = window_us
    if t1 <= t0:
        raise ValueError("time window must have end > start")
    b0 = tensor.bin_of(t0)
    b1 = -(-int(t1) // tensor.bin_us)
    if b0 >= tensor.n_bins or b1 <= b0:
        raise NoDataError("no data in window")
    return slice(b0, min(b1, tensor.n_bins))


def node_power(
    tensor: InterferenceTensor,
    techs: Sequence[Technology],
    window_us: tuple[int, int] | None = None,
    channels: Sequence[int] | None = None,
) -> dict[int, float]:
    """Per-node count-weighted linear-mean power in dBm over the selection; empty nodes omitted."""
    sl = _bin_slice(tensor, window_us)
    ch = list(range(N_CHANNELS)) if channels is None else sorted(set(int(c) for c in channels))
    tk = sorted({int(t) for t in techs})
    power = tensor.power_units[sl][:, ch][:, :, tk]
    count = tensor.count[sl][:, ch][:, :, tk]
    psum = power.sum(axis=(0, 1, 2))
    csum = count.sum(axis=(0, 1, 2))
    out = {}
    for n, nid in enumerate(tensor.registry.node_ids):
        if csum[n] > 0:
            out[nid] = float(10.0 * np.log10(psum[n] * POWER_UNIT_MW / csum[n]))
    return out


def power_map(
    tensor: InterferenceTensor,
    techs: Technology | Sequence[Technology],
    grid: GridSpec,
    window_us: tuple[int, int] | None = None,
    channels: Sequence[int] | None = None,
) -> SpatialMap:
    """Natural-neighbor map of per-node mean power for ``techs`` over the selection."""
    if isinstance(techs, Technology):
        techs = (techs,)
    values = node_power(tensor, techs, window_us, channels)
    if not values:
        raise NoDataError("no data in window")
    if len(values) < 3:
        raise InterpolationError(
            f"only {len(values)} node(s) have data; natural-neighbor interpolation needs >= 3")
    return natural_neighbor(values, tensor.registry, grid, linear_power=True)


def spectrogram(
    tensor: InterferenceTensor, node_id: int, tech: Technology | Sequence[Technology]
) -> tuple[np.ndarray, np.ndarray]:
    """(power dBm, busy fraction) matrices of shape (bins, 16); NaN marks cells without bursts.

    A sequence of technologies (e.g. the WLAN family) is pooled: counts,
    linear power and busy time are summed before rendering.
    """
    n = tensor.registry.index(node_id)
    tk = [int(tech)] if isinstance(tech, Technology) else sorted({int(t) for t in tech})
    count = tensor.count[:, :, tk, n].sum(axis=2)
    units = tensor.power_units[:, :, tk, n].sum(axis=2)
    busy = tensor.busy_us[:, :, tk, n].sum(axis=2) / float(tensor.observation_time * tensor.scans_per_bin)
    power = np.full(count.shape, np.nan)
    has = count > 0
    power[has] = 10.0 * np.log10(units[has] * POWER_UNIT_MW / count[has])
    busy[~has] = np.nan
    return power, busy


def spectrogram_to_csv(matrix: np.ndarray, bin_seconds: float, path: str | Path, fmt: str = "{:.3f}") -> None:
    """One row per time bin: bin,t_start_s,ch0..ch15; cells without bursts read ``nodata``."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("bin", "t_start_s", *(f"ch{c}" for c in range(matrix.shape[1]))))
        for b, row in enumerate(matrix):
            w.writerow((b, f"{b * bin_seconds:g}", *(NO_DATA if np.isnan(v) else fmt.format(v) for v in row)))
