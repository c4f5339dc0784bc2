"""Natural-neighbor (Sibson) interpolation on a regular grid.

Sibson weights are estimated by rasterization: a pixel is stolen by the
query point when it is strictly closer to the query than to every node, and
node i's weight is the share of stolen pixels whose nearest node is i.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.spatial import ConvexHull, Delaunay, QhullError, Voronoi, cKDTree

from ..scene import Area
from .tensor import NodeRegistry

DEFAULT_CELL_M = 0.5
RASTER_FACTOR = 4
# Cap on pixels per query; sliver triangles near the hull can give new
# Voronoi cells far larger than the grid, and there the pitch is coarsened.
MAX_QUERY_PIXELS = 1 << 20


class InterpolationError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Cell-centered grid: cell (i, j) has center origin + ((i + 0.5) * cell, (j + 0.5) * cell)."""

    origin: tuple[float, float]
    cell: float
    nx: int
    ny: int

    def __post_init__(self) -> None:
        if self.cell <= 0 or self.nx < 1 or self.ny < 1:
            raise ValueError("grid needs a positive cell size and at least one cell")

    @classmethod
    def over(cls, area: Area, cell: float = DEFAULT_CELL_M) -> "GridSpec":
        return cls((0.0, 0.0), cell, max(1, int(round(area.width_m / cell))), max(1, int(round(area.height_m / cell))))

    def centers(self) -> np.ndarray:
        """(ny * nx, 2) cell centers, row-major with y as the row index."""
        xs = self.origin[0] + (np.arange(self.nx) + 0.5) * self.cell
        ys = self.origin[1] + (np.arange(self.ny) + 0.5) * self.cell
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])

    def to_dict(self) -> dict:
        return {"origin": list(self.origin), "cell": self.cell, "nx": self.nx, "ny": self.ny}


def _check_geometry(xy: np.ndarray) -> None:
    if len(xy) < 3:
        raise InterpolationError(
            f"natural-neighbor interpolation needs >= 3 non-collinear nodes, got {len(xy)}; "
            "use nearest-neighbor mode instead")
    try:
        ConvexHull(xy)
    except QhullError:
        raise InterpolationError(
            "natural-neighbor interpolation needs >= 3 non-collinear nodes; "
            "use nearest-neighbor mode instead") from None


class NaturalNeighbor:
    """Discrete Sibson interpolator over fixed node positions.

    ``step`` is the raster pitch in meters; pixel centers sit on the global
    lattice (k + 0.5) * step so results do not depend on the query order.
    """

    def __init__(self, xy: np.ndarray, step: float):
        self.xy = np.asarray(xy, dtype=float)
        if step <= 0:
            raise ValueError("raster step must be positive")
        _check_geometry(self.xy)
        self.step = float(step)
        self.tri = Delaunay(self.xy)
        self.kd = cKDTree(self.xy)
        self.scale = float(np.ptp(self.xy, axis=0).max())

    def inside(self, pts: np.ndarray) -> np.ndarray:
        return self.tri.find_simplex(np.atleast_2d(pts)) >= 0

    def nearest(self, pts: np.ndarray) -> np.ndarray:
        return self.kd.query(np.atleast_2d(pts))[1]

    def _cell_box(self, q: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
        try:
            vor = Voronoi(np.vstack([self.xy, q]))
        except QhullError:
            return None
        region = vor.regions[vor.point_region[-1]]
        if not region or -1 in region:
            return None
        verts = vor.vertices[region]
        return verts.min(axis=0), verts.max(axis=0)

    def weights(self, q) -> tuple[np.ndarray, np.ndarray]:
        """(node indices, weights) for one in-hull query point."""
        q = np.asarray(q, dtype=float)
        d, k = self.kd.query(q)
        if d <= 1e-12 * max(self.scale, 1.0):
            return np.array([k]), np.array([1.0])
        box = self._cell_box(q)
        if box is None:
            return np.array([k]), np.array([1.0])
        h = self.step
        n_pix = float(np.prod((box[1] - box[0]) / h + 2))
        if n_pix > MAX_QUERY_PIXELS:
            h *= 2.0 ** math.ceil(0.5 * math.log2(n_pix / MAX_QUERY_PIXELS))
        lo = np.floor(box[0] / h - 0.5).astype(int)
        hi = np.ceil(box[1] / h - 0.5).astype(int)
        px = (np.arange(lo[0], hi[0] + 1) + 0.5) * h
        py = (np.arange(lo[1], hi[1] + 1) + 0.5) * h
        gx, gy = np.meshgrid(px, py)
        p = np.column_stack([gx.ravel(), gy.ravel()])
        dq = np.sum((p - q) ** 2, axis=1)
        dn, owner = self.kd.query(p)
        stolen = dq < dn * dn
        if not stolen.any():
            return np.array([k]), np.array([1.0])
        counts = np.bincount(owner[stolen], minlength=len(self.xy))
        idx = np.flatnonzero(counts)
        return idx, counts[idx] / counts.sum()

    def __call__(self, values: np.ndarray, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Interpolated values at ``pts`` and a mask that is True outside the hull."""
        values = np.asarray(values, dtype=float)
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        outside = ~self.inside(pts)
        out = values[self.nearest(pts)].astype(float)
        for i in np.flatnonzero(~outside):
            idx, w = self.weights(pts[i])
            out[i] = values[idx[0]] if len(idx) == 1 else float(np.dot(w, values[idx]))
        return out, outside


@dataclass
class SpatialMap:
    """Interpolated field on a grid; ``mask`` is True for cells outside the node hull."""

    grid: GridSpec
    values: np.ndarray
    mask: np.ndarray
    units: str = "dBm"
    node_values: dict[int, float] = field(default_factory=dict)

    def argmax_position(self, in_hull_only: bool = True) -> tuple[float, float]:
        v = np.where(self.mask, -np.inf, self.values) if in_hull_only else self.values
        j, i = np.unravel_index(int(np.argmax(v)), v.shape)
        return (self.grid.origin[0] + (i + 0.5) * self.grid.cell, self.grid.origin[1] + (j + 0.5) * self.grid.cell)

    def to_csv(self, path: str | Path) -> None:
        np.savetxt(path, self.values, delimiter=",", fmt="%.4f")

    def sidecar(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "units": self.units,
            "mask": self.mask.astype(int).tolist(),
            "node_values": {str(k): v for k, v in self.node_values.items()},
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.sidecar(), indent=1))

    def to_pgm(self, path: str | Path) -> None:
        """Plain (P2) grayscale heatmap; brightest = maximum, top row = highest y."""
        v = self.values[::-1]
        lo, hi = float(np.nanmin(v)), float(np.nanmax(v))
        scale = 255.0 / (hi - lo) if hi > lo else 0.0
        g = np.clip(np.rint((v - lo) * scale), 0, 255).astype(int)
        lines = ["P2", f"{g.shape[1]} {g.shape[0]}", "255"]
        lines += [" ".join(map(str, row)) for row in g]
        Path(path).write_text("\n".join(lines) + "\n")


def _node_xy(ids, registry: NodeRegistry) -> np.ndarray:
    return np.array([[registry.positions[i].x, registry.positions[i].y] for i in ids], dtype=float)


def natural_neighbor(
    values: Mapping[int, float],
    registry: NodeRegistry,
    grid: GridSpec,
    *,
    linear_power: bool = True,
    mode: str = "natural",
    raster_factor: int = RASTER_FACTOR,
) -> SpatialMap:
    """Interpolate per-node ``values`` over ``grid``.

    With ``linear_power`` the values are dBm and are averaged as mW. ``mode``
    "nearest" skips Sibson weights entirely (for fewer than 3 nodes).
    """
    ids = sorted(values)
    if not ids:
        raise InterpolationError("no node values to interpolate")
    missing = [i for i in ids if i not in registry]
    if missing:
        raise InterpolationError(f"unregistered nodes {missing}")
    xy = _node_xy(ids, registry)
    v = np.array([float(values[i]) for i in ids])
    if not np.all(np.isfinite(v)):
        raise InterpolationError("node values must be finite")
    work = 10.0 ** (v / 10.0) if linear_power else v
    pts = grid.centers()
    if mode == "nearest":
        out = work[cKDTree(xy).query(pts)[1]]
        mask = np.ones(len(pts), dtype=bool)
        if len(ids) >= 3:
            try:
                mask = Delaunay(xy).find_simplex(pts) < 0
            except QhullError:
                pass
    elif mode == "natural":
        nn = NaturalNeighbor(xy, grid.cell / raster_factor)
        out, mask = nn(work, pts)
    else:
        raise ValueError(f"unknown interpolation mode {mode!r}")
    if linear_power:
        out = 10.0 * np.log10(out)
    return SpatialMap(grid, out.reshape(grid.ny, grid.nx), mask.reshape(grid.ny, grid.nx),
                      "dBm" if linear_power else "", dict(zip(ids, v.tolist())))


def interpolate_at(
    values: Mapping[int, float],
    registry: NodeRegistry,
    points,
    *,
    step: float = DEFAULT_CELL_M / RASTER_FACTOR,
    linear_power: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Natural-neighbor values at arbitrary points; returns (values, outside-hull mask)."""
    ids = sorted(values)
    v = np.array([float(values[i]) for i in ids])
    nn = NaturalNeighbor(_node_xy(ids, registry), step)
    if linear_power:
        out, mask = nn(10.0 ** (v / 10.0), points)
        # node hits return the stored value exactly, not a dB round trip
        dist, near = nn.kd.query(np.atleast_2d(points))
        res = 10.0 * np.log10(out)
        hit = dist <= 1e-12 * max(nn.scale, 1.0)
        res[hit] = v[near[hit]]
        return res, mask
    return nn(v, points)
