"""Remnant-free rectangular tiling of a cloud into profile-section tiles,
forest-mode coordinate stretching, and tile-bundle export/import.

Strips run along the bounding box's longer axis by default.  The grid divides
each axis into ``max(1, round(extent/target))`` congruent tiles (round ties go
to fewer, larger tiles), so border tiles are never remnants.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from ._fsio import atomic_write_text
from .cloud import PointCloud, read_cloud, write_cloud
from .dtm import DtmRaster, read_esri_ascii, write_esri_ascii

_TILE_ID_RE = re.compile(r"^r(\d+)_c(\d+)$")


@dataclass(frozen=True)
class TileSpec:
    """Desired tile geometry; lengths are targets, the planner keeps tiles congruent."""

    target_length: float = 60.0
    target_depth: float = 10.0
    stretch_factor: float = 1.0
    orientation: str = "auto"  # "auto" | "x" | "y": axis the strips run along

    def __post_init__(self):
        if not (self.target_length > 0 and self.target_depth > 0):
            raise ValueError("tile targets must be > 0")
        if not (self.stretch_factor >= 1):
            raise ValueError("stretch_factor must be >= 1")
        if self.orientation not in ("auto", "x", "y"):
            raise ValueError("orientation must be auto, x or y")


@dataclass(frozen=True)
class TilePlan:
    origin_x: float
    origin_y: float
    n_len: int
    n_depth: int
    tile_length: float
    tile_depth: float
    length_axis: str  # "x" or "y"

    @property
    def n_tiles(self) -> int:
        return self.n_len * self.n_depth

    def boundaries(self) -> tuple[np.ndarray, np.ndarray]:
        """(x boundaries, y boundaries) of the grid, length n+1 per axis."""
        bl = self.origin_x if self.length_axis == "x" else self.origin_y
        bd = self.origin_y if self.length_axis == "x" else self.origin_x
        len_b = bl + np.arange(self.n_len + 1) * self.tile_length
        dep_b = bd + np.arange(self.n_depth + 1) * self.tile_depth
        return (len_b, dep_b) if self.length_axis == "x" else (dep_b, len_b)


@dataclass(frozen=True)
class Tile:
    tile_id: str
    row: int
    col: int
    bounds: tuple[float, float, float, float]  # world frame (xmin, ymin, xmax, ymax)
    stretch_factor: float
    points: PointCloud = field(repr=False)
    dtm_patch: DtmRaster | None = field(repr=False, default=None)


def _axis_count(extent: float, target: float) -> int:
    # round(extent/target) with ties toward the smaller count (larger tiles)
    return max(1, math.ceil(extent / target - 0.5))


def plan_grid(bbox: tuple[float, float, float, float], spec: TileSpec) -> TilePlan:
    """Plan a congruent tile grid over the bbox; remnant tiles never occur."""
    xmin, ymin, xmax, ymax = bbox
    ex, ey = xmax - xmin, ymax - ymin
    if not (ex > 0 and ey > 0):
        raise ValueError(f"degenerate bbox extents {ex} x {ey}")
    if spec.orientation == "auto":
        length_axis = "x" if ex >= ey else "y"
    else:
        length_axis = spec.orientation
    e_len, e_dep = (ex, ey) if length_axis == "x" else (ey, ex)
    n_len = _axis_count(e_len, spec.target_length)
    n_depth = _axis_count(e_dep, spec.target_depth)
    return TilePlan(
        origin_x=xmin,
        origin_y=ymin,
        n_len=n_len,
        n_depth=n_depth,
        tile_length=e_len / n_len,
        tile_depth=e_dep / n_depth,
        length_axis=length_axis,
    )


def assign_to_grid(plan: TilePlan, x, y) -> tuple[np.ndarray, np.ndarray]:
    """(row, col) per point: half-open intervals, last tile per axis closed.

    row indexes the depth axis, col the length axis.  Boundary membership is
    decided against the same computed boundary values everywhere, so points
    exactly on an interior boundary always go to the higher-index tile.
    """
    bx, by = plan.boundaries()
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    ix = np.clip(np.searchsorted(bx, x, side="right") - 1, 0, len(bx) - 2)
    iy = np.clip(np.searchsorted(by, y, side="right") - 1, 0, len(by) - 2)
    return (iy, ix) if plan.length_axis == "x" else (ix, iy)


def cut_tiles(cloud: PointCloud, plan: TilePlan, dtm: DtmRaster | None = None) -> list[Tile]:
    """Partition the cloud into plan order tiles (row-major, every tile emitted)."""
    bx, by = plan.boundaries()
    if len(cloud):
        rows, cols = assign_to_grid(plan, cloud.xyz[:, 0], cloud.xyz[:, 1])
    else:
        rows = cols = np.empty(0, dtype=np.int64)
    n_rows = plan.n_depth if plan.length_axis == "x" else plan.n_len
    n_cols = plan.n_len if plan.length_axis == "x" else plan.n_depth
    tiles = []
    for r in range(n_rows):
        for c in range(n_cols):
            bounds = (float(bx[c]), float(by[r]), float(bx[c + 1]), float(by[r + 1]))
            members = np.flatnonzero((rows == r) & (cols == c))
            patch = dtm.crop(bounds, apron_cells=1) if dtm is not None else None
            tiles.append(
                Tile(
                    tile_id=f"r{r:03d}_c{c:03d}",
                    row=r,
                    col=c,
                    bounds=bounds,
                    stretch_factor=1.0,
                    points=cloud.select(members),
                    dtm_patch=patch,
                )
            )
    return tiles


def apply_stretch(tile: Tile, factor: float) -> Tile:
    """Stretch xy about the tile bounds minimum; z untouched, world bounds kept."""
    if not (factor >= 1):
        raise ValueError("stretch factor must be >= 1")
    if tile.stretch_factor != 1.0:
        raise ValueError("tile is already stretched")
    if factor == 1.0:
        return tile
    x0, y0 = tile.bounds[0], tile.bounds[1]
    xyz = tile.points.xyz.copy()
    xyz[:, 0] = x0 + factor * (xyz[:, 0] - x0)
    xyz[:, 1] = y0 + factor * (xyz[:, 1] - y0)
    return replace(tile, stretch_factor=factor, points=PointCloud(xyz, tile.points.rgb))


def unstretch_annotation(x: float, y: float, tile: Tile) -> tuple[float, float]:
    """Map a stretched tile-frame annotation back to world coordinates."""
    f = tile.stretch_factor
    x0, y0 = tile.bounds[0], tile.bounds[1]
    return (x0 + (x - x0) / f, y0 + (y - y0) / f)


def export_tile_bundle(tile: Tile, directory) -> str:
    """Write manifest.json + points.xyz + dtm.asc for one tile; returns the manifest path."""
    from pathlib import Path

    if tile.dtm_patch is None:
        raise ValueError("tile has no DTM patch; bundles require one")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    points_path = directory / "points.xyz"
    write_cloud(tile.points, points_path)
    write_esri_ascii(tile.dtm_patch, directory / "dtm.asc")
    manifest = {
        "tile_id": tile.tile_id,
        "bounds": [round(v, 6) for v in tile.bounds],
        "stretch_factor": tile.stretch_factor,
        "point_count": len(tile.points),
        "points_file": "points.xyz",
        "dtm_file": "dtm.asc",
    }
    manifest_path = directory / "manifest.json"
    atomic_write_text(manifest_path, json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return str(manifest_path)


def import_tile_bundle(directory) -> Tile:
    """Rebuild a Tile from its exported bundle."""
    from pathlib import Path

    directory = Path(directory)
    with open(directory / "manifest.json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    m = _TILE_ID_RE.match(manifest["tile_id"])
    row, col = (int(m.group(1)), int(m.group(2))) if m else (0, 0)
    points = read_cloud(directory / manifest["points_file"], format="ascii-xyzrgb")
    patch = read_esri_ascii(directory / manifest["dtm_file"])
    return Tile(
        tile_id=manifest["tile_id"],
        row=row,
        col=col,
        bounds=tuple(float(v) for v in manifest["bounds"]),
        stretch_factor=float(manifest["stretch_factor"]),
        points=points,
        dtm_patch=patch,
    )
