"""Point-cloud data model: ASCII I/O, subsampling, height above ground,
pseudo-colorization and the view-preparation crops used by the annotation tool."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._fsio import atomic_writer
from .dtm import DtmRaster
from .errors import CloudParseError, OutOfCoverageError

DEFAULT_VOXEL_SPACING = 0.20


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class ColoredPoint:
    position: Point3
    r: int
    g: int
    b: int


@dataclass(frozen=True)
class ViewParams:
    """Parameters of the detail crop, ground mask and color ramp."""

    detail_radius: float = 5.0
    ground_mask_fraction: float = 0.05
    color_h_min: float = 0.0
    color_h_max: float = 30.0

    def __post_init__(self):
        if not (self.detail_radius > 0):
            raise ValueError("detail_radius must be > 0")
        if not (0 <= self.ground_mask_fraction < 1):
            raise ValueError("ground_mask_fraction must be in [0, 1)")
        if not (self.color_h_min < self.color_h_max):
            raise ValueError("color_h_min must be < color_h_max")


@dataclass(frozen=True)
class PointCloud:
    """Ordered colored points; index identity is used for deterministic tie-breaks."""

    xyz: np.ndarray = field(repr=False)  # (n, 3) float64
    rgb: np.ndarray = field(repr=False)  # (n, 3) uint8

    def __post_init__(self):
        xyz = np.ascontiguousarray(np.asarray(self.xyz, dtype=np.float64)).reshape(-1, 3)
        rgb = np.ascontiguousarray(np.asarray(self.rgb, dtype=np.uint8)).reshape(-1, 3)
        if len(xyz) != len(rgb):
            raise ValueError("xyz and rgb must have the same length")
        if not np.isfinite(xyz).all():
            raise ValueError("all coordinates must be finite")
        object.__setattr__(self, "xyz", xyz)
        object.__setattr__(self, "rgb", rgb)

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.empty((0, 3)), np.empty((0, 3), dtype=np.uint8))

    @classmethod
    def from_xyz(cls, xyz, rgb=None) -> "PointCloud":
        xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
        if rgb is None:
            rgb = np.zeros_like(xyz, dtype=np.uint8)
        return cls(xyz, rgb)

    def __len__(self) -> int:
        return len(self.xyz)

    def point(self, i: int) -> ColoredPoint:
        x, y, z = self.xyz[i]
        r, g, b = self.rgb[i]
        return ColoredPoint(Point3(float(x), float(y), float(z)), int(r), int(g), int(b))

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray] | None:
        """(min, max) corner arrays, or None for the empty cloud."""
        if len(self) == 0:
            return None
        return self.xyz.min(axis=0), self.xyz.max(axis=0)

    def select(self, indices) -> "PointCloud":
        return PointCloud(self.xyz[indices], self.rgb[indices])

    def with_colors(self, rgb: np.ndarray) -> "PointCloud":
        return PointCloud(self.xyz, rgb)


def read_cloud(path, format: str = "auto") -> PointCloud:
    """Read an ASCII cloud: one `x y z [r g b]` record per line, `#` comments skipped.

    ``format`` is one of ``ascii-xyz``, ``ascii-xyzrgb`` or ``auto`` (sniff from
    the first data line).  xyz-only input gets color (0, 0, 0).
    """
    if format not in ("auto", "ascii-xyz", "ascii-xyzrgb"):
        raise ValueError(f"unknown cloud format {format!r}")
    expected = {"ascii-xyz": 3, "ascii-xyzrgb": 6}.get(format)
    coords: list[tuple[float, float, float]] = []
    colors: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if expected is None:
                if len(fields) not in (3, 6):
                    raise CloudParseError(path, line_no, f"expected 3 or 6 fields, got {len(fields)}")
                expected = len(fields)
            if len(fields) != expected:
                raise CloudParseError(path, line_no, f"expected {expected} fields, got {len(fields)}")
            try:
                x, y, z = (float(f) for f in fields[:3])
            except ValueError:
                raise CloudParseError(path, line_no, f"non-numeric coordinate in {line!r}") from None
            if expected == 6:
                try:
                    r, g, b = (int(round(float(f))) for f in fields[3:])
                except ValueError:
                    raise CloudParseError(path, line_no, f"non-numeric color in {line!r}") from None
                if not all(0 <= c <= 255 for c in (r, g, b)):
                    raise CloudParseError(path, line_no, "color channel outside 0..255")
            else:
                r = g = b = 0
            coords.append((x, y, z))
            colors.append((r, g, b))
    if not coords:
        return PointCloud.empty()
    return PointCloud(np.array(coords), np.array(colors, dtype=np.uint8))


def write_cloud(cloud: PointCloud, path, decimals: int = 6) -> None:
    """Write the xyzrgb ASCII format (LF line endings, fixed decimals, atomic)."""
    with atomic_writer(path) as fh:
        for (x, y, z), (r, g, b) in zip(cloud.xyz, cloud.rgb):
            fh.write(f"{x:.{decimals}f} {y:.{decimals}f} {z:.{decimals}f} {r} {g} {b}\n")


def voxel_subsample(cloud: PointCloud, spacing: float = DEFAULT_VOXEL_SPACING) -> PointCloud:
    """One representative point per occupied voxel.

    Voxels live on the global lattice ``floor(coord / spacing)`` so that
    re-subsampling at the same spacing is exactly idempotent.  The
    representative is the point nearest its voxel centre; ties go to the
    lowest input index.  Output keeps input order.
    """
    if not (spacing > 0):
        raise ValueError("spacing must be > 0")
    n = len(cloud)
    if n <= 1:
        return cloud
    idx = np.floor(cloud.xyz / spacing).astype(np.int64)
    centers = (idx + 0.5) * spacing
    d2 = ((cloud.xyz - centers) ** 2).sum(axis=1)
    _, group = np.unique(idx, axis=0, return_inverse=True)
    order = np.lexsort((np.arange(n), d2, group))
    first_of_group = np.ones(len(order), dtype=bool)
    first_of_group[1:] = group[order][1:] != group[order][:-1]
    keep = np.sort(order[first_of_group])
    return cloud.select(keep)


def height_above_ground(cloud: PointCloud, dtm: DtmRaster) -> np.ndarray:
    """Per-point z minus the interpolated terrain elevation underneath it."""
    if len(cloud) == 0:
        return np.empty(0)
    inside = dtm.contains(cloud.xyz[:, 0], cloud.xyz[:, 1])
    if not inside.all():
        bad = int(np.flatnonzero(~inside)[0])
        raise OutOfCoverageError(
            f"point {bad} at ({cloud.xyz[bad, 0]:.3f}, {cloud.xyz[bad, 1]:.3f}) is outside DTM coverage"
        )
    ground = dtm.elevation_many(cloud.xyz[:, 0], cloud.xyz[:, 1])
    return cloud.xyz[:, 2] - ground


def colorize_by_height(h: float, params: ViewParams = ViewParams()) -> tuple[int, int, int]:
    """Blue -> green -> red ramp over [color_h_min, color_h_max], clamped."""
    r, g, b = _ramp(np.float64(h), params)
    return int(r[0]), int(g[0]), int(b[0])


def _ramp(h: np.ndarray, params: ViewParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    h = np.atleast_1d(np.asarray(h, dtype=np.float64))
    t = np.clip((h - params.color_h_min) / (params.color_h_max - params.color_h_min), 0.0, 1.0)
    lo = t <= 0.5
    r = np.where(lo, 0.0, 510.0 * (t - 0.5))
    g = np.where(lo, 510.0 * t, 255.0 - 510.0 * (t - 0.5))
    b = np.where(lo, 255.0 - 510.0 * t, 0.0)
    # round half-up so the ramp is bit-reproducible across platforms
    to_chan = lambda v: np.floor(v + 0.5).astype(np.uint8)
    return to_chan(r), to_chan(g), to_chan(b)


def colorize_cloud(cloud: PointCloud, heights: np.ndarray, params: ViewParams = ViewParams()) -> PointCloud:
    """Recolor every point from its height above ground."""
    if len(cloud) != len(heights):
        raise ValueError("heights must parallel the cloud's points")
    if len(cloud) == 0:
        return cloud
    r, g, b = _ramp(np.asarray(heights), params)
    return cloud.with_colors(np.stack([r, g, b], axis=1))


def crop_cylinder(cloud: PointCloud, center_x: float, center_y: float, radius: float = 5.0) -> PointCloud:
    """Points with planar distance <= radius from the center, input order kept."""
    if not (radius > 0):
        raise ValueError("radius must be > 0")
    if len(cloud) == 0:
        return cloud
    dx = cloud.xyz[:, 0] - center_x
    dy = cloud.xyz[:, 1] - center_y
    return cloud.select(np.sqrt(dx * dx + dy * dy) <= radius)


def mask_lowest_fraction(cloud: PointCloud, fraction: float = 0.05) -> PointCloud:
    """Drop the floor(n*fraction) lowest points (z ties: lowest index drops first)."""
    if not (0 <= fraction < 1):
        raise ValueError("fraction must be in [0, 1)")
    n = len(cloud)
    n_drop = int(np.floor(n * fraction))
    if n_drop == 0:
        return cloud
    drop = np.argsort(cloud.xyz[:, 2], kind="stable")[:n_drop]
    keep = np.setdiff1d(np.arange(n), drop, assume_unique=True)
    return cloud.select(keep)
