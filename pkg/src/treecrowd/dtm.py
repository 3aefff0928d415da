"""Digital terrain model raster with bilinear elevation queries.

The raster is stored as a node grid: ``elevations[row, col]`` is the bare-earth
elevation at ``(origin_x + col*cell_size, origin_y + row*cell_size)``, with row
0 the southernmost row.  ESRI ASCII grid files are cell-based and north-up;
the loader treats cell centres as nodes and flips the row order accordingly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ._fsio import atomic_writer
from .errors import CloudParseError, OutOfCoverageError

ESRI_NODATA_DEFAULT = -9999.0


@dataclass(frozen=True)
class DtmRaster:
    """Complete (no-nodata) elevation node grid in a local projected frame."""

    origin_x: float
    origin_y: float
    cell_size: float
    elevations: np.ndarray = field(repr=False)

    def __post_init__(self):
        grid = np.asarray(self.elevations, dtype=np.float64)
        if grid.ndim != 2 or grid.size == 0:
            raise ValueError("elevations must be a non-empty 2-D grid")
        if not np.isfinite(grid).all():
            raise ValueError("elevation grid must be complete and finite")
        if not (self.cell_size > 0):
            raise ValueError("cell_size must be > 0")
        object.__setattr__(self, "elevations", grid)

    @property
    def n_rows(self) -> int:
        return self.elevations.shape[0]

    @property
    def n_cols(self) -> int:
        return self.elevations.shape[1]

    def node_hull(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) spanned by the outermost grid nodes."""
        return (
            self.origin_x,
            self.origin_y,
            self.origin_x + (self.n_cols - 1) * self.cell_size,
            self.origin_y + (self.n_rows - 1) * self.cell_size,
        )

    def contains(self, x, y) -> np.ndarray:
        xmin, ymin, xmax, ymax = self.node_hull()
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        return (x >= xmin) & (x <= xmax) & (y >= ymin) & (y <= ymax)

    def elevation_many(self, x, y) -> np.ndarray:
        """Bilinear elevation at each (x, y); raises if any query leaves the hull."""
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        inside = self.contains(x, y)
        if not inside.all():
            bad = int(np.flatnonzero(~inside)[0])
            raise OutOfCoverageError(
                f"point {bad} at ({x[bad]:.3f}, {y[bad]:.3f}) is outside DTM coverage"
            )
        u = (x - self.origin_x) / self.cell_size
        v = (y - self.origin_y) / self.cell_size
        c0 = np.clip(np.floor(u).astype(np.int64), 0, max(self.n_cols - 2, 0))
        r0 = np.clip(np.floor(v).astype(np.int64), 0, max(self.n_rows - 2, 0))
        tx = np.clip(u - c0, 0.0, 1.0)
        ty = np.clip(v - r0, 0.0, 1.0)
        c1 = np.minimum(c0 + 1, self.n_cols - 1)
        r1 = np.minimum(r0 + 1, self.n_rows - 1)
        g = self.elevations
        z00 = g[r0, c0]
        z01 = g[r0, c1]
        z10 = g[r1, c0]
        z11 = g[r1, c1]
        return (1 - ty) * ((1 - tx) * z00 + tx * z01) + ty * ((1 - tx) * z10 + tx * z11)

    def crop(self, bounds: tuple[float, float, float, float], apron_cells: int = 1) -> "DtmRaster":
        """Sub-raster covering ``bounds`` plus an apron ring, clipped to this grid."""
        xmin, ymin, xmax, ymax = bounds
        c_lo = max(0, math.floor((xmin - self.origin_x) / self.cell_size) - apron_cells)
        c_hi = min(self.n_cols - 1, math.ceil((xmax - self.origin_x) / self.cell_size) + apron_cells)
        r_lo = max(0, math.floor((ymin - self.origin_y) / self.cell_size) - apron_cells)
        r_hi = min(self.n_rows - 1, math.ceil((ymax - self.origin_y) / self.cell_size) + apron_cells)
        if c_hi < c_lo or r_hi < r_lo:
            raise OutOfCoverageError("crop bounds do not intersect the raster")
        return DtmRaster(
            origin_x=self.origin_x + c_lo * self.cell_size,
            origin_y=self.origin_y + r_lo * self.cell_size,
            cell_size=self.cell_size,
            elevations=self.elevations[r_lo : r_hi + 1, c_lo : c_hi + 1].copy(),
        )


def dtm_elevation(dtm: DtmRaster, x: float, y: float) -> float:
    """Bilinear interpolation of the four grid nodes surrounding (x, y)."""
    return float(dtm.elevation_many(np.float64(x), np.float64(y))[0])


def _fill_nodata(grid: np.ndarray, nodata_mask: np.ndarray) -> np.ndarray:
    """Replace nodata cells by the value of the nearest valid cell."""
    if nodata_mask.all():
        raise ValueError("raster contains no valid cells")
    if not nodata_mask.any():
        return grid
    # distance transform over the invalid mask yields, per invalid cell, the
    # indices of the nearest valid cell
    _, (ri, ci) = ndimage.distance_transform_edt(nodata_mask, return_indices=True)
    return grid[ri, ci]


def read_esri_ascii(path) -> DtmRaster:
    """Load an ESRI ASCII grid; nodata cells are filled from their nearest valid neighbor."""
    header: dict[str, float] = {}
    values: list[float] = []
    header_keys = {"ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            fields = line.split()
            key = fields[0].lower()
            if key in header_keys:
                if len(fields) != 2:
                    raise CloudParseError(path, line_no, f"malformed header line {line!r}")
                try:
                    header[key] = float(fields[1])
                except ValueError:
                    raise CloudParseError(path, line_no, f"bad header value {fields[1]!r}") from None
                continue
            try:
                values.extend(float(f) for f in fields)
            except ValueError:
                raise CloudParseError(path, line_no, f"non-numeric raster value in {line!r}") from None
    for key in ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize"):
        if key not in header:
            raise CloudParseError(path, 0, f"missing required header {key!r}")
    n_cols = int(header["ncols"])
    n_rows = int(header["nrows"])
    if n_cols <= 0 or n_rows <= 0:
        raise CloudParseError(path, 0, "ncols/nrows must be positive")
    if len(values) != n_cols * n_rows:
        raise CloudParseError(
            path, 0, f"expected {n_cols * n_rows} values, found {len(values)}"
        )
    cell = header["cellsize"]
    nodata = header.get("nodata_value", ESRI_NODATA_DEFAULT)
    grid = np.array(values, dtype=np.float64).reshape(n_rows, n_cols)
    grid = grid[::-1, :]  # file rows run north to south; store south-up
    mask = (grid == nodata) | ~np.isfinite(grid)
    try:
        grid = _fill_nodata(grid, mask)
    except ValueError:
        raise CloudParseError(path, 0, "raster is entirely nodata") from None
    return DtmRaster(
        origin_x=header["xllcorner"] + 0.5 * cell,
        origin_y=header["yllcorner"] + 0.5 * cell,
        cell_size=cell,
        elevations=grid,
    )


def write_esri_ascii(dtm: DtmRaster, path, decimals: int = 6) -> None:
    """Write the node grid back to ESRI ASCII (north-up, cell-centre nodes)."""
    half = 0.5 * dtm.cell_size
    lines = [
        f"ncols {dtm.n_cols}",
        f"nrows {dtm.n_rows}",
        f"xllcorner {dtm.origin_x - half:.{decimals}f}",
        f"yllcorner {dtm.origin_y - half:.{decimals}f}",
        f"cellsize {dtm.cell_size:.{decimals}f}",
        f"NODATA_value {ESRI_NODATA_DEFAULT:.0f}",
    ]
    for row in dtm.elevations[::-1, :]:
        lines.append(" ".join(f"{v:.{decimals}f}" for v in row))
    with atomic_writer(path) as fh:
        fh.write("\n".join(lines) + "\n")
