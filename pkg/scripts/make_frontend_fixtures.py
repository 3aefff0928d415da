"""Regenerate the frontend test fixtures from the primary implementation.

Produces a stretched (1.5x) tile bundle plus an oracle file holding the
values the browser logic must reproduce: world coordinates for sample
stretched-frame annotations, terrain elevations for base snapping, and the
surviving point indices of the detail view's crop+mask for sample centers.

Run from the repo root:  python scripts/make_frontend_fixtures.py
"""

import json
import shutil
from pathlib import Path

import numpy as np

from treecrowd.cloud import crop_cylinder, mask_lowest_fraction
from treecrowd.dtm import dtm_elevation
from treecrowd.synth import synthetic_cloud, synthetic_dtm, synthetic_stems
from treecrowd.tiler import (
    TileSpec,
    apply_stretch,
    cut_tiles,
    export_tile_bundle,
    import_tile_bundle,
    plan_grid,
    unstretch_annotation,
)

OUT = Path(__file__).resolve().parent.parent / "frontend" / "tests" / "fixtures"


def surviving_indices(points, cx, cy, radius=5.0, fraction=0.05):
    cropped = crop_cylinder(points, cx, cy, radius)
    masked = mask_lowest_fraction(cropped, fraction)
    # map back to indices into the tile's point list
    key = {tuple(p): i for i, p in enumerate(points.xyz)}
    return [key[tuple(p)] for p in masked.xyz]


def main():
    extent = (40.0, 8.0)
    stems = synthetic_stems(6, extent, seed=33, min_separation=3.0)
    dtm = synthetic_dtm(extent, cell_size=1.0, base_elevation=310.0, relief=1.2, seed=33)
    cloud = synthetic_cloud(stems, dtm, extent, seed=33, ground_spacing=1.0, crown_points=25)
    plan = plan_grid((0.0, 0.0, *extent), TileSpec(40.0, 8.0))
    tile = cut_tiles(cloud, plan, dtm)[0]
    tile = apply_stretch(tile, 1.5)
    # quantize to export precision so client-side parses see exact values
    from treecrowd.cloud import PointCloud
    from treecrowd.tiler import Tile

    tile = Tile(
        tile_id=tile.tile_id,
        row=tile.row,
        col=tile.col,
        bounds=tile.bounds,
        stretch_factor=tile.stretch_factor,
        points=PointCloud.from_xyz(np.round(tile.points.xyz, 6), tile.points.rgb),
        dtm_patch=tile.dtm_patch,
    )

    if OUT.exists():
        shutil.rmtree(OUT)
    OUT.mkdir(parents=True)
    export_tile_bundle(tile, OUT)
    tile = import_tile_bundle(OUT)  # exactly what the client will parse

    rng = np.random.default_rng(77)
    bmin, bmax = tile.points.bbox
    unstretch_cases = []
    for _ in range(12):
        sx = float(rng.uniform(bmin[0], bmax[0]))
        sy = float(rng.uniform(bmin[1], bmax[1]))
        wx, wy = unstretch_annotation(sx, sy, tile)
        unstretch_cases.append({"stretched": [sx, sy], "world": [wx, wy]})

    elevation_cases = []
    for _ in range(8):
        x = float(rng.uniform(tile.bounds[0], tile.bounds[2]))
        y = float(rng.uniform(tile.bounds[1], tile.bounds[3]))
        elevation_cases.append({"xy": [x, y], "z": dtm_elevation(tile.dtm_patch, x, y)})

    detail_cases = []
    for _ in range(4):
        cx = float(rng.uniform(bmin[0], bmax[0]))
        cy = float(rng.uniform(bmin[1], bmax[1]))
        detail_cases.append(
            {"center": [cx, cy], "indices": surviving_indices(tile.points, cx, cy)}
        )

    oracle = {
        "tile_id": tile.tile_id,
        "stretch_factor": tile.stretch_factor,
        "bounds": list(tile.bounds),
        "point_count": len(tile.points),
        "unstretch": unstretch_cases,
        "elevation": elevation_cases,
        "detail": detail_cases,
    }
    (OUT / "oracle.json").write_text(json.dumps(oracle, indent=2) + "\n")
    print(f"fixtures written to {OUT}: {len(tile.points)} points")


if __name__ == "__main__":
    main()
