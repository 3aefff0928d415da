"""From a raw point cloud to annotation-ready profile tiles.

Builds a synthetic site (terrain + tree stems + crowns), subsamples it to
20 cm spacing, colors every point by height above ground, plans a
remnant-free grid of profile strips, and exports one bundle per tile.
"""

import tempfile
from pathlib import Path

from treecrowd.cloud import colorize_cloud, height_above_ground, voxel_subsample
from treecrowd.synth import synthetic_cloud, synthetic_dtm, synthetic_stems
from treecrowd.tiler import TileSpec, apply_stretch, cut_tiles, export_tile_bundle, plan_grid

out = Path(tempfile.mkdtemp(prefix="treecrowd_demo_"))
extent = (240.0, 40.0)

# 1. a synthetic site: 80 stems on gently rolling terrain
stems = synthetic_stems(80, extent, seed=1, min_separation=2.8)
dtm = synthetic_dtm(extent, cell_size=2.0, base_elevation=420.0, relief=4.0)
cloud = synthetic_cloud(stems, dtm, extent, seed=1)
print(f"raw cloud: {len(cloud):,} points over {extent[0]:.0f} x {extent[1]:.0f} m")

# 2. subsample to 20 cm so tiles stay light enough for a browser
cloud = voxel_subsample(cloud, spacing=0.20)
print(f"subsampled: {len(cloud):,} points")

# 3. pseudo-color by height above ground (blue ground -> green -> red canopy)
heights = height_above_ground(cloud, dtm)
cloud = colorize_cloud(cloud, heights)
print(f"height above ground: {heights.min():.2f} .. {heights.max():.2f} m")

# 4. plan profile strips: long and shallow so individual stems stay visible
spec = TileSpec(target_length=60.0, target_depth=10.0)
bmin, bmax = cloud.bbox
plan = plan_grid((bmin[0], bmin[1], bmax[0], bmax[1]), spec)
area_ha = (bmax[0] - bmin[0]) * (bmax[1] - bmin[1]) / 1e4
print(f"\nArea Size [ha]: {area_ha:.2f}")
print(f"# Tiles: {plan.n_tiles}")
print(f"Tile Size: {plan.tile_length:.0f} x {plan.tile_depth:.0f} m")

# 5. cut, stretch (forest mode would use 1.5; here 1.0 = off), export
tiles = cut_tiles(cloud, plan, dtm)
tiles = [apply_stretch(t, 1.0) for t in tiles]
for tile in tiles:
    export_tile_bundle(tile, out / tile.tile_id)
print(f"\n{len(tiles)} bundles under {out}")
print("each bundle: manifest.json + points.xyz + dtm.asc")
