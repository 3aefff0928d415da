import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treecrowd.cloud import PointCloud
from treecrowd.dtm import DtmRaster
from treecrowd.tiler import (
    Tile,
    TileSpec,
    apply_stretch,
    cut_tiles,
    export_tile_bundle,
    import_tile_bundle,
    plan_grid,
    unstretch_annotation,
)


def flat_dtm(extent=200.0, z=0.0):
    grid = np.full((12, 12), z)
    return DtmRaster(origin_x=-10, origin_y=-10, cell_size=(extent + 20) / 11, elevations=grid)


# --- plan_grid -----------------------------------------------------------------


def test_exact_fit_single_tile():
    plan = plan_grid((0, 0, 60, 10), TileSpec(60, 10))
    assert (plan.n_len, plan.n_depth) == (1, 1)
    assert plan.tile_length == 60 and plan.tile_depth == 10


def test_130m_strip_gives_two_65m_tiles():
    plan = plan_grid((0, 0, 130, 10), TileSpec(60, 10))
    assert plan.n_len == 2
    assert plan.tile_length == pytest.approx(65.0)


def test_forest_spec_20x4_grid():
    plan = plan_grid((0, 0, 100, 16), TileSpec(20, 4))
    assert (plan.n_len, plan.n_depth) == (5, 4)
    assert plan.tile_length == pytest.approx(20.0)
    assert plan.tile_depth == pytest.approx(4.0)
    assert plan.n_tiles == 20


def test_round_ties_go_to_larger_tiles():
    plan = plan_grid((0, 0, 90, 10), TileSpec(60, 10))  # 90/60 = 1.5
    assert plan.n_len == 1
    assert plan.tile_length == pytest.approx(90.0)


def test_strips_follow_longer_axis():
    plan = plan_grid((0, 0, 10, 120), TileSpec(60, 10))
    assert plan.length_axis == "y"
    assert plan.n_len == 2 and plan.tile_length == pytest.approx(60.0)


def test_orientation_override():
    plan = plan_grid((0, 0, 10, 120), TileSpec(60, 10, orientation="x"))
    assert plan.length_axis == "x"


def test_degenerate_bbox_rejected():
    with pytest.raises(ValueError):
        plan_grid((0, 0, 0, 10), TileSpec())


@settings(deadline=None, max_examples=100)
@given(
    st.floats(min_value=60.0, max_value=2000.0),
    st.floats(min_value=10.0, max_value=400.0),
)
def test_tile_dimension_never_pathological(ex, ey):
    spec = TileSpec(60, 10)
    plan = plan_grid((0, 0, ex, ey), spec)
    assert spec.target_length / 1.5 <= plan.tile_length <= spec.target_length * 1.5
    assert spec.target_depth / 1.5 <= plan.tile_depth <= spec.target_depth * 1.5
    # plan covers the extent exactly
    assert plan.n_len * plan.tile_length == pytest.approx(max(ex, ey) if ex >= ey else ey, abs=1e-6)


# --- cut_tiles -----------------------------------------------------------------


def test_all_points_in_one_tile_interior():
    pts = PointCloud.from_xyz([[5.0, 5.0, 1.0], [6.0, 6.0, 2.0], [119.0, 9.0, 0.5]])
    plan = plan_grid((0, 0, 120, 10), TileSpec(60, 10))
    tiles = cut_tiles(pts, plan)
    counts = [len(t.points) for t in tiles]
    assert counts == [2, 1]


def test_boundary_point_goes_to_higher_tile():
    pts = PointCloud.from_xyz([[60.0, 5.0, 0.0]])
    plan = plan_grid((0, 0, 120, 10), TileSpec(60, 10))
    tiles = cut_tiles(pts, plan)
    assert len(tiles[0].points) == 0
    assert len(tiles[1].points) == 1


def test_last_tile_closed_on_max_edge():
    pts = PointCloud.from_xyz([[0.0, 0.0, 0.0], [120.0, 10.0, 0.0]])
    plan = plan_grid((0, 0, 120, 10), TileSpec(60, 10))
    tiles = cut_tiles(pts, plan)
    assert sum(len(t.points) for t in tiles) == 2
    assert len(tiles[-1].points) == 1


def test_partition_matches_interval_oracle():
    rng = np.random.default_rng(17)
    pts = np.stack(
        [rng.uniform(0, 180, 1000), rng.uniform(0, 20, 1000), rng.uniform(0, 30, 1000)], axis=1
    )
    cloud = PointCloud.from_xyz(pts)
    plan = plan_grid((pts[:, 0].min(), pts[:, 1].min(), pts[:, 0].max(), pts[:, 1].max()), TileSpec(60, 10))
    tiles = cut_tiles(cloud, plan)
    assert sum(len(t.points) for t in tiles) == 1000
    # brute-force interval membership per point against tile bounds
    xmax_global = max(t.bounds[2] for t in tiles)
    ymax_global = max(t.bounds[3] for t in tiles)
    for tile in tiles:
        xmin, ymin, xmax, ymax = tile.bounds
        expected = 0
        for x, y, _ in pts:
            in_x = xmin <= x < xmax or (xmax == xmax_global and xmin <= x <= xmax)
            in_y = ymin <= y < ymax or (ymax == ymax_global and ymin <= y <= ymax)
            if in_x and in_y:
                expected += 1
        assert len(tile.points) == expected


def test_tiles_carry_dtm_patch_covering_bounds():
    cloud = PointCloud.from_xyz([[10.0, 5.0, 1.0], [110.0, 8.0, 2.0]])
    plan = plan_grid((0, 0, 120, 10), TileSpec(60, 10))
    tiles = cut_tiles(cloud, plan, flat_dtm(extent=130))
    for t in tiles:
        xmin, ymin, xmax, ymax = t.dtm_patch.node_hull()
        assert xmin <= t.bounds[0] and xmax >= t.bounds[2]
        assert ymin <= t.bounds[1] and ymax >= t.bounds[3]


# --- stretch -------------------------------------------------------------------


def one_tile(points, bounds=(0.0, 0.0, 20.0, 4.0)):
    return Tile(
        tile_id="r000_c000",
        row=0,
        col=0,
        bounds=bounds,
        stretch_factor=1.0,
        points=PointCloud.from_xyz(points),
        dtm_patch=flat_dtm(40),
    )


def test_stretch_identity():
    tile = one_tile([[1.0, 2.0, 3.0]])
    out = apply_stretch(tile, 1.0)
    np.testing.assert_array_equal(out.points.xyz, tile.points.xyz)
    assert out.stretch_factor == 1.0


def test_stretch_proportional_from_origin():
    tile = one_tile([[2.0, 0.0, 7.0]])
    out = apply_stretch(tile, 1.5)
    np.testing.assert_allclose(out.points.xyz[0], [3.0, 0.0, 7.0])
    assert out.stretch_factor == 1.5
    assert out.bounds == tile.bounds  # bounds stay world-frame


def test_stretch_preserves_z_and_scales_planar_distances():
    rng = np.random.default_rng(23)
    pts = np.stack([rng.uniform(0, 20, 30), rng.uniform(0, 4, 30), rng.uniform(0, 15, 30)], axis=1)
    tile = one_tile(pts)
    out = apply_stretch(tile, 1.5)
    np.testing.assert_array_equal(out.points.xyz[:, 2], pts[:, 2])
    d_in = np.hypot(pts[1:, 0] - pts[0, 0], pts[1:, 1] - pts[0, 1])
    d_out = np.hypot(
        out.points.xyz[1:, 0] - out.points.xyz[0, 0],
        out.points.xyz[1:, 1] - out.points.xyz[0, 1],
    )
    np.testing.assert_allclose(d_out, 1.5 * d_in, rtol=1e-12)


def test_unstretch_round_trip():
    rng = np.random.default_rng(31)
    pts = np.stack([rng.uniform(0, 20, 100), rng.uniform(0, 4, 100), rng.uniform(0, 15, 100)], axis=1)
    tile = one_tile(pts)
    stretched = apply_stretch(tile, 1.5)
    for (x, y, _), (sx, sy, _) in zip(pts, stretched.points.xyz):
        ux, uy = unstretch_annotation(sx, sy, stretched)
        assert abs(ux - x) < 1e-9 and abs(uy - y) < 1e-9


def test_unstretch_identity_for_unit_factor():
    tile = one_tile([[1.0, 1.0, 1.0]])
    assert unstretch_annotation(7.0, 3.0, tile) == (7.0, 3.0)


def test_unstretch_known_offset():
    tile = one_tile([[0.0, 0.0, 0.0]])
    stretched = apply_stretch(tile, 1.5)
    ux, uy = unstretch_annotation(3.0, 0.0, stretched)
    assert ux == pytest.approx(2.0)
    assert uy == pytest.approx(0.0)


# --- bundle export / import ------------------------------------------------------


def test_export_empty_tile(tmp_path):
    tile = one_tile(np.empty((0, 3)))
    manifest = export_tile_bundle(tile, tmp_path / tile.tile_id)
    back = import_tile_bundle(tmp_path / tile.tile_id)
    assert back.tile_id == tile.tile_id
    assert len(back.points) == 0
    import json

    doc = json.loads(open(manifest).read())
    assert doc["point_count"] == 0


def test_export_single_point_format(tmp_path):
    tile = one_tile([[1.0, 2.0, 3.0]])
    export_tile_bundle(tile, tmp_path / tile.tile_id)
    line = (tmp_path / tile.tile_id / "points.xyz").read_text().strip()
    assert line == "1.000000 2.000000 3.000000 0 0 0"


def test_bundle_round_trip_field_for_field(tmp_path):
    rng = np.random.default_rng(41)
    pts = np.round(
        np.stack([rng.uniform(0, 20, 25), rng.uniform(0, 4, 25), rng.uniform(0, 15, 25)], axis=1), 6
    )
    tile = one_tile(pts, bounds=(0.0, 0.0, 20.0, 4.0))
    tile = apply_stretch(tile, 1.5)
    # quantize to the export precision so the trip is exact
    tile = Tile(
        tile_id=tile.tile_id,
        row=tile.row,
        col=tile.col,
        bounds=tile.bounds,
        stretch_factor=tile.stretch_factor,
        points=PointCloud.from_xyz(np.round(tile.points.xyz, 6), tile.points.rgb),
        dtm_patch=tile.dtm_patch,
    )
    export_tile_bundle(tile, tmp_path / tile.tile_id)
    back = import_tile_bundle(tmp_path / tile.tile_id)
    assert back.tile_id == tile.tile_id
    assert back.row == tile.row and back.col == tile.col
    assert back.bounds == tile.bounds
    assert back.stretch_factor == tile.stretch_factor
    np.testing.assert_allclose(back.points.xyz, tile.points.xyz, atol=1e-9)
    np.testing.assert_array_equal(back.points.rgb, tile.points.rgb)
    np.testing.assert_allclose(back.dtm_patch.elevations, tile.dtm_patch.elevations, atol=1e-6)


def test_bundle_round_trip_tolerance_for_arbitrary_floats(tmp_path):
    pts = [[1.2345678911, 2.999999949, 3.0000004]]
    tile = one_tile(pts)
    export_tile_bundle(tile, tmp_path / tile.tile_id)
    back = import_tile_bundle(tmp_path / tile.tile_id)
    np.testing.assert_allclose(back.points.xyz, np.asarray(pts), atol=5e-7)
