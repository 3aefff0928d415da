"""Seeded synthetic test sites: ground truth stems, smooth terrain, and a
point cloud with ground returns, stem columns and crown blobs.  Used by the
demos and the end-to-end tests; everything is reproducible from the seed."""

from __future__ import annotations

import numpy as np

from .cloud import PointCloud
from .dtm import DtmRaster
from .evaluator import GroundTruthStem


def synthetic_stems(
    n_stems: int,
    extent: tuple[float, float],
    seed: int = 0,
    min_separation: float = 2.5,
    height_range: tuple[float, float] = (5.0, 25.0),
    edge_margin: float = 1.5,
    origin: tuple[float, float] = (0.0, 0.0),
) -> list[GroundTruthStem]:
    """Rejection-sampled stem layout with a minimum pairwise planar separation."""
    rng = np.random.default_rng(seed)
    ox, oy = origin
    w, d = extent
    if w <= 2 * edge_margin or d <= 2 * edge_margin:
        raise ValueError("extent too small for the edge margin")
    placed: list[tuple[float, float]] = []
    stems: list[GroundTruthStem] = []
    attempts = 0
    while len(stems) < n_stems:
        attempts += 1
        if attempts > 200 * n_stems:
            raise RuntimeError(
                f"could not place {n_stems} stems at separation {min_separation}; "
                f"only {len(stems)} fit"
            )
        x = float(rng.uniform(ox + edge_margin, ox + w - edge_margin))
        y = float(rng.uniform(oy + edge_margin, oy + d - edge_margin))
        if placed:
            arr = np.array(placed)
            if np.hypot(arr[:, 0] - x, arr[:, 1] - y).min() < min_separation:
                continue
        placed.append((x, y))
        h = float(rng.uniform(*height_range))
        stems.append(GroundTruthStem(x=x, y=y, height=h))
    return stems


def synthetic_dtm(
    extent: tuple[float, float],
    cell_size: float = 1.0,
    base_elevation: float = 300.0,
    relief: float = 0.0,
    margin: float = 5.0,
    origin: tuple[float, float] = (0.0, 0.0),
    seed: int = 0,
) -> DtmRaster:
    """Smooth terrain covering the extent plus a margin ring."""
    ox, oy = origin
    w, d = extent
    n_cols = int(np.ceil((w + 2 * margin) / cell_size)) + 1
    n_rows = int(np.ceil((d + 2 * margin) / cell_size)) + 1
    xs = (ox - margin) + np.arange(n_cols) * cell_size
    ys = (oy - margin) + np.arange(n_rows) * cell_size
    xx, yy = np.meshgrid(xs, ys)
    grid = base_elevation + relief * (
        np.sin(2 * np.pi * xx / max(w, 1.0)) * np.cos(2 * np.pi * yy / max(d, 1.0))
    )
    return DtmRaster(origin_x=float(xs[0]), origin_y=float(ys[0]), cell_size=cell_size, elevations=grid)


def synthetic_cloud(
    stems,
    dtm: DtmRaster,
    extent: tuple[float, float],
    origin: tuple[float, float] = (0.0, 0.0),
    ground_spacing: float = 0.5,
    stem_point_spacing: float = 0.3,
    crown_points: int = 60,
    seed: int = 0,
) -> PointCloud:
    """Ground grid plus one point column and a crown blob per stem (uncolored)."""
    rng = np.random.default_rng(seed)
    ox, oy = origin
    w, d = extent
    gx = np.arange(ox, ox + w + 1e-9, ground_spacing)
    gy = np.arange(oy, oy + d + 1e-9, ground_spacing)
    xx, yy = np.meshgrid(gx, gy)
    xx = xx.ravel()
    yy = yy.ravel()
    zz = dtm.elevation_many(xx, yy)
    parts = [np.stack([xx, yy, zz], axis=1)]
    for stem in stems:
        ground = dtm.elevation_many(np.array([stem.x]), np.array([stem.y]))[0]
        n_col = max(2, int(stem.height / stem_point_spacing))
        t = np.linspace(0.0, stem.height * 0.7, n_col)
        col = np.stack(
            [
                np.full(n_col, stem.x) + rng.normal(0, 0.03, n_col),
                np.full(n_col, stem.y) + rng.normal(0, 0.03, n_col),
                ground + t,
            ],
            axis=1,
        )
        crown_r = max(0.8, stem.height * 0.12)
        cx = stem.x + rng.normal(0, crown_r * 0.5, crown_points)
        cy = stem.y + rng.normal(0, crown_r * 0.5, crown_points)
        cz = ground + stem.height - np.abs(rng.normal(0, stem.height * 0.15, crown_points))
        parts.append(col)
        parts.append(np.stack([cx, cy, cz], axis=1))
    xyz = np.concatenate(parts, axis=0)
    # clamp crown scatter into the site so every point stays in DTM coverage
    xyz[:, 0] = np.clip(xyz[:, 0], ox, ox + w)
    xyz[:, 1] = np.clip(xyz[:, 1], oy, oy + d)
    return PointCloud.from_xyz(xyz)
