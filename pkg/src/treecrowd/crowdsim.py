"""Synthetic crowdworker submissions for exercising the pipeline end to end.

Workers are parameterized by the error phenomena observed in real campaigns:
positional/height jitter, a base miss rate plus extra misses for crowded or
small trees, spurious annotations (optionally snapped to pole-like decoys),
and outright dishonest workers.  Everything is deterministic given the seeds:
per-submission randomness derives from (worker seed, tile id), and decision
draws are kept on streams separate from the noise draws so changing a sigma
never changes which stems get annotated.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, asdict

import numpy as np

from .evaluator import GroundTruthStem
from .integrator import CylinderAnnotation, Submission
from .tiler import Tile

_MIN_HEIGHT = 0.1
_DISHONEST_HEIGHT_RANGE = (1.0, 30.0)
PROXIMITY_DISTANCE = 2.0  # stems closer than this to a neighbor are easily missed


@dataclass(frozen=True)
class WorkerProfile:
    worker_id: str
    sigma_pos: float = 0.0
    sigma_h: float = 0.0
    miss_base: float = 0.0
    miss_proximity_gain: float = 0.0
    small_tree_miss_gain: float = 0.0
    fp_rate: float = 0.0
    dishonest: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        for p in (self.miss_base, self.miss_proximity_gain, self.small_tree_miss_gain):
            if not (0 <= p <= 1):
                raise ValueError("probabilities must be in [0, 1]")
        if self.sigma_pos < 0 or self.sigma_h < 0 or self.fp_rate < 0:
            raise ValueError("sigma values and fp_rate must be >= 0")


@dataclass(frozen=True)
class CampaignSimConfig:
    workers: tuple[WorkerProfile, ...]
    replication_k: int = 10
    clutter_points: tuple[tuple[float, float, float], ...] | None = None
    campaign_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "workers", tuple(self.workers))
        if self.clutter_points is not None:
            object.__setattr__(
                self, "clutter_points", tuple(tuple(p) for p in self.clutter_points)
            )
        if self.replication_k < 1:
            raise ValueError("replication_k must be >= 1")
        if len(self.workers) < self.replication_k:
            raise ValueError("worker pool must hold at least replication_k profiles")
        ids = [w.worker_id for w in self.workers]
        if len(set(ids)) != len(ids):
            raise ValueError("worker ids must be distinct")


def default_sim_config(k: int = 10, campaign_seed: int = 0) -> CampaignSimConfig:
    """A pool of k noiseless honest workers (the replication setup, no error model)."""
    workers = tuple(
        WorkerProfile(worker_id=f"w{i:02d}", rng_seed=i) for i in range(k)
    )
    return CampaignSimConfig(workers=workers, replication_k=k, campaign_seed=campaign_seed)


def _submission_rngs(profile: WorkerProfile, tile_id: str):
    entropy = [profile.rng_seed & 0xFFFFFFFF, zlib.crc32(tile_id.encode("utf-8"))]
    children = np.random.SeedSequence(entropy).spawn(4)
    return tuple(np.random.default_rng(c) for c in children)


def simulate_submission(gt_stems, tile: Tile, profile: WorkerProfile, clutter_points=None) -> Submission:
    """One worker's answer for one tile, deterministic in (rng_seed, tile_id).

    Spurious annotations snap to ``clutter_points`` (pole-like decoys) when
    given, else fall uniformly inside the tile bounds.
    """
    decisions, noise, spurious, dishonest_rng = _submission_rngs(profile, tile.tile_id)
    xmin, ymin, xmax, ymax = tile.bounds
    gt_stems = list(gt_stems)

    if profile.dishonest:
        if dishonest_rng.random() < 0.5:
            return Submission(worker_id=profile.worker_id, tile_id=tile.tile_id, no_stems=True)
        count = int(dishonest_rng.integers(1, 7))
        anns = []
        for _ in range(count):
            x = float(dishonest_rng.uniform(xmin, xmax))
            y = float(dishonest_rng.uniform(ymin, ymax))
            h = float(dishonest_rng.uniform(*_DISHONEST_HEIGHT_RANGE))
            anns.append(CylinderAnnotation(x=x, y=y, height=h))
        return Submission(worker_id=profile.worker_id, tile_id=tile.tile_id, annotations=tuple(anns))

    anns = []
    if gt_stems:
        xy = np.array([(s.x, s.y) for s in gt_stems])
        heights = np.array([s.height for s in gt_stems])
        median_h = float(np.median(heights))
        for i, stem in enumerate(gt_stems):
            p_miss = profile.miss_base
            if len(gt_stems) > 1:
                d = np.hypot(xy[:, 0] - stem.x, xy[:, 1] - stem.y)
                d[i] = np.inf
                if d.min() < PROXIMITY_DISTANCE:
                    p_miss += profile.miss_proximity_gain
            if stem.height < 0.5 * median_h:
                p_miss += profile.small_tree_miss_gain
            p_miss = min(1.0, p_miss)
            u = decisions.random()  # drawn for every stem so streams stay aligned
            if u >= p_miss:
                dx, dy, dh = noise.standard_normal(3)
                anns.append(
                    CylinderAnnotation(
                        x=stem.x + profile.sigma_pos * dx,
                        y=stem.y + profile.sigma_pos * dy,
                        height=max(stem.height + profile.sigma_h * dh, _MIN_HEIGHT),
                    )
                )
    n_fp = int(spurious.poisson(profile.fp_rate))
    for _ in range(n_fp):
        if clutter_points:
            x, y, h = clutter_points[int(spurious.integers(len(clutter_points)))]
        else:
            x = float(spurious.uniform(xmin, xmax))
            y = float(spurious.uniform(ymin, ymax))
            if gt_stems:
                h_lo = float(min(s.height for s in gt_stems))
                h_hi = float(max(s.height for s in gt_stems))
            else:
                h_lo, h_hi = _DISHONEST_HEIGHT_RANGE
            h = float(spurious.uniform(h_lo, h_hi)) if h_hi > h_lo else h_lo
        anns.append(CylinderAnnotation(x=float(x), y=float(y), height=float(h)))
    return Submission(
        worker_id=profile.worker_id,
        tile_id=tile.tile_id,
        annotations=tuple(anns),
        no_stems=not anns,
    )


def assign_gt_to_tiles(tiles, gt_stems) -> dict[str, list[GroundTruthStem]]:
    """Partition ground truth over tiles: half-open bounds, closed on the outermost edges."""
    tiles = list(tiles)
    if not tiles:
        raise ValueError("no tiles")
    global_xmax = max(t.bounds[2] for t in tiles)
    global_ymax = max(t.bounds[3] for t in tiles)
    by_tile: dict[str, list[GroundTruthStem]] = {t.tile_id: [] for t in tiles}
    for i, stem in enumerate(gt_stems):
        home = None
        for t in tiles:
            xmin, ymin, xmax, ymax = t.bounds
            in_x = xmin <= stem.x and (stem.x < xmax or (xmax == global_xmax and stem.x <= xmax))
            in_y = ymin <= stem.y and (stem.y < ymax or (ymax == global_ymax and stem.y <= ymax))
            if in_x and in_y:
                home = t
                break
        if home is None:
            raise ValueError(f"ground-truth stem {i} at ({stem.x}, {stem.y}) lies outside every tile")
        by_tile[home.tile_id].append(stem)
    return by_tile


def simulate_campaign(tiles, gt_stems, config: CampaignSimConfig) -> list[Submission]:
    """k submissions per tile from k distinct workers, deterministic under the campaign seed.

    ``gt_stems`` may be a flat list (assigned to tiles by bounds) or a
    ``{tile_id: [stems]}`` mapping.
    """
    tiles = sorted(tiles, key=lambda t: t.tile_id)
    if isinstance(gt_stems, dict):
        by_tile = {t.tile_id: list(gt_stems.get(t.tile_id, [])) for t in tiles}
    else:
        by_tile = assign_gt_to_tiles(tiles, gt_stems)
    submissions: list[Submission] = []
    for tile in tiles:
        seq = np.random.SeedSequence(
            [config.campaign_seed & 0xFFFFFFFF, zlib.crc32(tile.tile_id.encode("utf-8")), 1]
        )
        rng = np.random.default_rng(seq)
        chosen = rng.permutation(len(config.workers))[: config.replication_k]
        for wi in chosen:
            profile = config.workers[int(wi)]
            submissions.append(
                simulate_submission(
                    by_tile[tile.tile_id], tile, profile, clutter_points=config.clutter_points
                )
            )
    return submissions


# --- config file I/O ---------------------------------------------------------


def sim_config_to_dict(config: CampaignSimConfig) -> dict:
    return {
        "replication_k": config.replication_k,
        "campaign_seed": config.campaign_seed,
        "clutter_points": [list(p) for p in config.clutter_points] if config.clutter_points else None,
        "workers": [asdict(w) for w in config.workers],
    }


def sim_config_from_dict(doc: dict) -> CampaignSimConfig:
    workers = tuple(WorkerProfile(**w) for w in doc["workers"])
    clutter = doc.get("clutter_points")
    return CampaignSimConfig(
        workers=workers,
        replication_k=int(doc.get("replication_k", 10)),
        clutter_points=tuple(tuple(p) for p in clutter) if clutter else None,
        campaign_seed=int(doc.get("campaign_seed", 0)),
    )


def load_sim_config(path) -> CampaignSimConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return sim_config_from_dict(json.load(fh))


def save_sim_config(config: CampaignSimConfig, path) -> None:
    from ._fsio import atomic_write_text

    atomic_write_text(path, json.dumps(sim_config_to_dict(config), sort_keys=True, indent=2) + "\n")
