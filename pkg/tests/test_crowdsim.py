import numpy as np
import pytest

from treecrowd.cloud import PointCloud
from treecrowd.crowdsim import (
    CampaignSimConfig,
    WorkerProfile,
    assign_gt_to_tiles,
    default_sim_config,
    load_sim_config,
    save_sim_config,
    simulate_campaign,
    simulate_submission,
)
from treecrowd.evaluator import GroundTruthStem
from treecrowd.integrator import write_submissions
from treecrowd.tiler import Tile


def make_tile(tile_id="r000_c000", bounds=(0.0, 0.0, 60.0, 10.0)):
    return Tile(
        tile_id=tile_id,
        row=0,
        col=0,
        bounds=bounds,
        stretch_factor=1.0,
        points=PointCloud.empty(),
        dtm_patch=None,
    )


def make_gt(n=5, spacing=8.0):
    return [GroundTruthStem(x=2.0 + i * spacing, y=5.0, height=10.0 + i) for i in range(n)]


def test_noiseless_worker_reproduces_gt_exactly():
    gt = make_gt()
    profile = WorkerProfile(worker_id="w0")
    sub = simulate_submission(gt, make_tile(), profile)
    assert not sub.no_stems
    assert len(sub.annotations) == len(gt)
    for a, g in zip(sub.annotations, gt):
        assert (a.x, a.y, a.height) == (g.x, g.y, g.height)


def test_dishonest_worker_modes():
    profile = WorkerProfile(worker_id="bad", dishonest=True, rng_seed=1)
    seen = set()
    for i in range(40):
        sub = simulate_submission(make_gt(), make_tile(tile_id=f"t{i:03d}"), profile)
        seen.add("empty" if sub.no_stems else "random")
        if sub.no_stems:
            assert not sub.annotations
        else:
            assert sub.annotations
    assert seen == {"empty", "random"}


def test_submission_deterministic_in_seed_and_tile():
    gt = make_gt()
    profile = WorkerProfile(worker_id="w0", sigma_pos=0.3, sigma_h=1.0, miss_base=0.2, rng_seed=9)
    a = simulate_submission(gt, make_tile(), profile)
    b = simulate_submission(gt, make_tile(), profile)
    assert a == b
    c = simulate_submission(gt, make_tile(tile_id="r000_c001"), profile)
    assert c != a


def test_miss_rate_matches_binomial_band():
    gt = make_gt(n=10, spacing=5.0)
    tile = make_tile(bounds=(0.0, 0.0, 60.0, 10.0))
    trials = 10_000
    hits = np.zeros(len(gt))
    for seed in range(trials):
        profile = WorkerProfile(worker_id="w", miss_base=0.1, rng_seed=seed)
        sub = simulate_submission(gt, tile, profile)
        for a in sub.annotations:
            idx = int(round((a.x - 2.0) / 5.0))
            hits[idx] += 1
    freq = hits / trials
    sigma = np.sqrt(0.9 * 0.1 / trials)
    assert np.all(np.abs(freq - 0.9) <= 3 * sigma), freq


def test_sigma_never_changes_annotation_count():
    gt = make_gt()
    tile = make_tile()
    for seed in range(30):
        base = WorkerProfile(
            worker_id="w", sigma_pos=0.1, sigma_h=0.2, miss_base=0.3, fp_rate=0.5, rng_seed=seed
        )
        wide = WorkerProfile(
            worker_id="w", sigma_pos=0.9, sigma_h=2.0, miss_base=0.3, fp_rate=0.5, rng_seed=seed
        )
        n_base = len(simulate_submission(gt, tile, base).annotations)
        n_wide = len(simulate_submission(gt, tile, wide).annotations)
        assert n_base == n_wide


def test_proximity_gain_raises_miss_rate():
    near = [GroundTruthStem(x=5.0, y=5.0, height=10.0), GroundTruthStem(x=6.0, y=5.0, height=10.0)]
    tile = make_tile()
    misses = 0
    for seed in range(2000):
        profile = WorkerProfile(worker_id="w", miss_base=0.0, miss_proximity_gain=0.5, rng_seed=seed)
        misses += 2 - len(simulate_submission(near, tile, profile).annotations)
    assert 0.4 <= misses / 4000 <= 0.6


def test_small_tree_gain_targets_short_stems():
    gt = [
        GroundTruthStem(x=5.0, y=5.0, height=20.0),
        GroundTruthStem(x=25.0, y=5.0, height=20.0),
        GroundTruthStem(x=45.0, y=5.0, height=4.0),  # below half the tile median
    ]
    tile = make_tile()
    short_missed = tall_missed = 0
    for seed in range(2000):
        profile = WorkerProfile(worker_id="w", small_tree_miss_gain=0.5, rng_seed=seed)
        sub = simulate_submission(gt, tile, profile)
        xs = {round(a.x) for a in sub.annotations}
        if 45 not in xs:
            short_missed += 1
        if 5 not in xs or 25 not in xs:
            tall_missed += 1
    assert tall_missed == 0
    assert 0.4 <= short_missed / 2000 <= 0.6


def test_clutter_points_attract_spurious_annotations():
    gt = make_gt(2)
    tile = make_tile()
    clutter = ((30.0, 3.0, 8.0),)
    profile = WorkerProfile(worker_id="w", fp_rate=2.0, rng_seed=5)
    sub = simulate_submission(gt, tile, profile, clutter_points=clutter)
    extras = [a for a in sub.annotations if a.x not in {g.x for g in gt}]
    assert extras
    assert all((a.x, a.y, a.height) == clutter[0] for a in extras)


def test_campaign_counts_and_distinct_workers():
    tiles = [make_tile(f"r000_c{i:03d}", (i * 60.0, 0.0, (i + 1) * 60.0, 10.0)) for i in range(5)]
    gt = [GroundTruthStem(x=10.0 + 60 * i, y=5.0, height=10.0) for i in range(5)]
    config = default_sim_config(k=10)
    subs = simulate_campaign(tiles, gt, config)
    assert len(subs) == 50
    for tile in tiles:
        workers = [s.worker_id for s in subs if s.tile_id == tile.tile_id]
        assert len(workers) == 10
        assert len(set(workers)) == 10


def test_campaign_k1_noiseless_reproduces_gt():
    tiles = [make_tile()]
    gt = make_gt()
    config = default_sim_config(k=1)
    subs = simulate_campaign(tiles, gt, config)
    assert len(subs) == 1
    assert [(a.x, a.y, a.height) for a in subs[0].annotations] == [
        (g.x, g.y, g.height) for g in gt
    ]


def test_campaign_replay_byte_identical(tmp_path):
    tiles = [make_tile(f"r000_c{i:03d}", (i * 60.0, 0.0, (i + 1) * 60.0, 10.0)) for i in range(3)]
    gt = [GroundTruthStem(x=5.0 + 60 * i, y=5.0, height=12.0) for i in range(3)]
    workers = tuple(
        WorkerProfile(worker_id=f"w{i:02d}", sigma_pos=0.3, sigma_h=1.0, miss_base=0.1, fp_rate=0.3, rng_seed=i)
        for i in range(10)
    )
    config = CampaignSimConfig(workers=workers, replication_k=10, campaign_seed=77)
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_submissions(simulate_campaign(tiles, gt, config), p1)
    write_submissions(simulate_campaign(tiles, gt, config), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_pool_smaller_than_k_rejected():
    with pytest.raises(ValueError):
        CampaignSimConfig(workers=(WorkerProfile(worker_id="w0"),), replication_k=2)


def test_assign_gt_half_open_and_outer_closed():
    tiles = [
        make_tile("r000_c000", (0.0, 0.0, 60.0, 10.0)),
        make_tile("r000_c001", (60.0, 0.0, 120.0, 10.0)),
    ]
    gt = [
        GroundTruthStem(x=60.0, y=5.0, height=10.0),   # boundary -> higher tile
        GroundTruthStem(x=120.0, y=10.0, height=10.0),  # outer corner -> last tile
        GroundTruthStem(x=0.0, y=0.0, height=10.0),
    ]
    by_tile = assign_gt_to_tiles(tiles, gt)
    assert len(by_tile["r000_c001"]) == 2
    assert len(by_tile["r000_c000"]) == 1


def test_assign_gt_outside_raises():
    tiles = [make_tile()]
    with pytest.raises(ValueError):
        assign_gt_to_tiles(tiles, [GroundTruthStem(x=-5.0, y=5.0, height=10.0)])


def test_config_round_trip(tmp_path):
    config = CampaignSimConfig(
        workers=tuple(WorkerProfile(worker_id=f"w{i}", sigma_pos=0.2, rng_seed=i) for i in range(10)),
        replication_k=10,
        clutter_points=((1.0, 2.0, 8.0),),
        campaign_seed=3,
    )
    path = tmp_path / "sim.json"
    save_sim_config(config, path)
    assert load_sim_config(path) == config
