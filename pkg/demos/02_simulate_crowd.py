"""What crowdworkers actually submit: jitter, misses, spurious stems, cheats.

Runs the same tile past workers of increasing sloppiness and prints what
each one hands back.
"""

from treecrowd.cloud import PointCloud
from treecrowd.crowdsim import WorkerProfile, simulate_submission
from treecrowd.evaluator import GroundTruthStem
from treecrowd.tiler import Tile

tile = Tile(
    tile_id="r000_c000",
    row=0,
    col=0,
    bounds=(0.0, 0.0, 60.0, 10.0),
    stretch_factor=1.0,
    points=PointCloud.empty(),
    dtm_patch=None,
)
gt = [
    GroundTruthStem(x=8.0, y=5.0, height=18.0),
    GroundTruthStem(x=22.0, y=4.0, height=12.0),
    GroundTruthStem(x=23.5, y=4.5, height=11.0),  # close pair: easily missed
    GroundTruthStem(x=40.0, y=6.0, height=4.0),   # small tree among tall ones
    GroundTruthStem(x=52.0, y=5.0, height=21.0),
]

profiles = [
    WorkerProfile(worker_id="careful", rng_seed=1),
    WorkerProfile(worker_id="typical", sigma_pos=0.3, sigma_h=1.0, miss_base=0.1, rng_seed=2),
    WorkerProfile(
        worker_id="rushed",
        sigma_pos=0.5,
        sigma_h=2.0,
        miss_base=0.2,
        miss_proximity_gain=0.3,
        small_tree_miss_gain=0.4,
        fp_rate=0.8,
        rng_seed=3,
    ),
    WorkerProfile(worker_id="cheat", dishonest=True, rng_seed=4),
]

print(f"tile holds {len(gt)} true stems\n")
for profile in profiles:
    sub = simulate_submission(gt, tile, profile)
    print(f"{profile.worker_id:>8}: ", end="")
    if sub.no_stems:
        print('"I see no stems"')
        continue
    print(f"{len(sub.annotations)} cylinders")
    for a in sub.annotations:
        print(f"          ({a.x:5.1f}, {a.y:4.1f})  h={a.height:4.1f}")

print("\nsame seed, same tile -> byte-identical answer:")
again = simulate_submission(gt, tile, profiles[1])
print("replay equal:", again == simulate_submission(gt, tile, profiles[1]))
