"""The job-dispensing service: qualification gating, leases, replication.

Drives the campaign engine in-process with a cast of workers: a careful one,
a sloppy one whose qualification fails, one who sees no stems and walks the
alternatives flow, and one whose lease expires.  Everything lands in an
append-only event log; the last step rebuilds the engine from that log and
shows the state is identical.
"""

import tempfile
from pathlib import Path

from treecrowd.errors import ExpiredLeaseError
from treecrowd.evaluator import GroundTruthStem
from treecrowd.service import NO_STEMS, Campaign, CampaignEngine, QualificationTile

log = Path(tempfile.mkdtemp(prefix="treecrowd_service_")) / "events.jsonl"

QUAL = (
    GroundTruthStem(x=5.0, y=5.0, height=10.0),
    GroundTruthStem(x=15.0, y=5.0, height=14.0),
)
campaign = Campaign(
    campaign_id="demo",
    payload_tiles=("r000_c000", "r000_c001", "r000_c002"),
    qualification_tiles=(QualificationTile(tile_id="qual", gt=QUAL),),
    replication_k=2,
)


class Clock:
    now = 0.0

    def __call__(self):
        return self.now


clock = Clock()
engine = CampaignEngine(log, clock=clock)
engine.create_campaign(campaign)

exact = [{"x": g.x, "y": g.y, "height": g.height} for g in QUAL]

# a careful worker: qualification matches, payload accepted, $0.10 owed
job = engine.next_job("careful")
print(f"careful gets {job['payload_tile_id']} (+ qualification {job['qualification_tile_id']})")
result = engine.submit_job(job["job_id"], exact, [{"x": 3.0, "y": 2.0, "height": 9.0}])
print("careful submits:", result["status"])

# a sloppy worker: one cylinder 1.2 m off -> rejected, no payment, payload discarded
job = engine.next_job("sloppy")
off = [dict(exact[0], x=exact[0]["x"] + 1.2), exact[1]]
result = engine.submit_job(job["job_id"], off, [{"x": 9.0, "y": 9.0, "height": 30.0}])
print("sloppy submits:", result["status"], "-", result["reason"])

# a worker who sees no stems: alternatives until the cap, then no_stems stands
job = engine.next_job("empty-eyes")
walked = [job["payload_tile_id"]]
for _ in range(4):
    job = engine.request_alternative(job["job_id"])
    walked.append(job["payload_tile_id"])
    if job["finalized_no_stems"]:
        break
print("empty-eyes walked tiles:", " -> ".join(dict.fromkeys(walked)))
result = engine.submit_job(job["job_id"], exact, NO_STEMS)
print("empty-eyes submits no_stems:", result["status"])

# a hoarder: reserves and disappears; the lease frees the tile after 30 min
job = engine.next_job("hoarder")
clock.now += 31 * 60
try:
    engine.submit_job(job["job_id"], exact, [])
except ExpiredLeaseError as exc:
    print("hoarder too late:", exc)

status = engine.campaign_status("demo")
print("\nstatus:", status["tiles"])
print(f"accepted jobs: {status['accepted_jobs']}, owed: ${status['owed_payment']:.2f}")
print("complete:", status["complete"])

# crash safety: a fresh engine replays the log into the same state
engine.close()
replayed = CampaignEngine(log, clock=clock)
print("\nreplayed status equals live status:", replayed.campaign_status("demo") == status)
print(f"event log: {log} ({sum(1 for _ in open(log))} events)")
