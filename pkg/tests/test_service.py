import json
import threading

import pytest

from treecrowd.errors import (
    DoubleSubmitError,
    ExpiredLeaseError,
    InvalidJobStateError,
    NoWorkAvailable,
    UnknownJobError,
)
from treecrowd.evaluator import GroundTruthStem
from treecrowd.integrator import CylinderAnnotation, Submission
from treecrowd.service import (
    NO_STEMS,
    Campaign,
    CampaignEngine,
    QualificationTile,
    create_app,
    validate_qualification,
)

QUAL_GT = (
    GroundTruthStem(x=5.0, y=5.0, height=10.0),
    GroundTruthStem(x=15.0, y=5.0, height=14.0),
)


class FakeClock:
    def __init__(self, start=1_000_000.0):
        self.now = start

    def __call__(self):
        return self.now

    def advance(self, seconds):
        self.now += seconds


def make_campaign(n_tiles=5, k=10, campaign_id="c1", **kw):
    return Campaign(
        campaign_id=campaign_id,
        payload_tiles=tuple(f"r000_c{i:03d}" for i in range(n_tiles)),
        qualification_tiles=(QualificationTile(tile_id="qual_000", gt=QUAL_GT),),
        replication_k=k,
        **kw,
    )


def make_engine(tmp_path, campaign=None, clock=None, name="log.jsonl"):
    clock = clock or FakeClock()
    engine = CampaignEngine(tmp_path / name, clock=clock)
    if campaign is not None:
        engine.create_campaign(campaign)
    return engine, clock


def qual_answers(offset=0.0, extra=False, height_offset=0.0):
    anns = [
        {"x": g.x + offset, "y": g.y, "height": g.height + height_offset} for g in QUAL_GT
    ]
    if extra:
        anns.append({"x": 30.0, "y": 5.0, "height": 9.0})
    return anns


def payload_answers(n=2):
    return [{"x": 1.0 + i, "y": 1.0, "height": 8.0} for i in range(n)]


# --- validate_qualification -------------------------------------------------------


def as_submission(anns):
    return Submission(
        worker_id="w",
        tile_id="qual_000",
        annotations=tuple(CylinderAnnotation(**a) for a in anns),
        no_stems=not anns,
    )


def test_qualification_exact_match_passes():
    ok, reason = validate_qualification(as_submission(qual_answers()), QUAL_GT)
    assert ok and reason is None


def test_qualification_extra_annotation_fails():
    ok, reason = validate_qualification(as_submission(qual_answers(extra=True)), QUAL_GT)
    assert not ok
    assert "expected 2" in reason


def test_qualification_offset_beyond_threshold_fails():
    ok, _ = validate_qualification(as_submission(qual_answers(offset=1.2)), QUAL_GT)
    assert not ok


def test_qualification_within_thresholds_passes():
    ok, _ = validate_qualification(
        as_submission(qual_answers(offset=0.9, height_offset=1.9)), QUAL_GT
    )
    assert ok


def test_qualification_no_stems_against_nonempty_gt_fails():
    sub = Submission(worker_id="w", tile_id="qual_000", no_stems=True)
    ok, _ = validate_qualification(sub, QUAL_GT)
    assert not ok


# --- job dispensing ---------------------------------------------------------------


def test_fresh_campaign_serves_lowest_tile(tmp_path):
    engine, _ = make_engine(tmp_path, make_campaign())
    job = engine.next_job("alice")
    assert job["payload_tile_id"] == "r000_c000"
    assert job["qualification_tile_id"] == "qual_000"
    assert job["state"] == "reserved"


def test_least_covered_tile_preferred(tmp_path):
    engine, _ = make_engine(tmp_path, make_campaign(n_tiles=2, k=10))
    job = engine.next_job("alice")
    engine.submit_job(job["job_id"], qual_answers(), payload_answers())
    # tile c000 now has one accepted submission; bob gets c001
    assert engine.next_job("bob")["payload_tile_id"] == "r000_c001"


def test_worker_never_reserves_same_tile_twice_concurrently(tmp_path):
    engine, _ = make_engine(tmp_path, make_campaign(n_tiles=2))
    j1 = engine.next_job("alice")
    j2 = engine.next_job("alice")
    assert j1["payload_tile_id"] != j2["payload_tile_id"]
    with pytest.raises(NoWorkAvailable):
        engine.next_job("alice")


def test_worker_exhausted_after_accepting_all_tiles(tmp_path):
    engine, _ = make_engine(tmp_path, make_campaign(n_tiles=2, k=10))
    for _ in range(2):
        job = engine.next_job("alice")
        engine.submit_job(job["job_id"], qual_answers(), payload_answers())
    with pytest.raises(NoWorkAvailable):
        engine.next_job("alice")


def test_reservation_guard_prevents_overbooking(tmp_path):
    engine, _ = make_engine(tmp_path, make_campaign(n_tiles=1, k=2))
    engine.next_job("w1")
    engine.next_job("w2")
    with pytest.raises(NoWorkAvailable):
        engine.next_job("w3")  # accepted + live reservations already reach k


def test_concurrent_workers_get_distinct_reservations(tmp_path):
    engine, _ = make_engine(tmp_path, make_campaign(n_tiles=8, k=3))
    jobs, errors = [], []

    def grab(worker):
        try:
            for _ in range(3):
                jobs.append((worker, engine.next_job(worker)))
        except NoWorkAvailable:
            errors.append(worker)

    threads = [threading.Thread(target=grab, args=(f"w{i}",)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    live_pairs = [(w, j["payload_tile_id"]) for w, j in jobs]
    assert len(set(live_pairs)) == len(live_pairs)
    # replaying the serialized log yields the same reservations
    replayed = CampaignEngine(engine.log_path, clock=lambda: 0.0)
    assert {j.job_id for j in replayed._jobs.values()} == {j["job_id"] for _, j in jobs}


# --- submission flow ----------------------------------------------------------------


def test_accept_increments_progress_and_ledger(tmp_path):
    engine, _ = make_engine(tmp_path, make_campaign())
    job = engine.next_job("alice")
    result = engine.submit_job(job["job_id"], qual_answers(), payload_answers(3))
    assert result["status"] == "accepted"
    status = engine.campaign_status("c1")
    assert status["tiles"]["r000_c000"] == 1
    assert status["owed_payment"] == pytest.approx(0.10)
    subs = engine.accepted_submissions("c1")
    assert len(subs) == 1 and len(subs[0].annotations) == 3


def test_reject_discards_payload(tmp_path):
    engine, _ = make_engine(tmp_path, make_campaign())
    job = engine.next_job("alice")
    result = engine.submit_job(job["job_id"], qual_answers(offset=1.2), payload_answers())
    assert result["status"] == "rejected"
    assert "qualification_failed" in result["reason"]
    status = engine.campaign_status("c1")
    assert status["tiles"]["r000_c000"] == 0
    assert status["owed_payment"] == 0
    assert engine.accepted_submissions("c1") == []
    # tile is back in the pool for the same worker via a new job
    assert engine.next_job("alice")["payload_tile_id"] == "r000_c000"


def test_submit_after_lease_expiry(tmp_path):
    clock = FakeClock()
    engine, _ = make_engine(tmp_path, make_campaign(), clock=clock)
    job = engine.next_job("alice")
    clock.advance(31 * 60)
    with pytest.raises(ExpiredLeaseError):
        engine.submit_job(job["job_id"], qual_answers(), payload_answers())
    assert engine._jobs[job["job_id"]].state == "expired"
    # the tile is free again
    assert engine.next_job("bob")["payload_tile_id"] == "r000_c000"


def test_double_submit_rejected(tmp_path):
    engine, _ = make_engine(tmp_path, make_campaign())
    job = engine.next_job("alice")
    engine.submit_job(job["job_id"], qual_answers(), payload_answers())
    with pytest.raises(DoubleSubmitError):
        engine.submit_job(job["job_id"], qual_answers(), payload_answers())


def test_unknown_job_rejected(tmp_path):
    engine, _ = make_engine(tmp_path, make_campaign())
    with pytest.raises(UnknownJobError):
        engine.submit_job("job-999999", qual_answers(), payload_answers())


def test_replication_cap_never_exceeded(tmp_path):
    engine, _ = make_engine(tmp_path, make_campaign(n_tiles=1, k=3))
    for i in range(3):
        job = engine.next_job(f"w{i}")
        engine.submit_job(job["job_id"], qual_answers(), payload_answers())
    status = engine.campaign_status("c1")
    assert status["tiles"]["r000_c000"] == 3
    assert status["complete"]
    with pytest.raises(NoWorkAvailable):
        engine.next_job("w9")


# --- alternatives / no-stems ---------------------------------------------------------


def test_alternative_swaps_tile(tmp_path):
    engine, _ = make_engine(tmp_path, make_campaign(n_tiles=4))
    job = engine.next_job("alice")
    first_tile = job["payload_tile_id"]
    swapped = engine.request_alternative(job["job_id"])
    assert swapped["payload_tile_id"] != first_tile
    assert swapped["asserted_tiles"] == [first_tile]
    assert not swapped["finalized_no_stems"]


def test_three_swaps_then_finalized(tmp_path):
    engine, _ = make_engine(tmp_path, make_campaign(n_tiles=10))
    job = engine.next_job("alice")
    seen = [job["payload_tile_id"]]
    for _ in range(3):
        job = engine.request_alternative(job["job_id"])
        seen.append(job["payload_tile_id"])
    assert len(set(seen)) == 4
    finalized = engine.request_alternative(job["job_id"])
    assert finalized["finalized_no_stems"]
    assert finalized["payload_tile_id"] == seen[-1]
    again = engine.request_alternative(job["job_id"])
    assert again == finalized
    # submit with the standing no-stems answer
    result = engine.submit_job(job["job_id"], qual_answers(), NO_STEMS)
    assert result["status"] == "accepted"
    status = engine.campaign_status("c1")
    assert sum(status["tiles"].values()) == 4  # all four asserted tiles credited once
    assert status["accepted_jobs"] == 1


def test_no_stems_payload_requires_finalization(tmp_path):
    engine, _ = make_engine(tmp_path, make_campaign())
    job = engine.next_job("alice")
    with pytest.raises(InvalidJobStateError):
        engine.submit_job(job["job_id"], qual_answers(), NO_STEMS)


def test_asserted_tiles_credited_alongside_payload(tmp_path):
    engine, _ = make_engine(tmp_path, make_campaign(n_tiles=3))
    job = engine.next_job("alice")
    t1 = job["payload_tile_id"]
    job = engine.request_alternative(job["job_id"])
    t2 = job["payload_tile_id"]
    result = engine.submit_job(job["job_id"], qual_answers(), payload_answers())
    assert result["status"] == "accepted"
    status = engine.campaign_status("c1")
    assert status["tiles"][t1] == 1  # empty no-stems submission
    assert status["tiles"][t2] == 1  # real payload
    subs = {s.tile_id: s for s in engine.accepted_submissions("c1")}
    assert subs[t1].no_stems and not subs[t1].annotations
    assert not subs[t2].no_stems and subs[t2].annotations


def test_empty_tile_campaign_completes_with_no_stems(tmp_path):
    engine, _ = make_engine(tmp_path, make_campaign(n_tiles=1, k=10))
    for i in range(10):
        job = engine.next_job(f"w{i}")
        job = engine.request_alternative(job["job_id"])  # only tile -> finalized
        assert job["finalized_no_stems"]
        engine.submit_job(job["job_id"], qual_answers(), NO_STEMS)
    status = engine.campaign_status("c1")
    assert status["complete"]
    stems = engine.integrate_campaign("c1")
    assert stems == {"r000_c000": []}


def test_assertion_never_double_credits_a_worker(tmp_path):
    # job1 asserts no-stems on tile A then swaps; meanwhile job2 gets tile A
    # annotated and accepted. When job1's assertion materializes, the worker
    # must not be credited twice on tile A.
    engine, _ = make_engine(tmp_path, make_campaign(n_tiles=3, k=10))
    job1 = engine.next_job("alice")
    tile_a = job1["payload_tile_id"]
    job1 = engine.request_alternative(job1["job_id"])  # asserts tile_a, swaps
    assert tile_a in job1["asserted_tiles"]
    job2 = engine.next_job("alice")
    assert job2["payload_tile_id"] == tile_a  # reservation moved off tile_a
    engine.submit_job(job2["job_id"], qual_answers(), payload_answers())
    engine.submit_job(job1["job_id"], qual_answers(), payload_answers())
    status = engine.campaign_status("c1")
    assert status["tiles"][tile_a] == 1  # annotated submission only, once
    subs = [s for s in engine.accepted_submissions("c1") if s.tile_id == tile_a]
    assert len(subs) == 1 and not subs[0].no_stems


def test_full_campaign_owed_payment(tmp_path):
    engine, _ = make_engine(tmp_path, make_campaign(n_tiles=5, k=10))
    for w in range(10):
        for _ in range(5):
            job = engine.next_job(f"w{w:02d}")
            engine.submit_job(job["job_id"], qual_answers(), payload_answers())
    status = engine.campaign_status("c1")
    assert status["complete"]
    assert status["accepted_jobs"] == 50
    assert status["owed_payment"] == pytest.approx(5.00)


# --- crash safety / replay ------------------------------------------------------------


def scripted_session(engine, clock, n_jobs=50):
    """Deterministic mixed workload: passes, failures, alternatives, expiries."""
    outcomes = []
    for i in range(n_jobs):
        worker = f"w{i % 7:02d}"
        try:
            job = engine.next_job(worker)
        except NoWorkAvailable:
            outcomes.append((i, "no_work"))
            clock.advance(60)
            continue
        action = i % 5
        if action == 0:
            result = engine.submit_job(job["job_id"], qual_answers(offset=1.5), payload_answers())
        elif action == 1:
            job = engine.request_alternative(job["job_id"])
            result = engine.submit_job(job["job_id"], qual_answers(), payload_answers())
        elif action == 2:
            clock.advance(31 * 60)
            try:
                result = engine.submit_job(job["job_id"], qual_answers(), payload_answers())
            except ExpiredLeaseError:
                result = {"status": "expired"}
        else:
            result = engine.submit_job(job["job_id"], qual_answers(), payload_answers(1 + i % 3))
        outcomes.append((i, result["status"]))
        clock.advance(17)
    return outcomes


def test_scripted_session_replays_identically(tmp_path):
    campaign = make_campaign(n_tiles=6, k=10)
    engine_a, clock_a = make_engine(tmp_path, campaign, name="a.jsonl")
    outcomes_a = scripted_session(engine_a, clock_a)
    status_a = engine_a.campaign_status("c1")

    # same script, but the engine is torn down and rebuilt from the log at
    # fixed points (including mid-run clock state carried by the fake clock)
    clock_b = FakeClock()
    engine_b = CampaignEngine(tmp_path / "b.jsonl", clock=clock_b)
    engine_b.create_campaign(campaign)
    outcomes_b = []
    restarts = {3, 7, 12, 18, 22, 29, 31, 38, 44, 47}
    for i in range(50):
        if i in restarts:
            engine_b.close()
            engine_b = CampaignEngine(tmp_path / "b.jsonl", clock=clock_b)
        worker = f"w{i % 7:02d}"
        try:
            job = engine_b.next_job(worker)
        except NoWorkAvailable:
            outcomes_b.append((i, "no_work"))
            clock_b.advance(60)
            continue
        action = i % 5
        if action == 0:
            result = engine_b.submit_job(job["job_id"], qual_answers(offset=1.5), payload_answers())
        elif action == 1:
            job = engine_b.request_alternative(job["job_id"])
            result = engine_b.submit_job(job["job_id"], qual_answers(), payload_answers())
        elif action == 2:
            clock_b.advance(31 * 60)
            try:
                result = engine_b.submit_job(job["job_id"], qual_answers(), payload_answers())
            except ExpiredLeaseError:
                result = {"status": "expired"}
        else:
            result = engine_b.submit_job(job["job_id"], qual_answers(), payload_answers(1 + i % 3))
        outcomes_b.append((i, result["status"]))
        clock_b.advance(17)

    assert outcomes_a == outcomes_b
    status_b = engine_b.campaign_status("c1")
    assert status_a == status_b
    # the logs themselves are identical event for event
    events_a = [json.loads(l) for l in open(tmp_path / "a.jsonl")]
    events_b = [json.loads(l) for l in open(tmp_path / "b.jsonl")]
    assert events_a == events_b


def test_replay_from_any_prefix_is_consistent(tmp_path):
    campaign = make_campaign(n_tiles=4, k=5)
    engine, clock = make_engine(tmp_path, campaign)
    scripted_session(engine, clock, n_jobs=30)
    final_status = engine.campaign_status("c1")
    lines = open(tmp_path / "log.jsonl").read().splitlines()
    for cut in [1, 5, len(lines) // 2, len(lines) - 1, len(lines)]:
        prefix_path = tmp_path / f"prefix_{cut}.jsonl"
        prefix_path.write_text("\n".join(lines[:cut]) + "\n")
        replayed = CampaignEngine(prefix_path, clock=clock)
        if cut == len(lines):
            assert replayed.campaign_status("c1") == final_status
        else:
            status = replayed.campaign_status("c1")
            assert status["accepted_jobs"] <= final_status["accepted_jobs"]


def test_torn_tail_line_ignored(tmp_path):
    campaign = make_campaign(n_tiles=2, k=2)
    engine, clock = make_engine(tmp_path, campaign)
    engine.next_job("alice")
    raw = open(tmp_path / "log.jsonl").read()
    torn = tmp_path / "torn.jsonl"
    torn.write_text(raw + '{"seq": 99, "timestamp"')
    replayed = CampaignEngine(torn, clock=clock)
    assert len(replayed._jobs) == 1


def test_mid_log_corruption_raises(tmp_path):
    from treecrowd.errors import TreecrowdError

    campaign = make_campaign(n_tiles=2, k=2)
    engine, clock = make_engine(tmp_path, campaign)
    engine.next_job("alice")
    lines = open(tmp_path / "log.jsonl").read().splitlines()
    bad = tmp_path / "bad.jsonl"
    bad.write_text(lines[0] + "\n{broken\n" + lines[1] + "\n")
    with pytest.raises(TreecrowdError, match="corrupt event log"):
        CampaignEngine(bad, clock=clock)


# --- HTTP endpoints --------------------------------------------------------------------


@pytest.fixture()
def client(tmp_path):
    from fastapi.testclient import TestClient

    campaign = make_campaign(n_tiles=2, k=2)
    engine, clock = make_engine(tmp_path, campaign)
    # minimal bundle dir for tile-file serving
    bundle = tmp_path / "bundles" / "r000_c000"
    bundle.mkdir(parents=True)
    (bundle / "manifest.json").write_text('{"tile_id": "r000_c000"}')
    (bundle / "points.xyz").write_text("1.000000 2.000000 3.000000 0 0 0\n")
    (bundle / "dtm.asc").write_text("ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n5.0\n")
    engine.bundle_dir = tmp_path / "bundles"
    return TestClient(create_app(engine))


def test_http_job_cycle(client):
    r = client.get("/api/jobs/next", params={"worker": "alice"})
    assert r.status_code == 200
    job = r.json()
    assert job["payload_tile_id"] == "r000_c000"

    r = client.post(
        f"/api/jobs/{job['job_id']}/submission",
        json={"qualification": qual_answers(), "payload": payload_answers()},
    )
    assert r.status_code == 200
    assert r.json()["status"] == "accepted"

    r = client.get("/api/campaigns/c1/status")
    assert r.status_code == 200
    assert r.json()["tiles"]["r000_c000"] == 1

    r = client.post("/api/campaigns/c1/integrate", json={})
    assert r.status_code == 200
    assert "tiles" in r.json()


def test_http_no_work_is_204(client):
    client.get("/api/jobs/next", params={"worker": "w1"})
    client.get("/api/jobs/next", params={"worker": "w1"})
    client.get("/api/jobs/next", params={"worker": "w2"})
    client.get("/api/jobs/next", params={"worker": "w2"})
    r = client.get("/api/jobs/next", params={"worker": "w3"})
    assert r.status_code == 204


def test_http_tile_files_bit_identical(client, tmp_path):
    r = client.get("/api/tiles/r000_c000/points")
    assert r.status_code == 200
    assert r.content == (tmp_path / "bundles" / "r000_c000" / "points.xyz").read_bytes()
    r = client.get("/api/tiles/r000_c000/manifest")
    assert r.status_code == 200
    r = client.get("/api/tiles/r000_c000/dtm")
    assert r.status_code == 200
    r = client.get("/api/tiles/nope/points")
    assert r.status_code == 404


def test_http_alternative_and_errors(client):
    job = client.get("/api/jobs/next", params={"worker": "alice"}).json()
    r = client.post(f"/api/jobs/{job['job_id']}/alternative")
    assert r.status_code == 200
    assert r.json()["payload_tile_id"] != job["payload_tile_id"]
    r = client.post("/api/jobs/job-424242/submission", json={"qualification": [], "payload": []})
    assert r.status_code == 404
    r = client.get("/api/campaigns/unknown/status")
    assert r.status_code == 404
