"""Crash-safe campaign service: dispenses qualification+payload job pairs,
gates acceptance on the qualification tile, tracks k-fold replication and a
payment ledger.

All state lives in an append-only JSONL event log plus an in-memory
projection.  Commands take the single writer lock, compute an event from the
current projection (recording every decision - chosen tiles, lease expiry,
timestamps - inside the event), append it durably, then apply it.  Replaying
the log therefore reconstructs the projection exactly; restarting the service
at any log position converges to the same state.
"""

from __future__ import annotations

import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    DoubleSubmitError,
    ExpiredLeaseError,
    InvalidJobStateError,
    NoWorkAvailable,
    ProtocolError,
    TreecrowdError,
    UnknownCampaignError,
    UnknownJobError,
)
from .evaluator import GroundTruthStem, match_one_to_one
from .integrator import (
    CylinderAnnotation,
    IntegrationParams,
    Submission,
    integrate_tile,
)

NO_STEMS = "no_stems"


@dataclass(frozen=True)
class QualificationTile:
    tile_id: str
    gt: tuple[GroundTruthStem, ...]

    def __post_init__(self):
        object.__setattr__(self, "gt", tuple(self.gt))


@dataclass(frozen=True)
class Campaign:
    campaign_id: str
    payload_tiles: tuple[str, ...]
    qualification_tiles: tuple[QualificationTile, ...]
    replication_k: int = 10
    unit_price: float = 0.10
    fee_rate: float = 0.10
    lease_minutes: float = 30.0
    max_alternatives: int = 3
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "payload_tiles", tuple(self.payload_tiles))
        object.__setattr__(self, "qualification_tiles", tuple(self.qualification_tiles))
        if self.replication_k < 1:
            raise ValueError("replication_k must be >= 1")
        if not self.qualification_tiles:
            raise ValueError("campaign needs at least one qualification tile")
        if not self.payload_tiles:
            raise ValueError("campaign needs at least one payload tile")


def validate_qualification(submission: Submission, gt) -> tuple[bool, str | None]:
    """Pass iff the annotation count equals |gt| and a one-to-one match covers all of gt
    within the 1 m position / 2 m height thresholds."""
    gt = list(gt)
    annotations = list(submission.annotations)
    if submission.no_stems:
        if not gt:
            return True, None
        return False, f"expected {len(gt)} stems, got a no-stems assertion"
    if len(annotations) != len(gt):
        return False, f"expected {len(gt)} stems, got {len(annotations)}"
    if not gt:
        return True, None
    pseudo = [GroundTruthStem(x=a.x, y=a.y, height=a.height) for a in annotations]
    result = match_one_to_one(gt, pseudo, d_pos=1.0, d_h=2.0)
    if result.tp != len(gt):
        return False, f"only {result.tp} of {len(gt)} stems match within 1 m / 2 m"
    return True, None


@dataclass
class _JobRecord:
    job_id: str
    campaign_id: str
    worker_id: str
    qualification_tile_id: str
    payload_tile_id: str
    state: str  # reserved | accepted | rejected | expired
    lease_expiry: float
    asserted_tiles: list[str] = field(default_factory=list)
    alternatives_used: int = 0
    finalized_no_stems: bool = False

    def descriptor(self) -> dict:
        return {
            "job_id": self.job_id,
            "campaign_id": self.campaign_id,
            "worker_id": self.worker_id,
            "qualification_tile_id": self.qualification_tile_id,
            "payload_tile_id": self.payload_tile_id,
            "state": self.state,
            "lease_expiry": self.lease_expiry,
            "asserted_tiles": list(self.asserted_tiles),
            "finalized_no_stems": self.finalized_no_stems,
        }


@dataclass
class _TileProgress:
    accepted: dict[str, Submission] = field(default_factory=dict)  # worker -> submission

    @property
    def accepted_count(self) -> int:
        return len(self.accepted)


class CampaignEngine:
    """Single-writer, event-sourced campaign state machine."""

    def __init__(self, log_path, bundle_dir=None, clock=time.time):
        self._lock = threading.Lock()
        self._clock = clock
        self.log_path = Path(log_path)
        self.bundle_dir = Path(bundle_dir) if bundle_dir else None
        self._campaigns: dict[str, Campaign] = {}
        self._jobs: dict[str, _JobRecord] = {}
        self._progress: dict[tuple[str, str], _TileProgress] = {}
        self._accepted_jobs: dict[str, int] = {}
        self._seq = 0
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        self._replay()
        self._fh = open(self.log_path, "a", encoding="utf-8", newline="\n")

    def close(self) -> None:
        self._fh.close()

    # --- event plumbing -------------------------------------------------

    def _replay(self) -> None:
        if not self.log_path.exists():
            return
        with open(self.log_path, "r", encoding="utf-8") as fh:
            lines = fh.read().split("\n")
        for i, line in enumerate(lines):
            if not line.strip():
                continue
            try:
                event = json.loads(line)
            except json.JSONDecodeError:
                if all(not rest.strip() for rest in lines[i + 1 :]):
                    break  # torn tail from a crash mid-append; ignore it
                raise TreecrowdError(f"corrupt event log at line {i + 1}")
            self._apply(event)
            self._seq = event["seq"]

    def _append(self, kind: str, payload: dict) -> dict:
        self._seq += 1
        event = {"seq": self._seq, "timestamp": self._clock(), "kind": kind, "payload": payload}
        self._fh.write(json.dumps(event, sort_keys=True) + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())
        self._apply(event)
        return event

    def _apply(self, event: dict) -> None:
        payload = event["payload"]
        kind = event["kind"]
        if kind == "campaign_created":
            campaign = _campaign_from_dict(payload)
            self._campaigns[campaign.campaign_id] = campaign
            self._accepted_jobs.setdefault(campaign.campaign_id, 0)
            for t in campaign.payload_tiles:
                self._progress.setdefault((campaign.campaign_id, t), _TileProgress())
        elif kind == "job_reserved":
            self._jobs[payload["job_id"]] = _JobRecord(
                job_id=payload["job_id"],
                campaign_id=payload["campaign_id"],
                worker_id=payload["worker_id"],
                qualification_tile_id=payload["qualification_tile_id"],
                payload_tile_id=payload["payload_tile_id"],
                state="reserved",
                lease_expiry=payload["lease_expiry"],
            )
        elif kind == "alternative_granted":
            job = self._jobs[payload["job_id"]]
            asserted = payload["asserted_tile_id"]
            if asserted not in job.asserted_tiles:
                job.asserted_tiles.append(asserted)
            if payload["new_payload_tile_id"] is not None:
                job.payload_tile_id = payload["new_payload_tile_id"]
                job.alternatives_used += 1
            if payload["finalized"]:
                job.finalized_no_stems = True
        elif kind == "job_resolved":
            job = self._jobs[payload["job_id"]]
            campaign = self._campaigns[job.campaign_id]
            if not payload["accepted"]:
                job.state = "rejected"
                return
            job.state = "accepted"
            self._accepted_jobs[job.campaign_id] += 1
            stamp = event["timestamp"]
            for tile_id in job.asserted_tiles:
                self._credit(
                    campaign,
                    tile_id,
                    Submission(
                        worker_id=job.worker_id, tile_id=tile_id, no_stems=True, submitted_at=stamp
                    ),
                )
            if payload["annotations"] is not None:
                anns = tuple(
                    CylinderAnnotation(x=a["x"], y=a["y"], height=a["height"])
                    for a in payload["annotations"]
                )
                self._credit(
                    campaign,
                    job.payload_tile_id,
                    Submission(
                        worker_id=job.worker_id,
                        tile_id=job.payload_tile_id,
                        annotations=anns,
                        no_stems=not anns,
                        submitted_at=stamp,
                    ),
                )
        elif kind == "job_expired":
            self._jobs[payload["job_id"]].state = "expired"
        else:
            raise TreecrowdError(f"unknown event kind {kind!r}")

    def _credit(self, campaign: Campaign, tile_id: str, submission: Submission) -> None:
        # replication cap and one-acceptance-per-worker are hard invariants;
        # an assertion that would break them stays in the log as audit only
        progress = self._progress.setdefault((campaign.campaign_id, tile_id), _TileProgress())
        if submission.worker_id in progress.accepted:
            return
        if progress.accepted_count >= campaign.replication_k:
            return
        progress.accepted[submission.worker_id] = submission

    # --- queries ----------------------------------------------------------

    def _live_reservations(self, campaign_id: str, tile_id: str | None = None):
        for job in self._jobs.values():
            if job.campaign_id != campaign_id or job.state != "reserved":
                continue
            if tile_id is None or job.payload_tile_id == tile_id:
                yield job

    def _sweep_expired(self, now: float) -> None:
        stale = sorted(
            j.job_id
            for j in self._jobs.values()
            if j.state == "reserved" and j.lease_expiry < now
        )
        for job_id in stale:
            self._append("job_expired", {"job_id": job_id})

    def _candidate_tiles(self, campaign: Campaign, worker_id: str, exclude=()):
        """Incomplete tiles this worker may still take, least-covered first."""
        out = []
        for tile_id in campaign.payload_tiles:
            if tile_id in exclude:
                continue
            progress = self._progress[(campaign.campaign_id, tile_id)]
            if progress.accepted_count >= campaign.replication_k:
                continue
            if worker_id in progress.accepted:
                continue
            live = list(self._live_reservations(campaign.campaign_id, tile_id))
            if any(j.worker_id == worker_id for j in live):
                continue
            if progress.accepted_count + len(live) >= campaign.replication_k:
                continue
            out.append((progress.accepted_count, tile_id))
        out.sort()
        return [tile_id for _, tile_id in out]

    # --- commands -----------------------------------------------------------

    def create_campaign(self, campaign: Campaign) -> None:
        with self._lock:
            if campaign.campaign_id in self._campaigns:
                raise TreecrowdError(f"campaign {campaign.campaign_id!r} already exists")
            self._append("campaign_created", _campaign_to_dict(campaign))

    def next_job(self, worker_id: str) -> dict:
        if not worker_id:
            raise ValueError("worker id required")
        with self._lock:
            now = self._clock()
            self._sweep_expired(now)
            for campaign_id in sorted(self._campaigns):
                campaign = self._campaigns[campaign_id]
                candidates = self._candidate_tiles(campaign, worker_id)
                if not candidates:
                    continue
                seq = self._seq + 1
                rng = random.Random(f"{campaign.seed}:{seq}")
                qual = campaign.qualification_tiles[rng.randrange(len(campaign.qualification_tiles))]
                event = self._append(
                    "job_reserved",
                    {
                        "job_id": f"job-{seq:06d}",
                        "campaign_id": campaign_id,
                        "worker_id": worker_id,
                        "qualification_tile_id": qual.tile_id,
                        "payload_tile_id": candidates[0],
                        "lease_expiry": now + campaign.lease_minutes * 60.0,
                    },
                )
                return self._jobs[event["payload"]["job_id"]].descriptor()
            raise NoWorkAvailable(f"no open tile available for worker {worker_id!r}")

    def _checked_job(self, job_id: str, now: float) -> _JobRecord:
        job = self._jobs.get(job_id)
        if job is None:
            raise UnknownJobError(f"unknown job {job_id!r}")
        if job.state in ("accepted", "rejected"):
            raise DoubleSubmitError(f"job {job_id} already resolved ({job.state})")
        if job.state == "expired":
            raise ExpiredLeaseError(f"job {job_id} lease expired")
        if job.lease_expiry < now:
            self._append("job_expired", {"job_id": job_id})
            raise ExpiredLeaseError(f"job {job_id} lease expired")
        return job

    def request_alternative(self, job_id: str) -> dict:
        """Record a no-stems assertion on the current payload tile and swap it.

        After max_alternatives swaps (or when no alternative tile exists) the
        job is finalized: the assertion stands as the payload answer.
        """
        with self._lock:
            now = self._clock()
            job = self._checked_job(job_id, now)
            if job.finalized_no_stems:
                return job.descriptor()
            campaign = self._campaigns[job.campaign_id]
            new_tile = None
            if job.alternatives_used < campaign.max_alternatives:
                exclude = set(job.asserted_tiles) | {job.payload_tile_id}
                candidates = self._candidate_tiles(campaign, job.worker_id, exclude=exclude)
                new_tile = candidates[0] if candidates else None
            self._append(
                "alternative_granted",
                {
                    "job_id": job_id,
                    "asserted_tile_id": job.payload_tile_id,
                    "new_payload_tile_id": new_tile,
                    "finalized": new_tile is None,
                },
            )
            return self._jobs[job_id].descriptor()

    def submit_job(self, job_id: str, qualification, payload) -> dict:
        """Resolve a reserved job: qualification pass => accepted (payload credited,
        assertions credited as empty submissions, payment owed); fail => rejected."""
        with self._lock:
            now = self._clock()
            job = self._checked_job(job_id, now)
            campaign = self._campaigns[job.campaign_id]
            qual_tile = next(
                (q for q in campaign.qualification_tiles if q.tile_id == job.qualification_tile_id),
                None,
            )
            if qual_tile is None:  # pragma: no cover - campaign config guarantees it
                raise TreecrowdError("job references an unknown qualification tile")
            if not isinstance(qualification, Submission):
                anns = tuple(
                    a if isinstance(a, CylinderAnnotation) else CylinderAnnotation(**a)
                    for a in qualification
                )
                qualification = Submission(
                    worker_id=job.worker_id,
                    tile_id=job.qualification_tile_id,
                    annotations=anns,
                    no_stems=not anns,
                )

            if isinstance(payload, str) and payload == NO_STEMS:
                annotations = None
                if not job.finalized_no_stems:
                    raise InvalidJobStateError(
                        "no-stems payload requires exhausting the alternatives first"
                    )
            else:
                annotations = [
                    a if isinstance(a, CylinderAnnotation) else CylinderAnnotation(**a)
                    for a in payload
                ]

            passed, detail = validate_qualification(qualification, qual_tile.gt)
            rejection = None if passed else f"qualification_failed: {detail}"
            if passed and annotations is not None:
                progress = self._progress[(job.campaign_id, job.payload_tile_id)]
                if progress.accepted_count >= campaign.replication_k:
                    passed, rejection = False, "tile_complete"
                elif job.worker_id in progress.accepted:
                    passed, rejection = False, "worker_already_credited"
            self._append(
                "job_resolved",
                {
                    "job_id": job_id,
                    "accepted": passed,
                    "reason": rejection,
                    # rejected payloads are never persisted, so they cannot
                    # leak into integration inputs
                    "annotations": (
                        [{"x": a.x, "y": a.y, "height": a.height} for a in annotations]
                        if (passed and annotations is not None)
                        else None
                    ),
                },
            )
            return {"status": "accepted" if passed else "rejected", "reason": rejection}

    def campaign_status(self, campaign_id: str) -> dict:
        with self._lock:
            campaign = self._campaigns.get(campaign_id)
            if campaign is None:
                raise UnknownCampaignError(f"unknown campaign {campaign_id!r}")
            tiles = {
                tile_id: self._progress[(campaign_id, tile_id)].accepted_count
                for tile_id in campaign.payload_tiles
            }
            accepted_jobs = self._accepted_jobs[campaign_id]
            return {
                "campaign_id": campaign_id,
                "replication_k": campaign.replication_k,
                "tiles": tiles,
                "accepted_submissions": sum(tiles.values()),
                "accepted_jobs": accepted_jobs,
                "owed_payment": round(accepted_jobs * campaign.unit_price, 10),
                "complete": all(c >= campaign.replication_k for c in tiles.values()),
            }

    def accepted_submissions(self, campaign_id: str) -> list[Submission]:
        with self._lock:
            campaign = self._campaigns.get(campaign_id)
            if campaign is None:
                raise UnknownCampaignError(f"unknown campaign {campaign_id!r}")
            out: list[Submission] = []
            for tile_id in campaign.payload_tiles:
                progress = self._progress[(campaign_id, tile_id)]
                out.extend(progress.accepted[w] for w in sorted(progress.accepted))
            return out

    def integrate_campaign(self, campaign_id: str, params: IntegrationParams = IntegrationParams()) -> dict:
        subs = self.accepted_submissions(campaign_id)
        by_tile: dict[str, list[Submission]] = {}
        for s in subs:
            by_tile.setdefault(s.tile_id, []).append(s)
        return {
            tile_id: integrate_tile(by_tile[tile_id], params) for tile_id in sorted(by_tile)
        }


def _campaign_to_dict(campaign: Campaign) -> dict:
    return {
        "campaign_id": campaign.campaign_id,
        "payload_tiles": list(campaign.payload_tiles),
        "qualification_tiles": [
            {
                "tile_id": q.tile_id,
                "gt": [{"x": s.x, "y": s.y, "height": s.height} for s in q.gt],
            }
            for q in campaign.qualification_tiles
        ],
        "replication_k": campaign.replication_k,
        "unit_price": campaign.unit_price,
        "fee_rate": campaign.fee_rate,
        "lease_minutes": campaign.lease_minutes,
        "max_alternatives": campaign.max_alternatives,
        "seed": campaign.seed,
    }


def _campaign_from_dict(doc: dict) -> Campaign:
    return Campaign(
        campaign_id=doc["campaign_id"],
        payload_tiles=tuple(doc["payload_tiles"]),
        qualification_tiles=tuple(
            QualificationTile(
                tile_id=q["tile_id"],
                gt=tuple(GroundTruthStem(**s) for s in q["gt"]),
            )
            for q in doc["qualification_tiles"]
        ),
        replication_k=int(doc.get("replication_k", 10)),
        unit_price=float(doc.get("unit_price", 0.10)),
        fee_rate=float(doc.get("fee_rate", 0.10)),
        lease_minutes=float(doc.get("lease_minutes", 30.0)),
        max_alternatives=int(doc.get("max_alternatives", 3)),
        seed=int(doc.get("seed", 0)),
    )


# --- HTTP layer ---------------------------------------------------------------


def create_app(engine: CampaignEngine):
    """FastAPI application exposing the campaign protocol over HTTP."""
    from fastapi import Body, FastAPI, Query, Response
    from fastapi.responses import JSONResponse, PlainTextResponse

    app = FastAPI(title="treecrowd campaign service")
    status_by_code = {
        "unknown_campaign": 404,
        "unknown_job": 404,
        "expired_lease": 410,
        "double_submit": 409,
        "invalid_job_state": 409,
    }

    def protocol_error(exc) -> JSONResponse:
        return JSONResponse(
            status_code=status_by_code.get(exc.code, 400),
            content={"error": exc.code, "message": str(exc)},
        )

    @app.get("/api/jobs/next")
    def jobs_next(worker: str = Query(...)):
        try:
            return engine.next_job(worker)
        except NoWorkAvailable:
            return Response(status_code=204)

    @app.get("/api/tiles/{tile_id}/manifest")
    def tile_manifest(tile_id: str):
        return _tile_file(tile_id, "manifest.json", "application/json")

    @app.get("/api/tiles/{tile_id}/points")
    def tile_points(tile_id: str):
        return _tile_file(tile_id, "points.xyz", "text/plain")

    @app.get("/api/tiles/{tile_id}/dtm")
    def tile_dtm(tile_id: str):
        return _tile_file(tile_id, "dtm.asc", "text/plain")

    def _tile_file(tile_id: str, name: str, media_type: str):
        if engine.bundle_dir is None:
            return JSONResponse(status_code=404, content={"error": "no_bundles"})
        path = engine.bundle_dir / tile_id / name
        if not path.exists():
            return JSONResponse(status_code=404, content={"error": "unknown_tile"})
        return PlainTextResponse(path.read_bytes(), media_type=media_type)

    @app.post("/api/jobs/{job_id}/alternative")
    def job_alternative(job_id: str):
        try:
            return engine.request_alternative(job_id)
        except ProtocolError as exc:
            return protocol_error(exc)
        except TreecrowdError as exc:
            return JSONResponse(status_code=400, content={"error": "bad_request", "message": str(exc)})

    @app.post("/api/jobs/{job_id}/submission")
    def job_submission(job_id: str, body: dict = Body(...)):
        try:
            return engine.submit_job(job_id, body.get("qualification", []), body.get("payload", []))
        except ProtocolError as exc:
            return protocol_error(exc)
        except TreecrowdError as exc:
            return JSONResponse(status_code=400, content={"error": "bad_request", "message": str(exc)})

    @app.get("/api/campaigns/{campaign_id}/status")
    def campaign_status(campaign_id: str):
        try:
            return engine.campaign_status(campaign_id)
        except ProtocolError as exc:
            return protocol_error(exc)

    @app.post("/api/campaigns/{campaign_id}/integrate")
    def campaign_integrate(campaign_id: str, body: dict = Body(default={})):
        try:
            params = IntegrationParams(**body.get("params", {}))
            stems = engine.integrate_campaign(campaign_id, params)
            return {
                "tiles": {
                    tile_id: [
                        {
                            "x": s.x,
                            "y": s.y,
                            "height": s.height,
                            "support": s.support,
                            "source_cluster": s.source_cluster,
                        }
                        for s in tile_stems
                    ]
                    for tile_id, tile_stems in stems.items()
                }
            }
        except ProtocolError as exc:
            return protocol_error(exc)

    return app
