"""Integration of replicated, noisy stem annotations into a tree map.

All acquisitions for one tile are pooled and clustered in the xy-plane with
a density-based scheme (clusters form around true stem positions, sparse
strays become noise).  Clusters that have soaked up more acquisitions than
one tree can explain are re-clustered at progressively smaller reach until
they split.  Finally each cluster is purged of members that disagree with
its running median, and the surviving members' mean becomes the integrated
stem.  Everything is deterministic: neighbor ties, border assignment, label
order and removal order are all pinned to input indices.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import cKDTree

from ._fsio import atomic_write_lines

FIXED_CYLINDER_RADIUS = 0.5
EPS_FLOOR = 0.05

WARN_UNSPLITTABLE = "unsplittable"
WARN_DUPLICATE_WORKER = "duplicate_worker"


@dataclass(frozen=True)
class CylinderAnnotation:
    """One worker's stem marking: ground position + tree height, fixed radius."""

    x: float
    y: float
    height: float
    radius: float = FIXED_CYLINDER_RADIUS

    def __post_init__(self):
        if self.radius != FIXED_CYLINDER_RADIUS:
            raise ValueError(f"cylinder radius is fixed at {FIXED_CYLINDER_RADIUS} m")
        if not (self.height > 0):
            raise ValueError("height must be > 0")
        if not (np.isfinite(self.x) and np.isfinite(self.y) and np.isfinite(self.height)):
            raise ValueError("coordinates must be finite")


@dataclass(frozen=True)
class Submission:
    """One worker's answer for one tile: annotations or a no-stems assertion."""

    worker_id: str
    tile_id: str
    annotations: tuple[CylinderAnnotation, ...] = ()
    no_stems: bool = False
    submitted_at: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "annotations", tuple(self.annotations))
        if self.no_stems and self.annotations:
            raise ValueError("no_stems submissions must carry no annotations")


@dataclass(frozen=True)
class IntegrationParams:
    eps: float = 1.0
    n_min: int = 4
    n_max: int = 15
    eps_step: float = 0.5
    d_pos: float = 1.0
    d_h: float = 2.0

    def __post_init__(self):
        if not (self.eps > 0 and self.eps_step > 0 and self.d_pos > 0 and self.d_h > 0):
            raise ValueError("eps, eps_step, d_pos, d_h must be > 0")
        if self.n_min < 2:
            raise ValueError("n_min must be >= 2")
        if self.n_max <= self.n_min:
            raise ValueError("n_max must be > n_min")


@dataclass(frozen=True)
class ClusterMember:
    index: int  # position in the pooled annotation list
    worker_id: str
    annotation: CylinderAnnotation


@dataclass(frozen=True)
class Cluster:
    label: int
    members: tuple[ClusterMember, ...]
    refined: bool = False
    purged_members: tuple[ClusterMember, ...] = ()
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        object.__setattr__(self, "purged_members", tuple(self.purged_members))


@dataclass(frozen=True)
class IntegratedStem:
    x: float
    y: float
    height: float
    support: int
    source_cluster: int


def dbscan_xy(points, eps: float, n_min: int) -> np.ndarray:
    """Density clustering of planar points; returns one label per point, -1 = noise.

    A point is core iff its closed eps-ball (including itself) holds >= n_min
    points.  Clusters are the connected components of core points under
    eps-reachability; a non-core point within eps of a core point joins the
    cluster of the lowest-index such core.  Labels are assigned in order of
    each cluster's lowest member index.
    """
    if not (eps > 0):
        raise ValueError("eps must be > 0")
    if n_min < 1:
        raise ValueError("n_min must be >= 1")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    labels = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels
    neigh = cKDTree(pts).query_ball_point(pts, r=eps)
    core = np.array([len(nb) >= n_min for nb in neigh])
    comp = np.full(n, -1, dtype=np.int64)
    n_comp = 0
    for seed in range(n):
        if not core[seed] or comp[seed] != -1:
            continue
        comp[seed] = n_comp
        queue = deque([seed])
        while queue:
            p = queue.popleft()
            for q in neigh[p]:
                if core[q] and comp[q] == -1:
                    comp[q] = n_comp
                    queue.append(q)
        n_comp += 1
    for p in range(n):
        if core[p]:
            continue
        core_nb = [q for q in neigh[p] if core[q]]
        if core_nb:
            comp[p] = comp[min(core_nb)]
    # canonical labels: order clusters by their lowest member index
    order: dict[int, int] = {}
    for p in range(n):
        if comp[p] != -1 and comp[p] not in order:
            order[comp[p]] = len(order)
    for p in range(n):
        if comp[p] != -1:
            labels[p] = order[comp[p]]
    return labels


def _clusters_from_labels(members, labels, refined: bool) -> list[Cluster]:
    groups: dict[int, list[ClusterMember]] = {}
    for m, lab in zip(members, labels):
        if lab != -1:
            groups.setdefault(int(lab), []).append(m)
    return [
        Cluster(label=lab, members=tuple(groups[lab]), refined=refined)
        for lab in sorted(groups)
    ]


def _eps_schedule(eps: float, step: float):
    """Arithmetic decrements of `step` while possible, then halving, down to the floor."""
    floor = min(EPS_FLOOR, eps)
    e = eps
    while True:
        e = e - step if e - step >= step else e / 2
        if e <= floor:
            yield floor
            return
        yield e


def refine_oversized(cluster: Cluster, params: IntegrationParams) -> list[Cluster]:
    """Split a cluster that holds more acquisitions than one tree can explain.

    Clusters below n_max pass through unchanged.  Otherwise the member set is
    re-clustered at each eps of the shrinking schedule (members going to noise
    drop out) until every resulting cluster is below n_max.  If the hard eps
    floor still leaves an oversized cluster, that cluster is returned flagged
    ``unsplittable`` instead of being dropped.
    """
    if len(cluster.members) < params.n_max:
        return [cluster]
    working = list(cluster.members)
    floor = min(EPS_FLOOR, params.eps)
    for e in _eps_schedule(params.eps, params.eps_step):
        xy = [(m.annotation.x, m.annotation.y) for m in working]
        labels = dbscan_xy(xy, e, params.n_min)
        survivors = [(m, lab) for m, lab in zip(working, labels) if lab != -1]
        working = [m for m, _ in survivors]
        clusters = _clusters_from_labels(working, [lab for _, lab in survivors], refined=True)
        if all(len(c.members) < params.n_max for c in clusters):
            return clusters
        if e == floor:
            return [
                c
                if len(c.members) < params.n_max
                else replace(c, refined=False, warnings=c.warnings + (WARN_UNSPLITTABLE,))
                for c in clusters
            ]
    raise AssertionError("eps schedule is finite")  # pragma: no cover


def _lower_median(values) -> float:
    vals = sorted(values)
    return vals[(len(vals) - 1) // 2]


def purge(cluster: Cluster, params: IntegrationParams) -> Cluster:
    """Iteratively eliminate the member that most disagrees with the median tree.

    The median tree is the component-wise lower median of (x, y, height).  A
    member violates iff its planar distance to the median position exceeds
    d_pos OR its height difference exceeds d_h (both strictly; members exactly
    on a threshold stay).  One member is removed per iteration - the one with
    the largest excess ratio, ties going to the lowest index - because each
    removal shifts the median.
    """
    members = list(cluster.members)
    removed: list[ClusterMember] = []
    while members:
        mx = _lower_median(m.annotation.x for m in members)
        my = _lower_median(m.annotation.y for m in members)
        mh = _lower_median(m.annotation.height for m in members)
        worst_i = -1
        worst_score = 1.0
        for i, m in enumerate(members):
            d = float(np.hypot(m.annotation.x - mx, m.annotation.y - my))
            dh = abs(m.annotation.height - mh)
            if d > params.d_pos or dh > params.d_h:
                score = max(d / params.d_pos, dh / params.d_h)
                if score > worst_score:
                    worst_score = score
                    worst_i = i
        if worst_i == -1:
            break
        removed.append(members.pop(worst_i))
    return replace(
        cluster,
        members=tuple(members),
        purged_members=cluster.purged_members + tuple(removed),
    )


def integrate_tile_detailed(
    submissions, params: IntegrationParams = IntegrationParams()
) -> list[tuple[IntegratedStem, Cluster]]:
    """Full pipeline returning (stem, surviving cluster) pairs, sorted by stem (x, y).

    Pool all annotations across submissions, cluster them, refine oversized
    clusters, purge every cluster, and discard clusters keeping fewer than
    n_min members.  Each surviving cluster yields the arithmetic mean of its
    members' x, y and height; clusters where one worker contributed more than
    one surviving member are flagged.
    """
    tile_ids = {s.tile_id for s in submissions}
    if len(tile_ids) > 1:
        raise ValueError(f"submissions span multiple tiles: {sorted(tile_ids)}")
    # canonical pooled order: index tie-breaks and mean summation must not
    # depend on the order submissions arrive in
    flat = sorted(
        ((s.worker_id, a) for s in submissions for a in s.annotations),
        key=lambda wa: (wa[1].x, wa[1].y, wa[1].height, wa[0]),
    )
    pooled = [
        ClusterMember(index=i, worker_id=w, annotation=a) for i, (w, a) in enumerate(flat)
    ]
    if not pooled:
        return []
    labels = dbscan_xy([(m.annotation.x, m.annotation.y) for m in pooled], params.eps, params.n_min)
    results: list[tuple[IntegratedStem, Cluster]] = []
    for cluster in _clusters_from_labels(pooled, labels, refined=False):
        for part in refine_oversized(cluster, params):
            purged = purge(part, params)
            if len(purged.members) < params.n_min:
                continue
            workers = [m.worker_id for m in purged.members]
            if len(set(workers)) < len(workers):
                purged = replace(purged, warnings=purged.warnings + (WARN_DUPLICATE_WORKER,))
            stem = IntegratedStem(
                x=float(np.mean([m.annotation.x for m in purged.members])),
                y=float(np.mean([m.annotation.y for m in purged.members])),
                height=float(np.mean([m.annotation.height for m in purged.members])),
                support=len(purged.members),
                source_cluster=purged.label,
            )
            results.append((stem, purged))
    results.sort(key=lambda sc: (sc[0].x, sc[0].y, sc[0].height))
    return [
        (replace(stem, source_cluster=i), replace(cluster, label=i))
        for i, (stem, cluster) in enumerate(results)
    ]


def integrate_tile(submissions, params: IntegrationParams = IntegrationParams()) -> list[IntegratedStem]:
    """Integrated stems for one tile's pooled submissions (see integrate_tile_detailed)."""
    return [stem for stem, _ in integrate_tile_detailed(submissions, params)]


# --- line-record I/O ---------------------------------------------------------


def submission_to_record(sub: Submission) -> dict:
    return {
        "worker_id": sub.worker_id,
        "tile_id": sub.tile_id,
        "no_stems": sub.no_stems,
        "annotations": [
            {"x": a.x, "y": a.y, "height": a.height} for a in sub.annotations
        ],
    }


def submission_from_record(rec: dict) -> Submission:
    return Submission(
        worker_id=rec["worker_id"],
        tile_id=rec["tile_id"],
        no_stems=bool(rec.get("no_stems", False)),
        annotations=tuple(
            CylinderAnnotation(x=a["x"], y=a["y"], height=a["height"])
            for a in rec.get("annotations", [])
        ),
    )


def write_submissions(submissions, path) -> None:
    atomic_write_lines(
        path, (json.dumps(submission_to_record(s), sort_keys=True) for s in submissions)
    )


def read_submissions(path) -> list[Submission]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(submission_from_record(json.loads(line)))
    return out


def write_stems(stems, path) -> None:
    atomic_write_lines(
        path,
        (
            json.dumps(
                {
                    "x": s.x,
                    "y": s.y,
                    "height": s.height,
                    "support": s.support,
                    "source_cluster": s.source_cluster,
                },
                sort_keys=True,
            )
            for s in stems
        ),
    )


def read_stems(path) -> list[IntegratedStem]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rec = json.loads(line)
                out.append(
                    IntegratedStem(
                        x=rec["x"],
                        y=rec["y"],
                        height=rec["height"],
                        support=int(rec["support"]),
                        source_cluster=int(rec["source_cluster"]),
                    )
                )
    return out
