"""Detection evaluation: one-to-one stem matching, recall/precision/quality,
and campaign cost reporting.

A ground-truth stem and an integrated stem are an admissible pair when their
planar distance is within d_pos and their height difference within d_h.  The
matcher picks, among all one-to-one matchings on the admissible graph, one of
maximum cardinality; among those, minimum total planar distance; remaining
ties are broken lexicographically by (gt index, stem index).  Distances are
quantized to nanometers so the optimum is decided in exact integer arithmetic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

import numpy as np
from scipy.optimize import linear_sum_assignment

from ._fsio import atomic_write_lines
from .errors import UndefinedMetricError

_QUANT = 1e9  # nanometer distance grid for exact tie handling
_ENUM_LIMIT = 7  # components up to this size per side are solved by enumeration


@dataclass(frozen=True)
class GroundTruthStem:
    x: float
    y: float
    height: float

    def __post_init__(self):
        if not (self.height > 0):
            raise ValueError("height must be > 0")


@dataclass(frozen=True)
class MatchResult:
    tp_pairs: tuple[tuple[int, int], ...]
    fn_gt: tuple[int, ...]
    fp_stems: tuple[int, ...]
    d_pos: float
    d_h: float

    @property
    def tp(self) -> int:
        return len(self.tp_pairs)

    @property
    def fn(self) -> int:
        return len(self.fn_gt)

    @property
    def fp(self) -> int:
        return len(self.fp_stems)


@dataclass(frozen=True)
class MetricsReport:
    recall: float
    precision: float
    quality: float


@dataclass(frozen=True)
class CostReport:
    n_tiles: int
    replication_k: int
    unit_price: float
    fee_rate: float
    base_cost: float
    total_cost: float
    price_per_tp: float
    price_per_ha: float


def round_half_up(value: float, decimals: int = 2) -> float:
    """Half-up decimal rounding (Python's round() is half-even)."""
    q = Decimal(1).scaleb(-decimals)
    return float(Decimal(repr(value)).quantize(q, rounding=ROUND_HALF_UP))


def percent(fraction: float, decimals: int = 2) -> float:
    return round_half_up(fraction * 100.0, decimals)


def _admissibility(gt, stems, d_pos, d_h):
    """Integer planar distances (nanometers) and the admissible-pair mask."""
    g = np.array([(s.x, s.y, s.height) for s in gt], dtype=np.float64).reshape(-1, 3)
    s = np.array([(t.x, t.y, t.height) for t in stems], dtype=np.float64).reshape(-1, 3)
    dx = g[:, None, 0] - s[None, :, 0]
    dy = g[:, None, 1] - s[None, :, 1]
    dh = np.abs(g[:, None, 2] - s[None, :, 2])
    dist = np.hypot(dx, dy)
    adm = (dist <= d_pos) & (dh <= d_h)
    dist_int = np.round(dist * _QUANT).astype(np.int64)
    return dist_int, adm


def _components(adm: np.ndarray):
    """Connected components of the bipartite admissibility graph."""
    n_g, n_s = adm.shape
    seen_g = [False] * n_g
    seen_s = [False] * n_s
    for start in range(n_g):
        if seen_g[start]:
            continue
        comp_g, comp_s = [], []
        stack = [("g", start)]
        seen_g[start] = True
        while stack:
            side, i = stack.pop()
            if side == "g":
                comp_g.append(i)
                for j in np.flatnonzero(adm[i]):
                    if not seen_s[j]:
                        seen_s[j] = True
                        stack.append(("s", int(j)))
            else:
                comp_s.append(i)
                for j in np.flatnonzero(adm[:, i]):
                    if not seen_g[j]:
                        seen_g[j] = True
                        stack.append(("g", int(j)))
        yield sorted(comp_g), sorted(comp_s)
    for j in range(n_s):
        if not seen_s[j]:
            yield [], [j]


def _enumerate_best(gts, stems, adm, dist_int):
    """Exhaustive search for the (max |M|, min dist, lex-min) matching of a tiny component."""
    adm_lists = {g: [s for s in stems if adm[g, s]] for g in gts}
    best = None

    def rec(i, used, pairs, dsum):
        nonlocal best
        if i == len(gts):
            cand = (-len(pairs), dsum, list(pairs))
            if best is None or cand < best:
                best = cand
            return
        if best is not None and -(len(pairs) + len(gts) - i) > best[0]:
            return
        g = gts[i]
        for s in adm_lists[g]:
            if s not in used:
                pairs.append((g, s))
                used.add(s)
                rec(i + 1, used, pairs, dsum + int(dist_int[g, s]))
                used.discard(s)
                pairs.pop()
        rec(i + 1, used, pairs, dsum)

    rec(0, set(), [], 0)
    return best[2] if best else []


def _lsa_solve(gts, stems, adm, dist_int, d_pos_int):
    """(cardinality, total distance, pairs) of an optimal assignment via LSA."""
    if not gts or not stems:
        return 0, 0, []
    big = (max(len(gts), len(stems)) + 1) * d_pos_int + 1
    cost = np.full((len(gts), len(stems)), big, dtype=np.int64)
    for a, g in enumerate(gts):
        for b, s in enumerate(stems):
            if adm[g, s]:
                cost[a, b] = dist_int[g, s]
    rows, cols = linear_sum_assignment(cost)
    pairs = [
        (gts[a], stems[b]) for a, b in zip(rows, cols) if adm[gts[a], stems[b]]
    ]
    total = sum(int(dist_int[g, s]) for g, s in pairs)
    return len(pairs), total, sorted(pairs)


def _canonical_lsa(gts, stems, adm, dist_int, d_pos):
    """LSA plus greedy lexicographic canonicalization via forced-pair re-solves.

    A pair is adoptable at a position iff some optimal matching extends the
    fixed prefix with it; once a pair proves infeasible it stays infeasible
    for every longer prefix, so dead pairs are never re-checked.
    """
    d_pos_int = int(round(d_pos * _QUANT))
    k_target, d_target, incumbent = _lsa_solve(gts, stems, adm, dist_int, d_pos_int)
    total_k = k_target  # k_target/d_target shrink to the remaining sub-problem below
    result: list[tuple[int, int]] = []
    used_g: set[int] = set()
    used_s: set[int] = set()
    dead: set[tuple[int, int]] = set()
    while len(result) < total_k:
        g_inc, s_inc = incumbent[0]
        adopted = False
        last_g = result[-1][0] if result else -1
        for g in (x for x in gts if last_g < x <= g_inc and x not in used_g):
            for s in (y for y in stems if adm[g, y] and y not in used_s):
                if (g, s) >= (g_inc, s_inc):
                    break
                if (g, s) in dead:
                    continue
                need_d = d_target - int(dist_int[g, s])
                if need_d < 0:
                    dead.add((g, s))
                    continue
                sub_g = [x for x in gts if x not in used_g and x != g]
                sub_s = [y for y in stems if y not in used_s and y != s]
                k2, d2, pairs2 = _lsa_solve(sub_g, sub_s, adm, dist_int, d_pos_int)
                if k2 == k_target - 1 and d2 == need_d:
                    result.append((g, s))
                    used_g.add(g)
                    used_s.add(s)
                    k_target, d_target = k2, d2
                    incumbent = pairs2
                    adopted = True
                    break
                dead.add((g, s))
            if adopted:
                break
        if not adopted:
            result.append((g_inc, s_inc))
            used_g.add(g_inc)
            used_s.add(s_inc)
            k_target -= 1
            d_target -= int(dist_int[g_inc, s_inc])
            incumbent = incumbent[1:]
    return result


def match_one_to_one(gt, stems, d_pos: float = 1.0, d_h: float = 2.0, _enum_limit: int = _ENUM_LIMIT) -> MatchResult:
    """Maximum-cardinality, minimum-distance, lexicographically canonical matching."""
    if not (d_pos > 0 and d_h > 0):
        raise ValueError("matching thresholds must be > 0")
    gt = list(gt)
    stems = list(stems)
    if not gt or not stems:
        return MatchResult(
            tp_pairs=(),
            fn_gt=tuple(range(len(gt))),
            fp_stems=tuple(range(len(stems))),
            d_pos=d_pos,
            d_h=d_h,
        )
    dist_int, adm = _admissibility(gt, stems, d_pos, d_h)
    pairs: list[tuple[int, int]] = []
    for comp_g, comp_s in _components(adm):
        if not comp_g or not comp_s:
            continue
        if len(comp_g) <= _enum_limit and len(comp_s) <= _enum_limit:
            pairs.extend(_enumerate_best(comp_g, comp_s, adm, dist_int))
        else:
            pairs.extend(_canonical_lsa(comp_g, comp_s, adm, dist_int, d_pos))
    pairs.sort()
    matched_g = {g for g, _ in pairs}
    matched_s = {s for _, s in pairs}
    return MatchResult(
        tp_pairs=tuple(pairs),
        fn_gt=tuple(i for i in range(len(gt)) if i not in matched_g),
        fp_stems=tuple(j for j in range(len(stems)) if j not in matched_s),
        d_pos=d_pos,
        d_h=d_h,
    )


def metrics(tp: int, fn: int, fp: int) -> MetricsReport:
    """Recall, precision and their harmonic mean (the reported quality score)."""
    if tp + fn <= 0:
        raise UndefinedMetricError("recall undefined: no ground-truth stems")
    if tp + fp <= 0:
        raise UndefinedMetricError("precision undefined: no detected stems")
    recall = tp / (tp + fn)
    precision = tp / (tp + fp)
    if recall + precision == 0:
        quality = 0.0
    else:
        quality = 2 * recall * precision / (recall + precision)
    return MetricsReport(recall=recall, precision=precision, quality=quality)


def cost_report(
    n_tiles: int,
    k: int,
    unit_price: float,
    fee_rate: float,
    tp: int,
    area_ha: float,
) -> CostReport:
    """Campaign cost figures: per-TP and per-hectare prices exclude the platform fee."""
    if n_tiles <= 0 or k <= 0 or unit_price < 0 or fee_rate < 0:
        raise ValueError("counts must be positive and rates non-negative")
    if tp <= 0:
        raise UndefinedMetricError("price per TP undefined: no true positives")
    if area_ha <= 0:
        raise ValueError("area must be > 0")
    base = n_tiles * k * unit_price
    return CostReport(
        n_tiles=n_tiles,
        replication_k=k,
        unit_price=unit_price,
        fee_rate=fee_rate,
        base_cost=base,
        total_cost=base * (1 + fee_rate),
        price_per_tp=base / tp,
        price_per_ha=base / area_ha,
    )


# --- report rendering --------------------------------------------------------

REPORT_COLUMNS = (
    "Data Set",
    "GT",
    "TP",
    "FN",
    "FP",
    "Recall [%]",
    "Precision [%]",
    "Quality [%]",
    "Price per TP [$]",
    "Price per ha [$]",
)


def evaluation_record(dataset: str, match_or_counts, metrics_report: MetricsReport, costs: CostReport | None) -> dict:
    """One line-record row; accepts either a MatchResult or a (tp, fn, fp) triple."""
    if isinstance(match_or_counts, MatchResult):
        tp, fn, fp = match_or_counts.tp, match_or_counts.fn, match_or_counts.fp
    else:
        tp, fn, fp = match_or_counts
    rec = {
        "dataset": dataset,
        "gt": tp + fn,
        "tp": tp,
        "fn": fn,
        "fp": fp,
        "recall_pct": percent(metrics_report.recall),
        "precision_pct": percent(metrics_report.precision),
        "quality_pct": percent(metrics_report.quality),
    }
    if costs is not None:
        rec["price_per_tp"] = round_half_up(costs.price_per_tp)
        rec["price_per_ha"] = round_half_up(costs.price_per_ha)
        rec["base_cost"] = round_half_up(costs.base_cost)
        rec["total_cost"] = round_half_up(costs.total_cost)
    return rec


def write_evaluation(records, path) -> None:
    atomic_write_lines(path, (json.dumps(r, sort_keys=True) for r in records))


def read_evaluation(path) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def render_report_table(records) -> str:
    """Plain-text table with the standard evaluation columns."""
    rows = [REPORT_COLUMNS]
    for r in records:
        rows.append(
            (
                str(r.get("dataset", "-")),
                str(r.get("gt", "-")),
                str(r.get("tp", "-")),
                str(r.get("fn", "-")),
                str(r.get("fp", "-")),
                f"{r['recall_pct']:.2f}",
                f"{r['precision_pct']:.2f}",
                f"{r['quality_pct']:.2f}",
                f"{r['price_per_tp']:.2f}" if "price_per_tp" in r else "-",
                f"{r['price_per_ha']:.2f}" if "price_per_ha" in r else "-",
            )
        )
    widths = [max(len(row[i]) for row in rows) for i in range(len(REPORT_COLUMNS))]
    lines = []
    for idx, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if idx == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def read_ground_truth(path) -> list[GroundTruthStem]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rec = json.loads(line)
                out.append(GroundTruthStem(x=rec["x"], y=rec["y"], height=rec["height"]))
    return out


def write_ground_truth(gt, path) -> None:
    atomic_write_lines(
        path,
        (json.dumps({"x": s.x, "y": s.y, "height": s.height}, sort_keys=True) for s in gt),
    )
