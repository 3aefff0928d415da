"""Command-line pipeline driver.

Subcommands: preprocess | simulate | serve | integrate | evaluate | report.
Values resolve as defaults < config file < explicit flags.  Exit codes:
0 ok, 1 runtime failure, 2 usage error.  Output files are written atomically.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import cloud as cloudmod
from . import crowdsim, dtm, evaluator, integrator, service, tiler
from .errors import TreecrowdError


def _load_config(path, section: str) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return doc.get(section, {})


def _resolve(args, config: dict, key: str, default):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _require_file(parser: argparse.ArgumentParser, path, what: str) -> Path:
    if path is None:
        parser.error(f"missing {what} path")
    p = Path(path)
    if not p.exists():
        parser.error(f"{what} not found: {p}")
    return p


def cmd_preprocess(args, parser) -> int:
    cfg = _load_config(args.config, "preprocess")
    cloud_path = _require_file(parser, _resolve(args, cfg, "cloud", None), "cloud")
    dtm_path = _require_file(parser, _resolve(args, cfg, "dtm", None), "DTM")
    outdir = Path(_resolve(args, cfg, "out", None) or parser.error("missing output directory"))
    spec = tiler.TileSpec(
        target_length=float(_resolve(args, cfg, "target_length", 60.0)),
        target_depth=float(_resolve(args, cfg, "target_depth", 10.0)),
        stretch_factor=float(_resolve(args, cfg, "stretch", 1.0)),
        orientation=_resolve(args, cfg, "orientation", "auto"),
    )
    spacing = float(_resolve(args, cfg, "spacing", cloudmod.DEFAULT_VOXEL_SPACING))
    jobs = int(_resolve(args, cfg, "jobs", 1))

    cloud = cloudmod.read_cloud(cloud_path)
    terrain = dtm.read_esri_ascii(dtm_path)
    cloud = cloudmod.voxel_subsample(cloud, spacing)
    heights = cloudmod.height_above_ground(cloud, terrain)
    cloud = cloudmod.colorize_cloud(cloud, heights)
    if cloud.bbox is None:
        raise TreecrowdError("cloud is empty; nothing to tile")
    bmin, bmax = cloud.bbox
    plan = tiler.plan_grid((bmin[0], bmin[1], bmax[0], bmax[1]), spec)
    tiles = tiler.cut_tiles(cloud, plan, terrain)
    if spec.stretch_factor > 1.0:
        tiles = [tiler.apply_stretch(t, spec.stretch_factor) for t in tiles]

    def export(tile):
        return tiler.export_tile_bundle(tile, outdir / tile.tile_id)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        list(pool.map(export, tiles))

    area_ha = (bmax[0] - bmin[0]) * (bmax[1] - bmin[1]) / 1e4
    size = f"{plan.tile_length:.0f} x {plan.tile_depth:.0f} m"
    print(f"Area Size [ha]: {area_ha:.2f}")
    print(f"# Tiles: {plan.n_tiles}")
    print(f"Tile Size: {size}")
    print(f"Stretch Factor: {spec.stretch_factor}")
    print(f"Bundles written to {outdir}")
    return 0


def cmd_simulate(args, parser) -> int:
    cfg = _load_config(args.config, "simulate")
    bundles = Path(_require_file(parser, _resolve(args, cfg, "bundles", None), "bundle directory"))
    gt_path = _require_file(parser, _resolve(args, cfg, "gt", None), "ground truth")
    out = _resolve(args, cfg, "out", None) or parser.error("missing output path")
    sim_cfg_path = _resolve(args, cfg, "sim_config", None)
    if sim_cfg_path:
        config = crowdsim.load_sim_config(sim_cfg_path)
    else:
        config = crowdsim.default_sim_config(
            k=int(_resolve(args, cfg, "k", 10)),
            campaign_seed=int(_resolve(args, cfg, "seed", 0)),
        )
    tiles = [
        tiler.import_tile_bundle(d) for d in sorted(bundles.iterdir()) if (d / "manifest.json").exists()
    ]
    if not tiles:
        raise TreecrowdError(f"no tile bundles under {bundles}")
    gt = evaluator.read_ground_truth(gt_path)
    submissions = crowdsim.simulate_campaign(tiles, gt, config)
    integrator.write_submissions(submissions, out)
    print(f"{len(submissions)} submissions over {len(tiles)} tiles -> {out}")
    return 0


def _integration_params(args, cfg) -> integrator.IntegrationParams:
    return integrator.IntegrationParams(
        eps=float(_resolve(args, cfg, "eps", 1.0)),
        n_min=int(_resolve(args, cfg, "n_min", 4)),
        n_max=int(_resolve(args, cfg, "n_max", 15)),
        eps_step=float(_resolve(args, cfg, "eps_step", 0.5)),
        d_pos=float(_resolve(args, cfg, "d_pos", 1.0)),
        d_h=float(_resolve(args, cfg, "d_h", 2.0)),
    )


def cmd_integrate(args, parser) -> int:
    cfg = _load_config(args.config, "integrate")
    subs_path = _require_file(parser, _resolve(args, cfg, "submissions", None), "submissions")
    out = _resolve(args, cfg, "out", None) or parser.error("missing output path")
    params = _integration_params(args, cfg)
    jobs = int(_resolve(args, cfg, "jobs", 1))
    submissions = integrator.read_submissions(subs_path)
    by_tile: dict[str, list] = {}
    for s in submissions:
        by_tile.setdefault(s.tile_id, []).append(s)

    def run(tile_id):
        return integrator.integrate_tile(by_tile[tile_id], params)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        per_tile = list(pool.map(run, sorted(by_tile)))
    stems = sorted(
        (s for tile_stems in per_tile for s in tile_stems),
        key=lambda s: (s.x, s.y, s.height),
    )
    stems = [
        integrator.IntegratedStem(
            x=s.x, y=s.y, height=s.height, support=s.support, source_cluster=i
        )
        for i, s in enumerate(stems)
    ]
    integrator.write_stems(stems, out)
    print(f"{len(stems)} integrated stems from {len(by_tile)} tiles -> {out}")
    return 0


def cmd_evaluate(args, parser) -> int:
    cfg = _load_config(args.config, "evaluate")
    stems_path = _require_file(parser, _resolve(args, cfg, "stems", None), "stems")
    gt_path = _require_file(parser, _resolve(args, cfg, "gt", None), "ground truth")
    out = _resolve(args, cfg, "out", None)
    dataset = _resolve(args, cfg, "dataset", "dataset")
    d_pos = float(_resolve(args, cfg, "d_pos", 1.0))
    d_h = float(_resolve(args, cfg, "d_h", 2.0))
    stems = integrator.read_stems(stems_path)
    gt = evaluator.read_ground_truth(gt_path)
    match = evaluator.match_one_to_one(gt, stems, d_pos=d_pos, d_h=d_h)
    report = evaluator.metrics(match.tp, match.fn, match.fp)
    costs = None
    area = _resolve(args, cfg, "area_ha", None)
    n_tiles = _resolve(args, cfg, "n_tiles", None)
    if area is not None and n_tiles is not None and match.tp > 0:
        costs = evaluator.cost_report(
            n_tiles=int(n_tiles),
            k=int(_resolve(args, cfg, "k", 10)),
            unit_price=float(_resolve(args, cfg, "unit_price", 0.10)),
            fee_rate=float(_resolve(args, cfg, "fee_rate", 0.10)),
            tp=match.tp,
            area_ha=float(area),
        )
    record = evaluator.evaluation_record(dataset, match, report, costs)
    if out:
        evaluator.write_evaluation([record], out)
    print(evaluator.render_report_table([record]))
    return 0


def cmd_report(args, parser) -> int:
    records = []
    for path in args.reports:
        records.extend(evaluator.read_evaluation(_require_file(parser, path, "report")))
    print(evaluator.render_report_table(records))
    return 0


def cmd_serve(args, parser) -> int:
    cfg = _load_config(args.config, "serve")
    campaign_path = _resolve(args, cfg, "campaign", None)
    log_path = _resolve(args, cfg, "log", None) or parser.error("missing event log path")
    bundles = _resolve(args, cfg, "bundles", None)
    host = _resolve(args, cfg, "host", "127.0.0.1")
    port = int(_resolve(args, cfg, "port", 8000))
    engine = service.CampaignEngine(log_path, bundle_dir=bundles)
    if campaign_path:
        with open(campaign_path, "r", encoding="utf-8") as fh:
            campaign = service._campaign_from_dict(json.load(fh))
        if campaign.campaign_id not in engine._campaigns:
            engine.create_campaign(campaign)
    app = service.create_app(engine)
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="treecrowd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="cloud + DTM -> annotation-ready tile bundles")
    p.add_argument("--cloud")
    p.add_argument("--dtm")
    p.add_argument("--out")
    p.add_argument("--target-length", dest="target_length", type=float)
    p.add_argument("--target-depth", dest="target_depth", type=float)
    p.add_argument("--stretch", type=float)
    p.add_argument("--orientation", choices=["auto", "x", "y"])
    p.add_argument("--spacing", type=float)
    p.add_argument("--jobs", type=int)
    p.add_argument("--config")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("simulate", help="synthesize crowd submissions for tile bundles")
    p.add_argument("--bundles")
    p.add_argument("--gt")
    p.add_argument("--out")
    p.add_argument("--sim-config", dest="sim_config")
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("integrate", help="submissions -> integrated stem map")
    p.add_argument("--submissions")
    p.add_argument("--out")
    p.add_argument("--eps", type=float)
    p.add_argument("--n-min", dest="n_min", type=int)
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--eps-step", dest="eps_step", type=float)
    p.add_argument("--d-pos", dest="d_pos", type=float)
    p.add_argument("--d-h", dest="d_h", type=float)
    p.add_argument("--jobs", type=int)
    p.add_argument("--config")
    p.set_defaults(func=cmd_integrate)

    p = sub.add_parser("evaluate", help="stems vs ground truth -> metrics and costs")
    p.add_argument("--stems")
    p.add_argument("--gt")
    p.add_argument("--out")
    p.add_argument("--dataset")
    p.add_argument("--d-pos", dest="d_pos", type=float)
    p.add_argument("--d-h", dest="d_h", type=float)
    p.add_argument("--area-ha", dest="area_ha", type=float)
    p.add_argument("--n-tiles", dest="n_tiles", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--unit-price", dest="unit_price", type=float)
    p.add_argument("--fee-rate", dest="fee_rate", type=float)
    p.add_argument("--config")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="render evaluation line-records as a table")
    p.add_argument("reports", nargs="+")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="run the campaign service")
    p.add_argument("--campaign")
    p.add_argument("--log")
    p.add_argument("--bundles")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--config")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except TreecrowdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
