"""treecrowd: crowd-based tree mapping from 3D point clouds.

The pipeline: prepare annotation-ready profile tiles from a point cloud and a
terrain model, dispense quality-gated annotation jobs (or simulate the crowd),
integrate replicated noisy stem annotations via two-stage density clustering
with robust purging, and evaluate the resulting tree map against ground truth.
"""

from .cloud import (
    ColoredPoint,
    Point3,
    PointCloud,
    ViewParams,
    colorize_by_height,
    colorize_cloud,
    crop_cylinder,
    height_above_ground,
    mask_lowest_fraction,
    read_cloud,
    voxel_subsample,
    write_cloud,
)
from .crowdsim import (
    CampaignSimConfig,
    WorkerProfile,
    assign_gt_to_tiles,
    default_sim_config,
    simulate_campaign,
    simulate_submission,
)
from .dtm import DtmRaster, dtm_elevation, read_esri_ascii, write_esri_ascii
from .errors import (
    CloudParseError,
    NoWorkAvailable,
    OutOfCoverageError,
    ProtocolError,
    TreecrowdError,
    UndefinedMetricError,
)
from .evaluator import (
    CostReport,
    GroundTruthStem,
    MatchResult,
    MetricsReport,
    cost_report,
    match_one_to_one,
    metrics,
)
from .integrator import (
    Cluster,
    CylinderAnnotation,
    IntegratedStem,
    IntegrationParams,
    Submission,
    dbscan_xy,
    integrate_tile,
    integrate_tile_detailed,
    purge,
    refine_oversized,
)
from .service import Campaign, CampaignEngine, QualificationTile, create_app, validate_qualification
from .tiler import (
    Tile,
    TilePlan,
    TileSpec,
    apply_stretch,
    cut_tiles,
    export_tile_bundle,
    import_tile_bundle,
    plan_grid,
    unstretch_annotation,
)

__version__ = "0.1.0"
