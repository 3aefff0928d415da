export interface TileManifest {
    tile_id: string;
    bounds: [number, number, number, number]; // world frame [xmin, ymin, xmax, ymax]
    stretch_factor: number;
    point_count: number;
    points_file: string;
    dtm_file: string;
}

/** Column-stored points in the (possibly stretched) tile frame. */
export interface TilePoints {
    count: number;
    x: Float64Array;
    y: Float64Array;
    z: Float64Array;
    rgb: Uint8Array; // 3 * count
}

/** Terrain node grid, row 0 = southernmost (world frame, never stretched). */
export interface Dtm {
    originX: number;
    originY: number;
    cellSize: number;
    nRows: number;
    nCols: number;
    elevations: Float64Array; // row-major, nRows * nCols
}

export interface TileBundle {
    manifest: TileManifest;
    points: TilePoints;
    dtm: Dtm;
}

/** A stem marking in the displayed tile frame; base z follows the terrain. */
export interface Cylinder {
    x: number;
    y: number;
    height: number;
    baseZ: number;
}

export interface JobDescriptor {
    job_id: string;
    worker_id: string;
    qualification_tile_id: string;
    payload_tile_id: string;
    state: string;
    lease_expiry: number;
    finalized_no_stems: boolean;
}

export interface AnnotationRecord {
    x: number;
    y: number;
    height: number;
}

export interface SubmitResult {
    status: "accepted" | "rejected";
    reason: string | null;
}

export const CYLINDER_RADIUS = 0.5; // meters, fixed; display scales it by the stretch factor
export const DEFAULT_CYLINDER_HEIGHT = 10.0;
export const HEIGHT_STEP = 0.5;
export const MIN_CYLINDER_HEIGHT = 0.5;
export const DETAIL_RADIUS = 5.0;
export const GROUND_MASK_FRACTION = 0.05;
