import type { Dtm, TileManifest, TilePoints } from "./types";

/** Bilinear terrain elevation at world (x, y); throws outside the node hull. */
export function dtmElevation(dtm: Dtm, x: number, y: number): number {
    const u = (x - dtm.originX) / dtm.cellSize;
    const v = (y - dtm.originY) / dtm.cellSize;
    if (u < 0 || v < 0 || u > dtm.nCols - 1 || v > dtm.nRows - 1) {
        throw new Error(`(${x}, ${y}) outside terrain coverage`);
    }
    const c0 = Math.min(Math.max(Math.floor(u), 0), Math.max(dtm.nCols - 2, 0));
    const r0 = Math.min(Math.max(Math.floor(v), 0), Math.max(dtm.nRows - 2, 0));
    const tx = Math.min(Math.max(u - c0, 0), 1);
    const ty = Math.min(Math.max(v - r0, 0), 1);
    const c1 = Math.min(c0 + 1, dtm.nCols - 1);
    const r1 = Math.min(r0 + 1, dtm.nRows - 1);
    const g = dtm.elevations;
    const z00 = g[r0 * dtm.nCols + c0];
    const z01 = g[r0 * dtm.nCols + c1];
    const z10 = g[r1 * dtm.nCols + c0];
    const z11 = g[r1 * dtm.nCols + c1];
    return (1 - ty) * ((1 - tx) * z00 + tx * z01) + ty * ((1 - tx) * z10 + tx * z11);
}

/** Stretched tile frame -> world frame, the inverse of the export-time stretch. */
export function unstretchAnnotation(
    x: number,
    y: number,
    manifest: TileManifest,
): [number, number] {
    const f = manifest.stretch_factor;
    const x0 = manifest.bounds[0];
    const y0 = manifest.bounds[1];
    return [x0 + (x - x0) / f, y0 + (y - y0) / f];
}

/** World frame -> stretched tile frame (where points and cylinders live). */
export function stretchPosition(
    x: number,
    y: number,
    manifest: TileManifest,
): [number, number] {
    const f = manifest.stretch_factor;
    const x0 = manifest.bounds[0];
    const y0 = manifest.bounds[1];
    return [x0 + (x - x0) * f, y0 + (y - y0) * f];
}

/** Indices of points within planar `radius` of (cx, cy), in input order. */
export function cropCylinderIndices(
    points: TilePoints,
    cx: number,
    cy: number,
    radius: number,
): number[] {
    const out: number[] = [];
    for (let i = 0; i < points.count; i++) {
        const dx = points.x[i] - cx;
        const dy = points.y[i] - cy;
        // same float expression as the server side, so boundary points agree
        if (Math.sqrt(dx * dx + dy * dy) <= radius) {
            out.push(i);
        }
    }
    return out;
}

/**
 * Drop the floor(n * fraction) lowest of the given points (z ties resolved by
 * lower index first), preserving input order of the survivors.
 */
export function maskLowestIndices(
    points: TilePoints,
    indices: number[],
    fraction: number,
): number[] {
    const nDrop = Math.floor(indices.length * fraction);
    if (nDrop <= 0) return indices.slice();
    const order = indices
        .map((idx, pos) => ({ idx, pos, z: points.z[idx] }))
        .sort((a, b) => (a.z !== b.z ? a.z - b.z : a.pos - b.pos));
    const dropped = new Set(order.slice(0, nDrop).map((e) => e.idx));
    return indices.filter((idx) => !dropped.has(idx));
}

/** Bounding box of the displayed points, or the stretched tile bounds if empty. */
export function displayBounds(
    points: TilePoints,
    manifest: TileManifest,
): { min: [number, number, number]; max: [number, number, number] } {
    if (points.count === 0) {
        const [x0, y0, x1, y1] = manifest.bounds;
        const f = manifest.stretch_factor;
        return {
            min: [x0, y0, 0],
            max: [x0 + (x1 - x0) * f, y0 + (y1 - y0) * f, 0],
        };
    }
    const min: [number, number, number] = [Infinity, Infinity, Infinity];
    const max: [number, number, number] = [-Infinity, -Infinity, -Infinity];
    for (let i = 0; i < points.count; i++) {
        min[0] = Math.min(min[0], points.x[i]);
        min[1] = Math.min(min[1], points.y[i]);
        min[2] = Math.min(min[2], points.z[i]);
        max[0] = Math.max(max[0], points.x[i]);
        max[1] = Math.max(max[1], points.y[i]);
        max[2] = Math.max(max[2], points.z[i]);
    }
    return { min, max };
}
