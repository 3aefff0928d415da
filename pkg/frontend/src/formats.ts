import type { Dtm, TileManifest, TilePoints } from "./types";

/** Parse the ASCII cloud format: `x y z [r g b]` per line, `#` comments skipped. */
export function parsePoints(text: string): TilePoints {
    const xs: number[] = [];
    const ys: number[] = [];
    const zs: number[] = [];
    const rgb: number[] = [];
    const lines = text.split("\n");
    for (let i = 0; i < lines.length; i++) {
        const line = lines[i].trim();
        if (!line || line.startsWith("#")) continue;
        const f = line.split(/\s+/);
        if (f.length !== 3 && f.length !== 6) {
            throw new Error(`points line ${i + 1}: expected 3 or 6 fields, got ${f.length}`);
        }
        const x = Number(f[0]);
        const y = Number(f[1]);
        const z = Number(f[2]);
        if (!Number.isFinite(x) || !Number.isFinite(y) || !Number.isFinite(z)) {
            throw new Error(`points line ${i + 1}: non-numeric coordinate`);
        }
        xs.push(x);
        ys.push(y);
        zs.push(z);
        if (f.length === 6) {
            rgb.push(Number(f[3]), Number(f[4]), Number(f[5]));
        } else {
            rgb.push(0, 0, 0);
        }
    }
    return {
        count: xs.length,
        x: Float64Array.from(xs),
        y: Float64Array.from(ys),
        z: Float64Array.from(zs),
        rgb: Uint8Array.from(rgb),
    };
}

/** Parse an ESRI ASCII grid into a south-up node grid (cell centres as nodes). */
export function parseEsriAscii(text: string): Dtm {
    const header: Record<string, number> = {};
    const values: number[] = [];
    const headerKeys = new Set(["ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"]);
    for (const raw of text.split("\n")) {
        const line = raw.trim();
        if (!line) continue;
        const f = line.split(/\s+/);
        const key = f[0].toLowerCase();
        if (headerKeys.has(key)) {
            header[key] = Number(f[1]);
            continue;
        }
        for (const v of f) values.push(Number(v));
    }
    const nCols = header["ncols"];
    const nRows = header["nrows"];
    const cell = header["cellsize"];
    if (!nCols || !nRows || !cell) throw new Error("missing raster headers");
    if (values.length !== nCols * nRows) {
        throw new Error(`expected ${nCols * nRows} raster values, got ${values.length}`);
    }
    const nodata = header["nodata_value"] ?? -9999;
    const elevations = new Float64Array(nCols * nRows);
    // file rows run north to south; flip to south-up storage
    for (let r = 0; r < nRows; r++) {
        for (let c = 0; c < nCols; c++) {
            const v = values[r * nCols + c];
            elevations[(nRows - 1 - r) * nCols + c] = v === nodata ? NaN : v;
        }
    }
    return {
        originX: header["xllcorner"] + 0.5 * cell,
        originY: header["yllcorner"] + 0.5 * cell,
        cellSize: cell,
        nRows,
        nCols,
        elevations,
    };
}

export function parseManifest(json: string): TileManifest {
    const doc = JSON.parse(json);
    for (const key of ["tile_id", "bounds", "stretch_factor", "point_count", "points_file", "dtm_file"]) {
        if (!(key in doc)) throw new Error(`manifest missing ${key}`);
    }
    return doc as TileManifest;
}
