import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { parseEsriAscii, parseManifest, parsePoints } from "../src/formats";
import type { TileBundle } from "../src/types";

const here = dirname(fileURLToPath(import.meta.url));
const fixtureDir = join(here, "fixtures");

export function fixtureText(name: string): string {
    return readFileSync(join(fixtureDir, name), "utf-8");
}

export interface Oracle {
    tile_id: string;
    stretch_factor: number;
    bounds: [number, number, number, number];
    point_count: number;
    unstretch: { stretched: [number, number]; world: [number, number] }[];
    elevation: { xy: [number, number]; z: number }[];
    detail: { center: [number, number]; indices: number[] }[];
}

export function loadOracle(): Oracle {
    return JSON.parse(fixtureText("oracle.json")) as Oracle;
}

export function loadBundle(): TileBundle {
    return {
        manifest: parseManifest(fixtureText("manifest.json")),
        points: parsePoints(fixtureText("points.xyz")),
        dtm: parseEsriAscii(fixtureText("dtm.asc")),
    };
}
