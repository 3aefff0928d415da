import { describe, expect, it } from "vitest";

import {
    cropCylinderIndices,
    dtmElevation,
    maskLowestIndices,
    stretchPosition,
    unstretchAnnotation,
} from "../src/geometry";
import { loadBundle, loadOracle } from "./fixtures";

const bundle = loadBundle();
const oracle = loadOracle();

describe("unstretchAnnotation", () => {
    it("matches the server-side oracle within 1e-3 m", () => {
        for (const { stretched, world } of oracle.unstretch) {
            const [wx, wy] = unstretchAnnotation(stretched[0], stretched[1], bundle.manifest);
            expect(Math.abs(wx - world[0])).toBeLessThan(1e-3);
            expect(Math.abs(wy - world[1])).toBeLessThan(1e-3);
        }
    });

    it("is the inverse of stretchPosition", () => {
        for (const { world } of oracle.unstretch) {
            const [sx, sy] = stretchPosition(world[0], world[1], bundle.manifest);
            const [wx, wy] = unstretchAnnotation(sx, sy, bundle.manifest);
            expect(wx).toBeCloseTo(world[0], 9);
            expect(wy).toBeCloseTo(world[1], 9);
        }
    });

    it("is the identity at stretch factor 1", () => {
        const flat = { ...bundle.manifest, stretch_factor: 1.0 };
        expect(unstretchAnnotation(7.25, 3.5, flat)).toEqual([7.25, 3.5]);
    });
});

describe("dtmElevation", () => {
    it("matches the server-side bilinear oracle", () => {
        for (const { xy, z } of oracle.elevation) {
            expect(dtmElevation(bundle.dtm, xy[0], xy[1])).toBeCloseTo(z, 9);
        }
    });

    it("throws outside coverage", () => {
        expect(() => dtmElevation(bundle.dtm, -1e6, 0)).toThrow(/coverage/);
    });
});

describe("detail view crop + mask", () => {
    it("reproduces the server-side surviving point set exactly", () => {
        for (const { center, indices } of oracle.detail) {
            const cropped = cropCylinderIndices(bundle.points, center[0], center[1], 5.0);
            const masked = maskLowestIndices(bundle.points, cropped, 0.05);
            expect(masked).toEqual(indices);
        }
    });

    it("masks floor(n * fraction) points, ties by lower index first", () => {
        const points = {
            count: 4,
            x: Float64Array.from([0, 1, 2, 3]),
            y: Float64Array.from([0, 0, 0, 0]),
            z: Float64Array.from([1, 1, 1, 5]),
            rgb: new Uint8Array(12),
        };
        expect(maskLowestIndices(points, [0, 1, 2, 3], 0.25)).toEqual([1, 2, 3]);
        expect(maskLowestIndices(points, [0, 1, 2, 3], 0.0)).toEqual([0, 1, 2, 3]);
    });

    it("includes boundary points at exactly the crop radius", () => {
        const points = {
            count: 1,
            x: Float64Array.from([3]),
            y: Float64Array.from([4]),
            z: Float64Array.from([0]),
            rgb: new Uint8Array(3),
        };
        expect(cropCylinderIndices(points, 0, 0, 5.0)).toEqual([0]);
    });
});
