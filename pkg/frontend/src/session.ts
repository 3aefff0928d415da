import {
    cropCylinderIndices,
    displayBounds,
    dtmElevation,
    maskLowestIndices,
    unstretchAnnotation,
} from "./geometry";
import type { AnnotationRecord, Cylinder, TileBundle } from "./types";
import {
    DEFAULT_CYLINDER_HEIGHT,
    DETAIL_RADIUS,
    GROUND_MASK_FRACTION,
    HEIGHT_STEP,
    MIN_CYLINDER_HEIGHT,
} from "./types";

/**
 * Annotation state for one loaded tile: the cylinder list, the single active
 * (highlighted) cylinder, and the derived detail-view point set.
 *
 * Cylinder x/y live in the displayed (stretched) tile frame; the base z is
 * always the terrain elevation underneath, queried in world coordinates.
 * Rendering is elsewhere - this class is pure state and geometry.
 */
export class AnnotationSession {
    readonly bundle: TileBundle;
    cylinders: Cylinder[] = [];
    activeIndex: number | null = null;

    constructor(bundle: TileBundle) {
        this.bundle = bundle;
    }

    get tileId(): string {
        return this.bundle.manifest.tile_id;
    }

    get active(): Cylinder | null {
        return this.activeIndex === null ? null : this.cylinders[this.activeIndex];
    }

    private baseZ(x: number, y: number): number {
        const [wx, wy] = unstretchAnnotation(x, y, this.bundle.manifest);
        return dtmElevation(this.bundle.dtm, wx, wy);
    }

    /** Spawn a cylinder at the point-cloud centre with the default height. */
    newCylinder(): Cylinder {
        const { min, max } = displayBounds(this.bundle.points, this.bundle.manifest);
        const x = (min[0] + max[0]) / 2;
        const y = (min[1] + max[1]) / 2;
        const cylinder: Cylinder = {
            x,
            y,
            height: DEFAULT_CYLINDER_HEIGHT,
            baseZ: this.baseZ(x, y),
        };
        this.cylinders.push(cylinder);
        this.activeIndex = this.cylinders.length - 1;
        return cylinder;
    }

    selectCylinder(index: number | null): void {
        if (index !== null && (index < 0 || index >= this.cylinders.length)) {
            throw new Error(`no cylinder ${index}`);
        }
        this.activeIndex = index;
    }

    /** Move the active cylinder; its base re-snaps to the terrain. */
    dragActiveTo(x: number, y: number): Cylinder {
        if (this.activeIndex === null) throw new Error("no active cylinder");
        const c = this.cylinders[this.activeIndex];
        c.x = x;
        c.y = y;
        c.baseZ = this.baseZ(x, y);
        return c;
    }

    /** Grow or shrink the active cylinder by one step, floored. */
    adjustHeight(direction: 1 | -1): number {
        if (this.activeIndex === null) throw new Error("no active cylinder");
        const c = this.cylinders[this.activeIndex];
        c.height = Math.max(MIN_CYLINDER_HEIGHT, c.height + direction * HEIGHT_STEP);
        return c.height;
    }

    removeActive(): void {
        if (this.activeIndex === null) return;
        this.cylinders.splice(this.activeIndex, 1);
        this.activeIndex = this.cylinders.length ? this.cylinders.length - 1 : null;
    }

    /**
     * Point indices of the bottom-up detail view around the active cylinder:
     * a 5 m planar crop with the lowest 5% of the cropped points masked out.
     * Recomputed from scratch whenever the active cylinder moved.
     */
    detailIndices(): number[] {
        const c = this.active;
        if (c === null) return [];
        const cropped = cropCylinderIndices(this.bundle.points, c.x, c.y, DETAIL_RADIUS);
        return maskLowestIndices(this.bundle.points, cropped, GROUND_MASK_FRACTION);
    }

    /** Annotations in world coordinates, ready for submission. */
    worldAnnotations(): AnnotationRecord[] {
        return this.cylinders.map((c) => {
            const [wx, wy] = unstretchAnnotation(c.x, c.y, this.bundle.manifest);
            return { x: wx, y: wy, height: c.height };
        });
    }
}
