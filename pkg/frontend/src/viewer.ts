import * as THREE from "three";

import { stretchPosition } from "./geometry";
import type { AnnotationSession } from "./session";
import { CYLINDER_RADIUS } from "./types";

const ACTIVE_COLOR = 0xf5d412; // cylinder under review
const SET_COLOR = 0x2e8b2e; // already placed, still editable

/**
 * Three-panel rendering of one annotation session:
 *  - an interactive 3D view (drag = orbit, wheel = zoom, right-drag = pan),
 *  - a static 2D side view, the orthographic projection onto the xz plane,
 *  - a bottom-up detail view of the active cylinder's masked neighborhood.
 *
 * All state lives in the session; the viewer only draws it and translates
 * pointer gestures into session calls via the supplied callbacks.
 */
export class PanelViewer {
    private session: AnnotationSession;
    private readonly onDrag: (x: number, y: number) => void;

    private readonly scene = new THREE.Scene();
    private readonly detailScene = new THREE.Scene();
    private readonly mainRenderer: THREE.WebGLRenderer;
    private readonly sideRenderer: THREE.WebGLRenderer;
    private readonly detailRenderer: THREE.WebGLRenderer;
    private readonly mainCamera: THREE.PerspectiveCamera;
    private readonly sideCamera: THREE.OrthographicCamera;
    private readonly detailCamera: THREE.PerspectiveCamera;

    private cloud: THREE.Points | null = null;
    private detailCloud: THREE.Points | null = null;
    private terrain: THREE.Mesh | null = null;
    private cylinderGroup = new THREE.Group();
    private target = new THREE.Vector3();
    private orbit = { theta: -Math.PI / 3, phi: Math.PI / 3.2, radius: 60 };
    private dragging: "none" | "orbit" | "cylinder" = "none";
    private readonly raycaster = new THREE.Raycaster();

    constructor(
        session: AnnotationSession,
        main: HTMLCanvasElement,
        side: HTMLCanvasElement,
        detail: HTMLCanvasElement,
        onDrag: (x: number, y: number) => void,
    ) {
        this.session = session;
        this.onDrag = onDrag;
        this.mainRenderer = new THREE.WebGLRenderer({ canvas: main, antialias: true });
        this.sideRenderer = new THREE.WebGLRenderer({ canvas: side, antialias: true });
        this.detailRenderer = new THREE.WebGLRenderer({ canvas: detail, antialias: true });
        this.mainCamera = new THREE.PerspectiveCamera(55, main.width / main.height, 0.1, 5000);
        this.sideCamera = new THREE.OrthographicCamera(-1, 1, 1, -1, 0.1, 5000);
        this.detailCamera = new THREE.PerspectiveCamera(70, detail.width / detail.height, 0.05, 200);
        this.scene.background = new THREE.Color(0x10141a);
        this.detailScene.background = new THREE.Color(0x10141a);
        this.scene.add(this.cylinderGroup);
        this.bindGestures(main);
        this.setSession(session);
    }

    setSession(session: AnnotationSession): void {
        this.session = session;
        if (this.cloud) this.scene.remove(this.cloud);
        if (this.terrain) this.scene.remove(this.terrain);
        this.cloud = makePoints(session, null, 0.35);
        this.scene.add(this.cloud);
        this.terrain = makeTerrain(session);
        this.terrain.visible = false; // pick surface only
        this.scene.add(this.terrain);
        const box = new THREE.Box3().setFromObject(this.cloud);
        box.getCenter(this.target);
        this.orbit.radius = Math.max(20, box.getSize(new THREE.Vector3()).length() * 0.8);
        this.frameSideView(box);
        this.refresh();
    }

    /** Re-sync cylinders and the detail panel after any session change. */
    refresh(): void {
        this.cylinderGroup.clear();
        const stretch = this.session.bundle.manifest.stretch_factor;
        this.session.cylinders.forEach((c, i) => {
            const geometry = new THREE.CylinderGeometry(
                CYLINDER_RADIUS * stretch,
                CYLINDER_RADIUS * stretch,
                c.height,
                24,
            );
            const material = new THREE.MeshBasicMaterial({
                color: i === this.session.activeIndex ? ACTIVE_COLOR : SET_COLOR,
                transparent: true,
                opacity: 0.55,
            });
            const mesh = new THREE.Mesh(geometry, material);
            mesh.rotation.x = Math.PI / 2; // cylinder axis: y -> z
            mesh.position.set(c.x, c.y, c.baseZ + c.height / 2);
            mesh.userData.index = i;
            this.cylinderGroup.add(mesh);
        });
        this.refreshDetail();
        this.render();
    }

    private refreshDetail(): void {
        if (this.detailCloud) this.detailScene.remove(this.detailCloud);
        const indices = this.session.detailIndices();
        this.detailCloud = makePoints(this.session, indices, 0.12);
        this.detailScene.add(this.detailCloud);
        const active = this.session.active;
        if (active) {
            // bottom-up: camera below the base looking straight up the stem
            this.detailCamera.position.set(active.x, active.y, active.baseZ - 6);
            this.detailCamera.up.set(0, 1, 0);
            this.detailCamera.lookAt(active.x, active.y, active.baseZ + active.height);
        }
    }

    private frameSideView(box: THREE.Box3): void {
        const size = box.getSize(new THREE.Vector3());
        const center = box.getCenter(new THREE.Vector3());
        const halfW = Math.max(size.x, 1) * 0.55;
        const halfH = Math.max(size.z, 1) * 0.65;
        this.sideCamera.left = -halfW;
        this.sideCamera.right = halfW;
        this.sideCamera.top = halfH;
        this.sideCamera.bottom = -halfH;
        // pure function of the tile: fixed view along -y onto the xz plane
        this.sideCamera.position.set(center.x, box.min.y - 10, center.z);
        this.sideCamera.up.set(0, 0, 1);
        this.sideCamera.lookAt(center.x, center.y, center.z);
        this.sideCamera.updateProjectionMatrix();
    }

    render(): void {
        const { theta, phi, radius } = this.orbit;
        this.mainCamera.position.set(
            this.target.x + radius * Math.sin(phi) * Math.cos(theta),
            this.target.y + radius * Math.sin(phi) * Math.sin(theta),
            this.target.z + radius * Math.cos(phi),
        );
        this.mainCamera.up.set(0, 0, 1);
        this.mainCamera.lookAt(this.target);
        this.mainRenderer.render(this.scene, this.mainCamera);
        this.sideRenderer.render(this.scene, this.sideCamera);
        this.detailRenderer.render(this.detailScene, this.detailCamera);
    }

    private bindGestures(canvas: HTMLCanvasElement): void {
        canvas.addEventListener("pointerdown", (e) => {
            this.dragging = e.button === 0 && this.hitCylinder(canvas, e) ? "cylinder" : "orbit";
            canvas.setPointerCapture(e.pointerId);
        });
        canvas.addEventListener("pointermove", (e) => {
            if (this.dragging === "orbit" && e.buttons) {
                this.orbit.theta -= e.movementX * 0.005;
                this.orbit.phi = Math.min(
                    Math.PI - 0.05,
                    Math.max(0.05, this.orbit.phi - e.movementY * 0.005),
                );
                this.render();
            } else if (this.dragging === "cylinder") {
                const hit = this.hitTerrain(canvas, e);
                if (hit) {
                    this.onDrag(hit.x, hit.y);
                    this.refresh();
                }
            }
        });
        const stop = () => (this.dragging = "none");
        canvas.addEventListener("pointerup", stop);
        canvas.addEventListener("pointerleave", stop);
        canvas.addEventListener("wheel", (e) => {
            e.preventDefault();
            this.orbit.radius = Math.min(500, Math.max(2, this.orbit.radius * (1 + e.deltaY * 0.001)));
            this.render();
        });
    }

    private pointerRay(canvas: HTMLCanvasElement, e: PointerEvent): void {
        const rect = canvas.getBoundingClientRect();
        const ndc = new THREE.Vector2(
            ((e.clientX - rect.left) / rect.width) * 2 - 1,
            -((e.clientY - rect.top) / rect.height) * 2 + 1,
        );
        this.raycaster.setFromCamera(ndc, this.mainCamera);
    }

    private hitCylinder(canvas: HTMLCanvasElement, e: PointerEvent): boolean {
        this.pointerRay(canvas, e);
        const hits = this.raycaster.intersectObjects(this.cylinderGroup.children);
        return hits.length > 0 && hits[0].object.userData.index === this.session.activeIndex;
    }

    private hitTerrain(canvas: HTMLCanvasElement, e: PointerEvent): THREE.Vector3 | null {
        if (!this.terrain) return null;
        this.pointerRay(canvas, e);
        this.terrain.visible = true;
        const hits = this.raycaster.intersectObject(this.terrain);
        this.terrain.visible = false;
        return hits.length ? hits[0].point : null;
    }
}

function makePoints(
    session: AnnotationSession,
    indices: number[] | null,
    size: number,
): THREE.Points {
    const pts = session.bundle.points;
    const idx = indices ?? Array.from({ length: pts.count }, (_, i) => i);
    const positions = new Float32Array(idx.length * 3);
    const colors = new Float32Array(idx.length * 3);
    idx.forEach((i, k) => {
        positions[3 * k] = pts.x[i];
        positions[3 * k + 1] = pts.y[i];
        positions[3 * k + 2] = pts.z[i];
        colors[3 * k] = pts.rgb[3 * i] / 255;
        colors[3 * k + 1] = pts.rgb[3 * i + 1] / 255;
        colors[3 * k + 2] = pts.rgb[3 * i + 2] / 255;
    });
    const geometry = new THREE.BufferGeometry();
    geometry.setAttribute("position", new THREE.BufferAttribute(positions, 3));
    geometry.setAttribute("color", new THREE.BufferAttribute(colors, 3));
    const material = new THREE.PointsMaterial({ size, vertexColors: true });
    return new THREE.Points(geometry, material);
}

/** Invisible pick surface following the terrain, in displayed coordinates. */
function makeTerrain(session: AnnotationSession): THREE.Mesh {
    const dtm = session.bundle.dtm;
    const manifest = session.bundle.manifest;
    const geometry = new THREE.PlaneGeometry(1, 1, dtm.nCols - 1, dtm.nRows - 1);
    const pos = geometry.getAttribute("position") as THREE.BufferAttribute;
    let v = 0;
    // PlaneGeometry rows run top to bottom; walk the grid north to south
    for (let r = dtm.nRows - 1; r >= 0; r--) {
        for (let c = 0; c < dtm.nCols; c++) {
            const wx = dtm.originX + c * dtm.cellSize;
            const wy = dtm.originY + r * dtm.cellSize;
            const [sx, sy] = stretchPosition(wx, wy, manifest);
            pos.setXYZ(v++, sx, sy, dtm.elevations[r * dtm.nCols + c]);
        }
    }
    pos.needsUpdate = true;
    geometry.computeVertexNormals();
    return new THREE.Mesh(geometry, new THREE.MeshBasicMaterial({ side: THREE.DoubleSide }));
}
