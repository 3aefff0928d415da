import { ApiClient } from "./api";
import { AnnotatorApp } from "./app";
import type { Pane } from "./app";
import { PanelViewer } from "./viewer";

const $ = (id: string) => document.getElementById(id)!;

const workerId =
    new URLSearchParams(window.location.search).get("worker") ?? `anon-${Date.now() % 100000}`;
const app = new AnnotatorApp(new ApiClient(""), workerId);
let viewer: PanelViewer | null = null;

function status(text: string) {
    $("status").textContent = text;
}

function showPane(pane: Pane) {
    app.currentPane = pane;
    $("pane-label").textContent =
        pane === "qualification"
            ? `qualification tile ${app.qualification?.tileId ?? ""}`
            : `payload tile ${app.payload?.tileId ?? ""}`;
    const session = app.currentSession;
    if (session) {
        if (viewer === null) {
            viewer = new PanelViewer(
                session,
                $("main-view") as HTMLCanvasElement,
                $("side-view") as HTMLCanvasElement,
                $("detail-view") as HTMLCanvasElement,
                (x, y) => session.dragActiveTo(x, y),
            );
        } else {
            viewer.setSession(session);
        }
    }
}

async function loadNext() {
    status("fetching job...");
    if (!(await app.loadJob())) {
        status("no work available right now");
        return;
    }
    showPane("qualification");
    status(`job ${app.job!.job_id}: annotate both tiles, then submit`);
}

$("btn-new").addEventListener("click", () => {
    app.currentSession?.newCylinder();
    viewer?.refresh();
});
$("btn-up").addEventListener("click", () => {
    app.currentSession?.adjustHeight(1);
    viewer?.refresh();
});
$("btn-down").addEventListener("click", () => {
    app.currentSession?.adjustHeight(-1);
    viewer?.refresh();
});
$("btn-delete").addEventListener("click", () => {
    app.currentSession?.removeActive();
    viewer?.refresh();
});
$("btn-pane").addEventListener("click", () => {
    showPane(app.currentPane === "qualification" ? "payload" : "qualification");
});
$("btn-no-stems").addEventListener("click", async () => {
    try {
        const tile = await app.noStems();
        showPane("payload");
        status(
            app.job!.finalized_no_stems
                ? "no alternatives left: the no-stems answer stands; submit when ready"
                : `alternative tile ${tile} loaded`,
        );
    } catch (err) {
        status(String(err));
    }
});
$("btn-submit").addEventListener("click", async () => {
    try {
        const result = await app.submit();
        if (result.status === "accepted") {
            status("accepted - thank you! fetching the next job");
            await loadNext();
        } else {
            // annotations stay untouched; the worker corrects via a new job
            status(`rejected: ${result.reason ?? "unknown reason"}`);
        }
    } catch (err) {
        status(String(err));
    }
});

loadNext().catch((err) => status(String(err)));
