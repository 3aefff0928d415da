import { parseEsriAscii, parseManifest, parsePoints } from "./formats";
import type { AnnotationRecord, JobDescriptor, SubmitResult, TileBundle } from "./types";

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** Thin client for the campaign service HTTP protocol. */
export class ApiClient {
    private readonly base: string;
    private readonly fetchFn: FetchLike;

    constructor(base = "", fetchFn: FetchLike = (...args) => fetch(...args)) {
        this.base = base.replace(/\/$/, "");
        this.fetchFn = fetchFn;
    }

    /** Reserve the next job; null when the service has no work (204). */
    async nextJob(workerId: string): Promise<JobDescriptor | null> {
        const res = await this.fetchFn(
            `${this.base}/api/jobs/next?worker=${encodeURIComponent(workerId)}`,
        );
        if (res.status === 204) return null;
        if (!res.ok) throw new Error(`next job failed: ${res.status}`);
        return (await res.json()) as JobDescriptor;
    }

    async fetchBundle(tileId: string): Promise<TileBundle> {
        const [manifestRes, pointsRes, dtmRes] = await Promise.all([
            this.fetchFn(`${this.base}/api/tiles/${tileId}/manifest`),
            this.fetchFn(`${this.base}/api/tiles/${tileId}/points`),
            this.fetchFn(`${this.base}/api/tiles/${tileId}/dtm`),
        ]);
        for (const res of [manifestRes, pointsRes, dtmRes]) {
            if (!res.ok) throw new Error(`tile ${tileId} fetch failed: ${res.status}`);
        }
        return {
            manifest: parseManifest(await manifestRes.text()),
            points: parsePoints(await pointsRes.text()),
            dtm: parseEsriAscii(await dtmRes.text()),
        };
    }

    async requestAlternative(jobId: string): Promise<JobDescriptor> {
        const res = await this.fetchFn(`${this.base}/api/jobs/${jobId}/alternative`, {
            method: "POST",
        });
        if (!res.ok) throw new Error(`alternative failed: ${res.status}`);
        return (await res.json()) as JobDescriptor;
    }

    async submitJob(
        jobId: string,
        qualification: AnnotationRecord[],
        payload: AnnotationRecord[] | "no_stems",
    ): Promise<SubmitResult> {
        const res = await this.fetchFn(`${this.base}/api/jobs/${jobId}/submission`, {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify({ qualification, payload }),
        });
        if (!res.ok && res.status !== 200) throw new Error(`submission failed: ${res.status}`);
        return (await res.json()) as SubmitResult;
    }
}
