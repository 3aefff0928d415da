import type { ApiClient } from "./api";
import { AnnotationSession } from "./session";
import type { JobDescriptor, SubmitResult } from "./types";

export type Pane = "qualification" | "payload";

/**
 * One worker's pass through a job: two annotation sessions (the qualification
 * tile with known ground truth and the actual payload tile), the no-stems
 * alternatives flow, and submission.  Rejection leaves both sessions exactly
 * as they were so the worker can correct and take a new job.
 */
export class AnnotatorApp {
    private readonly api: ApiClient;
    readonly workerId: string;
    job: JobDescriptor | null = null;
    qualification: AnnotationSession | null = null;
    payload: AnnotationSession | null = null;
    currentPane: Pane = "qualification";
    lastResult: SubmitResult | null = null;

    constructor(api: ApiClient, workerId: string) {
        this.api = api;
        this.workerId = workerId;
    }

    get currentSession(): AnnotationSession | null {
        return this.currentPane === "qualification" ? this.qualification : this.payload;
    }

    /** Reserve a job and load both tiles; false when the service has no work. */
    async loadJob(): Promise<boolean> {
        const job = await this.api.nextJob(this.workerId);
        if (job === null) {
            this.job = null;
            return false;
        }
        this.job = job;
        this.qualification = new AnnotationSession(
            await this.api.fetchBundle(job.qualification_tile_id),
        );
        this.payload = new AnnotationSession(await this.api.fetchBundle(job.payload_tile_id));
        this.currentPane = "qualification";
        this.lastResult = null;
        return true;
    }

    /**
     * "I see no stems" on the payload tile: the service records the assertion
     * and swaps in an alternative tile (or finalizes the job after the cap).
     * Returns the tile id now shown in the payload pane.
     */
    async noStems(): Promise<string> {
        if (!this.job) throw new Error("no job loaded");
        const job = await this.api.requestAlternative(this.job.job_id);
        if (job.payload_tile_id !== this.job.payload_tile_id) {
            this.payload = new AnnotationSession(await this.api.fetchBundle(job.payload_tile_id));
        }
        this.job = job;
        this.currentPane = "payload";
        return job.payload_tile_id;
    }

    /** Submit both tiles' annotations (world frame); sessions survive rejection. */
    async submit(): Promise<SubmitResult> {
        if (!this.job || !this.qualification || !this.payload) {
            throw new Error("no job loaded");
        }
        const payloadAnswer = this.job.finalized_no_stems
            ? ("no_stems" as const)
            : this.payload.worldAnnotations();
        const result = await this.api.submitJob(
            this.job.job_id,
            this.qualification.worldAnnotations(),
            payloadAnswer,
        );
        this.lastResult = result;
        return result;
    }
}
