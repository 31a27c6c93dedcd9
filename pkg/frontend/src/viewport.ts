/** Viewport controller: debounced render requests, stale-response
 * rejection, exact physical frames at snapped arc positions.
 *
 * The controller never synthesizes pixels itself; every displayed image
 * comes from a service response, handed to the Display implementation.
 */

import type { ServiceClient } from "./api.js";
import type { BrowseMode, CameraPose, Manifest, RenderRequest, ViewportState } from "./types.js";
import { interpolatePose, snappedCameraIndex } from "./pose.js";

export interface Display {
    show(image: Uint8Array, info: { source: "frame" | "render"; seq: number;
                                    meta?: Record<string, unknown> }): void;
    toast(message: string): void;
}

export interface ViewportOptions {
    debounceMs?: number;
    stage?: string;
}

export class ViewportController {
    readonly state: ViewportState;
    private seq = 0;
    private displayedSeq = 0;
    private inFlight = false;
    private pending = false;
    private timer: ReturnType<typeof setTimeout> | null = null;
    private readonly debounceMs: number;
    requestsIssued = 0;

    constructor(private service: ServiceClient,
                private display: Display,
                private manifest: Manifest,
                private poses: CameraPose[],
                options: ViewportOptions = {}) {
        this.debounceMs = options.debounceMs ?? 150;
        this.state = { u: 0, time: 0, mode: "free",
                       stage: options.stage ?? "cascade", edits: [] };
    }

    setU(u: number): void {
        if (this.state.mode === "freeze-view") {
            return;
        }
        this.state.u = Math.min(1, Math.max(0, u));
        this.schedule();
    }

    setTime(t: number): void {
        if (this.state.mode === "freeze-time") {
            return;
        }
        this.state.time = Math.min(this.manifest.num_frames - 1, Math.max(0, t));
        this.schedule();
    }

    setMode(mode: BrowseMode): void {
        this.state.mode = mode;
    }

    addEdit(id: number): void {
        if (!this.state.edits.includes(id)) {
            this.state.edits.push(id);
            this.schedule();
        }
    }

    removeEdit(id: number): void {
        const i = this.state.edits.indexOf(id);
        if (i >= 0) {
            this.state.edits.splice(i, 1);
            this.schedule();
        }
    }

    /** Debounced: rapid changes collapse into one request; at most one
     * request is in flight, with a trailing reissue if state moved. */
    schedule(): void {
        if (this.timer !== null) {
            clearTimeout(this.timer);
        }
        this.timer = setTimeout(() => {
            this.timer = null;
            void this.issue();
        }, this.debounceMs);
    }

    async issue(): Promise<void> {
        if (this.inFlight) {
            this.pending = true;
            return;
        }
        this.inFlight = true;
        const seq = ++this.seq;
        this.requestsIssued++;
        try {
            const t = Math.round(this.state.time);
            const snapped = snappedCameraIndex(this.state.u, this.manifest.num_cameras);
            if (snapped !== null && this.state.edits.length === 0) {
                const image = await this.service.frame(
                    this.manifest.camera_ids[snapped], t);
                if (seq > this.displayedSeq) {
                    this.displayedSeq = seq;
                    this.display.show(image, { source: "frame", seq });
                }
            } else {
                const req: RenderRequest = {
                    camera: snapped !== null
                        ? this.manifest.camera_ids[snapped]
                        : interpolatePose(this.poses, this.state.u),
                    time: t,
                    stage: this.state.stage,
                    edits: [...this.state.edits],
                };
                const res = await this.service.render(req);
                if (seq > this.displayedSeq) {
                    this.displayedSeq = seq;
                    this.display.show(res.image, { source: "render", seq,
                                                   meta: res.meta });
                }
            }
        } catch (err) {
            this.display.toast(String(err));
        } finally {
            this.inFlight = false;
            if (this.pending) {
                this.pending = false;
                void this.issue();
            }
        }
    }
}
