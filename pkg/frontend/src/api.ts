/** Thin client over the render service HTTP API. */

import type { MaskEnvelope, Manifest, RenderRequest, RenderResult } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceClient {
    constructor(private baseUrl: string,
                private fetchImpl: FetchLike = fetch.bind(globalThis)) {}

    private async ok(r: Response): Promise<Response> {
        if (!r.ok) {
            let detail = r.statusText;
            try {
                const body = await r.json();
                detail = `${body.error}: ${body.detail}`;
            } catch {
                /* non-JSON error body */
            }
            throw new Error(`service ${r.status}: ${detail}`);
        }
        return r;
    }

    async manifest(): Promise<Manifest> {
        const r = await this.ok(await this.fetchImpl(`${this.baseUrl}/manifest`));
        return (await r.json()) as Manifest;
    }

    async frame(camera: string, t: number): Promise<Uint8Array> {
        const r = await this.ok(await this.fetchImpl(
            `${this.baseUrl}/frame?camera=${encodeURIComponent(camera)}&t=${t}`));
        return new Uint8Array(await r.arrayBuffer());
    }

    async render(req: RenderRequest): Promise<RenderResult> {
        const r = await this.ok(await this.fetchImpl(`${this.baseUrl}/render`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(req),
        }));
        const meta = JSON.parse(r.headers.get("X-Render-Meta") ?? "{}");
        return { image: new Uint8Array(await r.arrayBuffer()), meta };
    }

    async postEdit(envelope: MaskEnvelope): Promise<number> {
        const r = await this.ok(await this.fetchImpl(`${this.baseUrl}/edits`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(envelope),
        }));
        return (await r.json()).id as number;
    }

    async deleteEdit(id: number): Promise<void> {
        await this.ok(await this.fetchImpl(`${this.baseUrl}/edits/${id}`,
                                           { method: "DELETE" }));
    }

    async listEdits(): Promise<{ id: number; op: string }[]> {
        const r = await this.ok(await this.fetchImpl(`${this.baseUrl}/edits`));
        return (await r.json()).edits;
    }
}
