/** Brush strokes rasterized to a boolean grid at frame resolution, packed
 * into the service's RLE mask envelope. */

import { maskToRle } from "./rle.js";
import type { MaskEnvelope } from "./types.js";

export class MaskTool {
    private mask: Uint8Array;
    private last: [number, number] | null = null;

    constructor(readonly width: number, readonly height: number,
                public brushRadius = 4) {
        this.mask = new Uint8Array(width * height);
    }

    clear(): void {
        this.mask.fill(0);
        this.last = null;
    }

    isEmpty(): boolean {
        return !this.mask.some((v) => v !== 0);
    }

    private disc(cx: number, cy: number): void {
        const r = this.brushRadius;
        const x0 = Math.max(0, Math.floor(cx - r));
        const x1 = Math.min(this.width - 1, Math.ceil(cx + r));
        const y0 = Math.max(0, Math.floor(cy - r));
        const y1 = Math.min(this.height - 1, Math.ceil(cy + r));
        for (let y = y0; y <= y1; y++) {
            for (let x = x0; x <= x1; x++) {
                if ((x - cx) ** 2 + (y - cy) ** 2 <= r * r) {
                    this.mask[y * this.width + x] = 1;
                }
            }
        }
    }

    beginStroke(x: number, y: number): void {
        this.last = [x, y];
        this.disc(x, y);
    }

    strokeTo(x: number, y: number): void {
        if (this.last === null) {
            this.beginStroke(x, y);
            return;
        }
        const [px, py] = this.last;
        const steps = Math.max(1, Math.ceil(Math.hypot(x - px, y - py)));
        for (let i = 1; i <= steps; i++) {
            this.disc(px + ((x - px) * i) / steps, py + ((y - py) * i) / steps);
        }
        this.last = [x, y];
    }

    endStroke(): void {
        this.last = null;
    }

    fillRect(x0: number, y0: number, x1: number, y1: number): void {
        for (let y = Math.max(0, y0); y <= Math.min(this.height - 1, y1); y++) {
            for (let x = Math.max(0, x0); x <= Math.min(this.width - 1, x1); x++) {
                this.mask[y * this.width + x] = 1;
            }
        }
    }

    snapshot(): Uint8Array {
        return this.mask.slice();
    }

    toEnvelope(cameraId: string, time: number,
               op: "remove" | "disocclude"): MaskEnvelope {
        if (this.isEmpty()) {
            throw new Error("empty mask");
        }
        return {
            version: 1,
            camera_id: cameraId,
            time,
            op,
            width: this.width,
            height: this.height,
            rle: maskToRle(this.mask),
        };
    }
}
