/** Browser entry point: sliders for arc position and time, mode buttons,
 * a mask brush, and physical-camera thumbnails for context. */

import { ServiceClient } from "./api.js";
import { MaskTool } from "./masktool.js";
import { ViewportController, type Display } from "./viewport.js";
import type { BrowseMode, CameraPose, Manifest } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
    const node = document.getElementById(id);
    if (!node) {
        throw new Error(`missing element #${id}`);
    }
    return node as T;
}

function posesFrom(manifest: Manifest): CameraPose[] {
    return manifest.cameras.map(({ K, R, t }) => ({ K, R, t }));
}

class CanvasDisplay implements Display {
    private ctx: CanvasRenderingContext2D;
    constructor(private canvas: HTMLCanvasElement,
                private status: HTMLElement) {
        this.ctx = canvas.getContext("2d")!;
    }

    show(image: Uint8Array, info: { source: string; seq: number;
                                    meta?: Record<string, unknown> }): void {
        const blob = new Blob([image.buffer as ArrayBuffer], { type: "image/png" });
        const url = URL.createObjectURL(blob);
        const img = new Image();
        img.onload = () => {
            this.canvas.width = img.width;
            this.canvas.height = img.height;
            this.ctx.drawImage(img, 0, 0);
            URL.revokeObjectURL(url);
        };
        img.src = url;
        const psnr = info.meta?.["psnr_vs_frame"];
        this.status.textContent = psnr !== undefined
            ? `#${info.seq} ${info.source} (PSNR ${psnr} dB)`
            : `#${info.seq} ${info.source}`;
    }

    toast(message: string): void {
        const node = el<HTMLElement>("toast");
        node.textContent = message;
        node.classList.add("visible");
        setTimeout(() => node.classList.remove("visible"), 4000);
    }
}

async function boot(): Promise<void> {
    const base = (window as unknown as { SERVICE_URL?: string }).SERVICE_URL
        ?? "http://127.0.0.1:8080";
    const service = new ServiceClient(base);
    const manifest = await service.manifest();
    const poses = posesFrom(manifest);

    const canvas = el<HTMLCanvasElement>("view");
    const display = new CanvasDisplay(canvas, el("status"));
    const vp = new ViewportController(service, display, manifest, poses);

    const uSlider = el<HTMLInputElement>("u");
    const tSlider = el<HTMLInputElement>("t");
    tSlider.max = String(manifest.num_frames - 1);
    uSlider.addEventListener("input", () => vp.setU(Number(uSlider.value)));
    tSlider.addEventListener("input", () => vp.setTime(Number(tSlider.value)));
    for (const mode of ["freeze-time", "freeze-view", "free"] as BrowseMode[]) {
        el<HTMLButtonElement>(`mode-${mode}`).addEventListener(
            "click", () => vp.setMode(mode));
    }

    // physical-camera thumbnails
    const strip = el("thumbs");
    for (const cid of manifest.camera_ids) {
        const img = document.createElement("img");
        img.className = "thumb";
        const bytes = await service.frame(cid, 0);
        img.src = URL.createObjectURL(
            new Blob([bytes.buffer as ArrayBuffer], { type: "image/png" }));
        strip.appendChild(img);
    }

    // mask tool over the canvas
    const [w, h] = manifest.resolution;
    const tool = new MaskTool(w, h, 6);
    let drawing = false;
    const toGrid = (ev: MouseEvent): [number, number] => {
        const rect = canvas.getBoundingClientRect();
        return [((ev.clientX - rect.left) / rect.width) * w,
                ((ev.clientY - rect.top) / rect.height) * h];
    };
    canvas.addEventListener("mousedown", (ev) => {
        drawing = true;
        tool.beginStroke(...toGrid(ev));
    });
    canvas.addEventListener("mousemove", (ev) => {
        if (drawing) {
            tool.strokeTo(...toGrid(ev));
        }
    });
    window.addEventListener("mouseup", () => {
        drawing = false;
        tool.endStroke();
    });
    const submit = async (op: "remove" | "disocclude") => {
        if (tool.isEmpty()) {
            display.toast("draw a mask first");
            return;
        }
        const snapped = Math.round(vp.state.u * (manifest.num_cameras - 1));
        const env = tool.toEnvelope(manifest.camera_ids[snapped],
                                    Math.round(vp.state.time), op);
        try {
            const id = await service.postEdit(env);
            vp.addEdit(id);
            tool.clear();
        } catch (err) {
            display.toast(String(err));
        }
    };
    el<HTMLButtonElement>("edit-remove").addEventListener("click",
        () => void submit("remove"));
    el<HTMLButtonElement>("edit-disocclude").addEventListener("click",
        () => void submit("disocclude"));

    vp.schedule();
}

if (typeof document !== "undefined") {
    void boot();
}
