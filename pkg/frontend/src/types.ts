/** Shared wire types for the render service API (version 1). */

export interface Manifest {
    api_version: number;
    scene_id: string;
    num_cameras: number;
    num_frames: number;
    frame_rate: number;
    resolution: [number, number];
    camera_ids: string[];
    stages: string[];
    cameras: ({ camera_id: string } & CameraPose)[];
}

export interface CameraPose {
    K: number[][];
    R: number[][];
    t: number[];
}

export interface RenderRequest {
    camera: string | CameraPose;
    time: number;
    stage: string;
    edits?: number[];
}

export interface RenderResult {
    image: Uint8Array;
    meta: Record<string, unknown>;
}

export interface MaskEnvelope {
    version: number;
    camera_id: string;
    time: number;
    op: "remove" | "disocclude";
    width: number;
    height: number;
    rle: number[];
}

export type BrowseMode = "freeze-time" | "freeze-view" | "free";

export interface ViewportState {
    u: number;                     // position along the physical-camera arc, [0, 1]
    time: number;
    mode: BrowseMode;
    stage: string;
    edits: number[];
}
