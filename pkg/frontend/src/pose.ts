/** Virtual-camera poses along the ordered physical-camera arc.
 *
 * Rotations interpolate spherically (via quaternions) and centers
 * linearly; the result is re-orthonormalized so it always satisfies the
 * pinhole rotation invariants. u = k / (N - 1) reproduces camera k
 * exactly.
 */

import type { CameraPose } from "./types.js";

type Quat = [number, number, number, number]; // w, x, y, z

function matToQuat(m: number[][]): Quat {
    const trace = m[0][0] + m[1][1] + m[2][2];
    let w: number, x: number, y: number, z: number;
    if (trace > 0) {
        const s = Math.sqrt(trace + 1.0) * 2;
        w = 0.25 * s;
        x = (m[2][1] - m[1][2]) / s;
        y = (m[0][2] - m[2][0]) / s;
        z = (m[1][0] - m[0][1]) / s;
    } else if (m[0][0] > m[1][1] && m[0][0] > m[2][2]) {
        const s = Math.sqrt(1.0 + m[0][0] - m[1][1] - m[2][2]) * 2;
        w = (m[2][1] - m[1][2]) / s;
        x = 0.25 * s;
        y = (m[0][1] + m[1][0]) / s;
        z = (m[0][2] + m[2][0]) / s;
    } else if (m[1][1] > m[2][2]) {
        const s = Math.sqrt(1.0 + m[1][1] - m[0][0] - m[2][2]) * 2;
        w = (m[0][2] - m[2][0]) / s;
        x = (m[0][1] + m[1][0]) / s;
        y = 0.25 * s;
        z = (m[1][2] + m[2][1]) / s;
    } else {
        const s = Math.sqrt(1.0 + m[2][2] - m[0][0] - m[1][1]) * 2;
        w = (m[1][0] - m[0][1]) / s;
        x = (m[0][2] + m[2][0]) / s;
        y = (m[1][2] + m[2][1]) / s;
        z = 0.25 * s;
    }
    return [w, x, y, z];
}

function quatToMat(q: Quat): number[][] {
    const [w, x, y, z] = q;
    return [
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ];
}

function slerp(a: Quat, b: Quat, s: number): Quat {
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3];
    let bb: Quat = [...b];
    if (dot < 0) {
        dot = -dot;
        bb = [-b[0], -b[1], -b[2], -b[3]];
    }
    if (dot > 0.9995) {
        const out = a.map((v, i) => v + s * (bb[i] - v)) as Quat;
        const n = Math.hypot(...out);
        return out.map((v) => v / n) as Quat;
    }
    const theta = Math.acos(Math.min(1, dot));
    const sinT = Math.sin(theta);
    const wa = Math.sin((1 - s) * theta) / sinT;
    const wb = Math.sin(s * theta) / sinT;
    return a.map((v, i) => wa * v + wb * bb[i]) as Quat;
}

function cross(a: number[], b: number[]): number[] {
    return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0]];
}

function normalize(v: number[]): number[] {
    const n = Math.hypot(...v);
    return v.map((x) => x / n);
}

/** Gram-Schmidt pass keeping the rotation a proper orthonormal matrix. */
export function reorthonormalize(m: number[][]): number[][] {
    const r0 = normalize(m[0]);
    const d = m[1][0] * r0[0] + m[1][1] * r0[1] + m[1][2] * r0[2];
    const r1 = normalize(m[1].map((v, i) => v - d * r0[i]));
    const r2 = cross(r0, r1);
    return [r0, r1, r2];
}

export function cameraCenter(pose: CameraPose): number[] {
    // center = -R^T t
    const { R, t } = pose;
    return [0, 1, 2].map((i) => -(R[0][i] * t[0] + R[1][i] * t[1] + R[2][i] * t[2]));
}

/** Interpolated pose at arc parameter u in [0, 1]; endpoints are exact. */
export function interpolatePose(cameras: CameraPose[], u: number): CameraPose {
    if (cameras.length === 0) {
        throw new Error("no cameras");
    }
    if (cameras.length === 1) {
        return cameras[0];
    }
    const clamped = Math.min(1, Math.max(0, u));
    const scaled = clamped * (cameras.length - 1);
    const k = Math.min(Math.floor(scaled), cameras.length - 2);
    const s = scaled - k;
    if (s === 0) {
        return cameras[k];
    }
    if (s === 1) {
        return cameras[k + 1];
    }
    const a = cameras[k];
    const b = cameras[k + 1];
    const R = reorthonormalize(quatToMat(slerp(matToQuat(a.R), matToQuat(b.R), s)));
    const ca = cameraCenter(a);
    const cb = cameraCenter(b);
    const c = ca.map((v, i) => (1 - s) * v + s * cb[i]);
    const t = [0, 1, 2].map((i) => -(R[i][0] * c[0] + R[i][1] * c[1] + R[i][2] * c[2]));
    const K = a.K.map((row, i) => row.map((v, j) => (1 - s) * v + s * b.K[i][j]));
    return { K, R, t };
}

/** True when u sits on a physical camera within eps of its arc position. */
export function snappedCameraIndex(u: number, n: number, eps = 1e-9): number | null {
    if (n < 2) {
        return u <= eps ? 0 : null;
    }
    const scaled = u * (n - 1);
    const k = Math.round(scaled);
    if (k < 0 || k >= n) {
        return null;
    }
    return Math.abs(scaled - k) <= eps * (n - 1) ? k : null;
}
