import { describe, expect, it } from "vitest";

import { cameraCenter, interpolatePose, reorthonormalize, snappedCameraIndex } from "../src/pose.js";
import type { CameraPose } from "../src/types.js";

function rotZ(a: number): number[][] {
    return [[Math.cos(a), -Math.sin(a), 0],
            [Math.sin(a), Math.cos(a), 0],
            [0, 0, 1]];
}

function matMulVec(m: number[][], v: number[]): number[] {
    return m.map((row) => row[0] * v[0] + row[1] * v[1] + row[2] * v[2]);
}

function poseAt(angle: number, center: number[]): CameraPose {
    const R = rotZ(angle);
    const t = matMulVec(R, center).map((x) => -x);
    return { K: [[300, 0, 120], [0, 300, 80], [0, 0, 1]], R, t };
}

const ring: CameraPose[] = [0, 0.3, 0.6, 0.9].map((a, i) =>
    poseAt(a, [Math.cos(a) * 5, Math.sin(a) * 5, 2 + 0.1 * i]));

describe("interpolatePose", () => {
    it("reproduces physical cameras exactly at u = k/(N-1)", () => {
        for (let k = 0; k < ring.length; k++) {
            const p = interpolatePose(ring, k / (ring.length - 1));
            expect(p.R).toEqual(ring[k].R);
            expect(p.t).toEqual(ring[k].t);
            expect(p.K).toEqual(ring[k].K);
        }
    });

    it("interpolates centers linearly inside a segment", () => {
        const p = interpolatePose(ring, 0.5 / (ring.length - 1));
        const c = cameraCenter(p);
        const c0 = cameraCenter(ring[0]);
        const c1 = cameraCenter(ring[1]);
        for (let i = 0; i < 3; i++) {
            expect(c[i]).toBeCloseTo((c0[i] + c1[i]) / 2, 9);
        }
    });

    it("keeps rotations orthonormal with unit determinant", () => {
        for (const u of [0.1, 0.37, 0.52, 0.81]) {
            const { R } = interpolatePose(ring, u);
            for (let i = 0; i < 3; i++) {
                for (let j = 0; j < 3; j++) {
                    const dot = R[i][0] * R[j][0] + R[i][1] * R[j][1] + R[i][2] * R[j][2];
                    expect(dot).toBeCloseTo(i === j ? 1 : 0, 9);
                }
            }
            const det =
                R[0][0] * (R[1][1] * R[2][2] - R[1][2] * R[2][1]) -
                R[0][1] * (R[1][0] * R[2][2] - R[1][2] * R[2][0]) +
                R[0][2] * (R[1][0] * R[2][1] - R[1][1] * R[2][0]);
            expect(det).toBeCloseTo(1, 9);
        }
    });

    it("slerps the rotation angle monotonically", () => {
        const a0 = 0;
        const a1 = 0.3;
        const p = interpolatePose([ring[0], ring[1]], 0.5);
        // rotation about z: recover the angle from R[0][0], R[1][0]
        const ang = Math.atan2(p.R[1][0], p.R[0][0]);
        expect(ang).toBeCloseTo((a0 + a1) / 2, 6);
    });

    it("clamps u outside [0, 1]", () => {
        expect(interpolatePose(ring, -0.5)).toEqual(ring[0]);
        expect(interpolatePose(ring, 1.5)).toEqual(ring[ring.length - 1]);
    });
});

describe("reorthonormalize", () => {
    it("is identity on an exact rotation", () => {
        const R = rotZ(0.7);
        const out = reorthonormalize(R);
        for (let i = 0; i < 3; i++) {
            for (let j = 0; j < 3; j++) {
                expect(out[i][j]).toBeCloseTo(R[i][j], 12);
            }
        }
    });
});

describe("snappedCameraIndex", () => {
    it("detects endpoints and interior snaps", () => {
        expect(snappedCameraIndex(0, 4)).toBe(0);
        expect(snappedCameraIndex(1, 4)).toBe(3);
        expect(snappedCameraIndex(1 / 3, 4)).toBe(1);
        expect(snappedCameraIndex(0.5, 4)).toBeNull();
    });
});
