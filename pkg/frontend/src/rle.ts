/** Run-length encoding for boolean masks, row-major, starting with a run
 * of zeros — the service's mask envelope format. */

export function maskToRle(mask: Uint8Array | boolean[]): number[] {
    const n = mask.length;
    if (n === 0) {
        return [];
    }
    const runs: number[] = [];
    let current = false;
    let count = 0;
    for (let i = 0; i < n; i++) {
        const v = !!mask[i];
        if (v === current) {
            count++;
        } else {
            runs.push(count);
            current = v;
            count = 1;
        }
    }
    runs.push(count);
    return runs;
}

export function rleToMask(runs: number[], width: number, height: number): Uint8Array {
    const total = width * height;
    const sum = runs.reduce((a, b) => a + b, 0);
    if (sum !== total) {
        throw new Error(`RLE sums to ${sum}, expected ${total}`);
    }
    const out = new Uint8Array(total);
    let pos = 0;
    let value = 0;
    for (const r of runs) {
        if (value) {
            out.fill(1, pos, pos + r);
        }
        pos += r;
        value ^= 1;
    }
    return out;
}
