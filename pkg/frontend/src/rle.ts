import type { RleMask } from "./types.js";

/**
 * Decode a row-major run-length mask. Runs alternate off/on starting with
 * an off run, matching the backend encoder.
 */
export function decodeRle(rle: RleMask): Uint8Array {
  const total = rle.size.reduce((a, b) => a * b, 1);
  const covered = rle.counts.reduce((a, b) => a + b, 0);
  if (covered !== total) {
    throw new Error(`run lengths cover ${covered} pixels, mask has ${total}`);
  }
  const out = new Uint8Array(total);
  let pos = 0;
  let value = 0;
  for (const run of rle.counts) {
    if (run < 0) throw new Error("negative run length");
    if (value) out.fill(1, pos, pos + run);
    pos += run;
    value ^= 1;
  }
  return out;
}

/** Inverse of decodeRle, for round-trip checks and local mask edits. */
export function encodeRle(mask: Uint8Array, size: number[]): RleMask {
  const counts: number[] = [];
  let current = 0;
  let run = 0;
  for (const v of mask) {
    const bit = v ? 1 : 0;
    if (bit === current) {
      run += 1;
    } else {
      counts.push(run);
      current = bit;
      run = 1;
    }
  }
  counts.push(run);
  return { size: [...size], counts };
}

/** Number of on pixels, straight from the runs without decoding. */
export function pixelCount(rle: RleMask): number {
  let count = 0;
  for (let i = 1; i < rle.counts.length; i += 2) count += rle.counts[i];
  return count;
}
