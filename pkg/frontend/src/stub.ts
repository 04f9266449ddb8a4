/**
 * Deterministic stub encoder: hash-seeded pseudo-random unit vectors.
 *
 * Offline runs (tests, CI) must not download model weights; the stub maps
 * each sentence to a reproducible unit vector so the whole pipeline stays
 * exercisable end to end.
 */

import { createHash } from "node:crypto";

export const STUB_NATIVE_DIM = 32;
export const STUB_NAME = "stub-sha256-mulberry32-v1";

/** Small fast PRNG with a 32-bit state, good enough for stub features. */
export function mulberry32(seed: number): () => number {
  let state = seed | 0;
  return () => {
    state = (state + 0x6d2b79f5) | 0;
    let t = Math.imul(state ^ (state >>> 15), 1 | state);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function gaussianVector(rng: () => number, dim: number): number[] {
  const out = new Array<number>(dim);
  for (let i = 0; i < dim; i += 1) {
    const u1 = Math.max(rng(), 1e-12);
    const u2 = rng();
    out[i] = Math.sqrt(-2.0 * Math.log(u1)) * Math.cos(2.0 * Math.PI * u2);
  }
  return out;
}

function normalize(vec: number[]): number[] {
  const norm = Math.sqrt(vec.reduce((acc, x) => acc + x * x, 0));
  return vec.map((x) => x / norm);
}

/** Unit vector derived from the sentence bytes alone. */
export function stubEncode(sentence: string, dim: number = STUB_NATIVE_DIM): number[] {
  const digest = createHash("sha256").update(sentence, "utf-8").digest();
  const seed = digest.readUInt32BE(0);
  return normalize(gaussianVector(mulberry32(seed), dim));
}

/**
 * Seeded random projection with orthonormal rows (Gram-Schmidt), used to
 * reduce the native dimension. Stored alongside the vectors so the mapping
 * is reproducible.
 */
export function randomProjection(rows: number, cols: number, seedText: string): number[][] {
  if (rows > cols) {
    throw new Error(`projection must reduce: rows ${rows} > cols ${cols}`);
  }
  const digest = createHash("sha256").update(seedText, "utf-8").digest();
  const rng = mulberry32(digest.readUInt32BE(4));
  const basis: number[][] = [];
  while (basis.length < rows) {
    let v = gaussianVector(rng, cols);
    for (const u of basis) {
      const dot = v.reduce((acc, x, i) => acc + x * u[i], 0);
      v = v.map((x, i) => x - dot * u[i]);
    }
    const norm = Math.sqrt(v.reduce((acc, x) => acc + x * x, 0));
    if (norm > 1e-8) {
      basis.push(v.map((x) => x / norm));
    }
  }
  return basis;
}

export function applyProjection(matrix: number[][], vec: number[]): number[] {
  return matrix.map((row) => row.reduce((acc, w, i) => acc + w * vec[i], 0));
}
