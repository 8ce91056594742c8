import type { ArrayView3 } from "../src/types.js";

/** Deterministic 32-bit PRNG so parity fixtures are reproducible. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function randomMask(rand: () => number, dims: [number, number, number], density = 0.4): ArrayView3 {
  const n = dims[0] * dims[1] * dims[2];
  const data = new Uint8Array(n);
  for (let i = 0; i < n; i++) data[i] = rand() < density ? 1 : 0;
  if (data.every((v) => v === 0)) data[Math.floor(n / 2)] = 1;
  return { data, dims };
}

export function randomProbability(rand: () => number, dims: [number, number, number]): ArrayView3 {
  const n = dims[0] * dims[1] * dims[2];
  const data = new Float64Array(n);
  for (let i = 0; i < n; i++) data[i] = rand();
  return { data, dims };
}

export function bytesOf(a: Float64Array | Float32Array | Uint8Array): Buffer {
  return Buffer.from(a.buffer, a.byteOffset, a.byteLength);
}

/** Run up to `limit` async jobs concurrently. */
export async function mapConcurrent<T, R>(
  items: T[],
  limit: number,
  fn: (item: T, index: number) => Promise<R>,
): Promise<R[]> {
  const results: R[] = new Array(items.length);
  let next = 0;
  async function worker() {
    while (next < items.length) {
      const i = next++;
      results[i] = await fn(items[i], i);
    }
  }
  await Promise.all(Array.from({ length: Math.min(limit, items.length) }, worker));
  return results;
}
