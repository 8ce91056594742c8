/** Caller-owned dense 3D array: flat data in x-fastest order plus dims. */
export interface ArrayView3 {
  /** Flat elements, linear index = x + nx*(y + ny*z). Never mutated. */
  data: Float64Array | Float32Array | Uint8Array;
  /** Voxel counts (nx, ny, nz); data.length must equal their product. */
  dims: [number, number, number];
}

/** Scalars of the weighted ratio loss; omitted fields use the core defaults
 * (alpha 0.2, r 0.7, gamma 0.6, theta 0.05, boundary mode). */
export interface LossParams {
  alpha?: number;
  r?: number;
  gamma?: number;
  theta?: number;
  mode?: "boundary" | "centerline" | "uniform";
  /** Named preset, e.g. "bel_0.6_r0.7"; explicit fields override it. */
  preset?: string;
}

export type LossName = "dice" | "tversky" | "gul" | "bel";

export function elementCount(dims: [number, number, number]): number {
  return dims[0] * dims[1] * dims[2];
}

export function checkView(view: ArrayView3, name: string): void {
  const [nx, ny, nz] = view.dims;
  if (!(nx > 0 && ny > 0 && nz > 0)) {
    throw new Error(`${name}: dims must be positive, got ${view.dims}`);
  }
  if (view.data.length !== elementCount(view.dims)) {
    throw new Error(
      `${name}: data length ${view.data.length} does not match dims ${view.dims}`,
    );
  }
}

export function checkSameDims(a: ArrayView3, b: ArrayView3, what: string): void {
  if (a.dims[0] !== b.dims[0] || a.dims[1] !== b.dims[1] || a.dims[2] !== b.dims[2]) {
    throw new Error(`${what}: dims mismatch ${a.dims} vs ${b.dims}`);
  }
}
