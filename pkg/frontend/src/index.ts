/** Bindings for the airwaybel core over caller-owned dense arrays.
 *
 * The functions serialize inputs as NIfTI, delegate to the core CLI, and
 * read the results back — a single numeric code path lives in the core, so
 * float64 results match it bit for bit. Inputs are never mutated; every
 * returned array is freshly allocated.
 */

import { readFile, writeFile } from "node:fs/promises";
import { join } from "node:path";

import { decodeNifti, encodeNifti } from "./nifti.js";
import { CoreError, runCli, withScratch } from "./runner.js";
import {
  type ArrayView3,
  type LossName,
  type LossParams,
  checkSameDims,
  checkView,
  elementCount,
} from "./types.js";

export { CoreError } from "./runner.js";
export { decodeNifti, encodeNifti } from "./nifti.js";
export type { ArrayView3, LossParams } from "./types.js";

/** Mirrors the core library version this binding targets. */
export const VERSION = "0.1.0";

function paramFlags(params?: LossParams): string[] {
  const flags: string[] = [];
  if (!params) return flags;
  if (params.preset !== undefined) flags.push("--preset", params.preset);
  if (params.alpha !== undefined) flags.push("--alpha", String(params.alpha));
  if (params.r !== undefined) flags.push("--r", String(params.r));
  if (params.gamma !== undefined) flags.push("--gamma", String(params.gamma));
  if (params.theta !== undefined) flags.push("--theta", String(params.theta));
  if (params.mode !== undefined) flags.push("--mode", params.mode);
  return flags;
}

/** Binary masks travel as uint8; a float view must hold only 0 and 1. */
function asMaskView(view: ArrayView3, name: string): ArrayView3 {
  checkView(view, name);
  if (view.data instanceof Uint8Array) return view;
  const out = new Uint8Array(elementCount(view.dims));
  for (let i = 0; i < out.length; i++) {
    const v = view.data[i];
    if (v !== 0 && v !== 1) {
      throw new Error(`${name}: mask values must be 0 or 1, found ${v} at ${i}`);
    }
    out[i] = v;
  }
  return { data: out, dims: view.dims };
}

async function writeVolume(dir: string, name: string, view: ArrayView3): Promise<string> {
  const path = join(dir, name);
  await writeFile(path, encodeNifti(view));
  return path;
}

async function readVolume(path: string): Promise<Float64Array> {
  const view = decodeNifti(await readFile(path));
  if (view.data instanceof Float64Array) return view.data;
  return Float64Array.from(view.data);
}

/** Per-voxel loss weights for a ground-truth mask (background exactly 1). */
export async function weightMap(
  g: ArrayView3,
  params?: LossParams,
  breakage?: ArrayView3,
): Promise<Float64Array> {
  const mask = asMaskView(g, "g");
  if (breakage) {
    checkView(breakage, "B");
    checkSameDims(g, breakage, "g and B");
  }
  return withScratch(async (dir) => {
    const gtPath = await writeVolume(dir, "gt.nii", mask);
    const outPath = join(dir, "w.nii");
    const args = ["weights", "--gt", gtPath, "--out", outPath, "--dtype", "float64", ...paramFlags(params)];
    if (breakage) {
      args.push("--breakage-map", await writeVolume(dir, "b.nii", breakage));
    }
    await runCli(args);
    return readVolume(outPath);
  });
}

/** Soft-skeleton deficit of the prediction against the reference mask. */
export async function breakageMap(
  g: ArrayView3,
  p: ArrayView3,
  iterations = 10,
): Promise<Float64Array> {
  const mask = asMaskView(g, "g");
  checkView(p, "p");
  checkSameDims(g, p, "g and p");
  return withScratch(async (dir) => {
    const gtPath = await writeVolume(dir, "gt.nii", mask);
    const predPath = await writeVolume(dir, "pred.nii", p);
    const outPath = join(dir, "b.nii");
    await runCli([
      "breakage", "--gt", gtPath, "--pred", predPath,
      "--iters", String(iterations), "--out", outPath, "--dtype", "float64",
    ]);
    return readVolume(outPath);
  });
}

async function lossCall(
  name: LossName,
  p: ArrayView3,
  g: ArrayView3,
  w: ArrayView3 | undefined,
  params: LossParams | undefined,
): Promise<number> {
  checkView(p, "p");
  const mask = asMaskView(g, "g");
  checkSameDims(p, g, "p and g");
  if (w) {
    checkView(w, "w");
    checkSameDims(p, w, "p and w");
  }
  return withScratch(async (dir) => {
    const predPath = await writeVolume(dir, "pred.nii", p);
    const gtPath = await writeVolume(dir, "gt.nii", mask);
    const args = ["loss", "--pred", predPath, "--gt", gtPath, "--loss", name, ...paramFlags(params)];
    if (w) {
      args.push("--weights", await writeVolume(dir, "w.nii", w));
    }
    const { stdout } = await runCli(args);
    return (JSON.parse(stdout) as { loss: number }).loss;
  });
}

/** Weighted ratio loss; ``w`` defaults to the core's weight map for the
 * given params (uniform 1 when g is empty). */
export async function belLoss(
  p: ArrayView3,
  g: ArrayView3,
  w?: ArrayView3,
  params?: LossParams,
): Promise<number> {
  return lossCall("bel", p, g, w, params);
}

/** Analytic d(loss)/d(p) of the weighted ratio loss (weights constant). */
export async function belGrad(
  p: ArrayView3,
  g: ArrayView3,
  w?: ArrayView3,
  params?: LossParams,
): Promise<Float64Array> {
  checkView(p, "p");
  const mask = asMaskView(g, "g");
  checkSameDims(p, g, "p and g");
  if (w) {
    checkView(w, "w");
    checkSameDims(p, w, "p and w");
  }
  return withScratch(async (dir) => {
    const predPath = await writeVolume(dir, "pred.nii", p);
    const gtPath = await writeVolume(dir, "gt.nii", mask);
    const gradFile = join(dir, "grad.nii");
    const args = [
      "loss", "--pred", predPath, "--gt", gtPath, "--loss", "bel",
      "--grad", gradFile, "--dtype", "float64", ...paramFlags(params),
    ];
    if (w) {
      args.push("--weights", await writeVolume(dir, "w.nii", w));
    }
    await runCli(args);
    return readVolume(gradFile);
  });
}

export async function diceLoss(p: ArrayView3, g: ArrayView3): Promise<number> {
  return lossCall("dice", p, g, undefined, undefined);
}

export async function tverskyLoss(p: ArrayView3, g: ArrayView3, alpha = 0.2): Promise<number> {
  return lossCall("tversky", p, g, undefined, { alpha });
}

export async function gulLoss(p: ArrayView3, g: ArrayView3, params?: LossParams): Promise<number> {
  return lossCall("gul", p, g, undefined, params);
}
