/** Minimal single-file NIfTI-1 encode/decode, little-endian, enough to
 * exchange volumes with the core CLI. The payload order (x fastest)
 * matches ArrayView3, so no reordering happens on either side. */

import { gunzipSync } from "node:zlib";
import type { ArrayView3 } from "./types.js";

const HEADER_SIZE = 348;
const VOX_OFFSET = 352;
const MAGIC = "n+1\0";

const CODE_UINT8 = 2;
const CODE_FLOAT32 = 16;
const CODE_FLOAT64 = 64;

function datatypeOf(data: ArrayView3["data"]): { code: number; bitpix: number } {
  if (data instanceof Uint8Array) return { code: CODE_UINT8, bitpix: 8 };
  if (data instanceof Float32Array) return { code: CODE_FLOAT32, bitpix: 32 };
  return { code: CODE_FLOAT64, bitpix: 64 };
}

export function encodeNifti(view: ArrayView3, spacing: [number, number, number] = [1, 1, 1]): Buffer {
  const { code, bitpix } = datatypeOf(view.data);
  const header = Buffer.alloc(VOX_OFFSET);
  header.writeInt32LE(HEADER_SIZE, 0);
  header.writeUInt8("r".charCodeAt(0), 38);
  header.writeInt16LE(3, 40);
  header.writeInt16LE(view.dims[0], 42);
  header.writeInt16LE(view.dims[1], 44);
  header.writeInt16LE(view.dims[2], 46);
  for (let i = 4; i <= 7; i++) header.writeInt16LE(1, 40 + 2 * i);
  header.writeInt16LE(code, 70);
  header.writeInt16LE(bitpix, 72);
  header.writeFloatLE(0, 76);
  header.writeFloatLE(spacing[0], 80);
  header.writeFloatLE(spacing[1], 84);
  header.writeFloatLE(spacing[2], 88);
  header.writeFloatLE(VOX_OFFSET, 108);
  header.writeFloatLE(1, 112); // scl_slope
  header.writeFloatLE(0, 116); // scl_inter
  header.writeUInt8(2, 123); // spatial units: mm
  header.write(MAGIC, 344, "ascii");
  const payload = Buffer.from(view.data.buffer, view.data.byteOffset, view.data.byteLength);
  return Buffer.concat([header, payload]);
}

export function decodeNifti(blob: Buffer): ArrayView3 {
  if (blob.length >= 2 && blob[0] === 0x1f && blob[1] === 0x8b) {
    blob = gunzipSync(blob);
  }
  if (blob.length < HEADER_SIZE) {
    throw new Error(`NIfTI blob too short: ${blob.length} bytes`);
  }
  if (blob.readInt32LE(0) !== HEADER_SIZE) {
    throw new Error("unsupported NIfTI header (not little-endian sizeof_hdr 348)");
  }
  const magic = blob.toString("ascii", 344, 347);
  if (magic !== "n+1") {
    throw new Error(`bad NIfTI magic ${JSON.stringify(magic)}`);
  }
  const dims: [number, number, number] = [
    blob.readInt16LE(42),
    blob.readInt16LE(44),
    blob.readInt16LE(46),
  ];
  const code = blob.readInt16LE(70);
  const voxOffset = Math.trunc(blob.readFloatLE(108));
  const n = dims[0] * dims[1] * dims[2];

  const slice = (bytesPer: number) => {
    const end = voxOffset + n * bytesPer;
    if (blob.length < end) {
      throw new Error(`truncated NIfTI payload: need ${end} bytes, have ${blob.length}`);
    }
    const copy = Buffer.alloc(n * bytesPer);
    blob.copy(copy, 0, voxOffset, end);
    return copy;
  };

  let data: ArrayView3["data"];
  if (code === CODE_UINT8) {
    data = new Uint8Array(slice(1).buffer, 0, n);
  } else if (code === CODE_FLOAT32) {
    const b = slice(4);
    data = new Float32Array(b.buffer, b.byteOffset, n);
  } else if (code === CODE_FLOAT64) {
    const b = slice(8);
    data = new Float64Array(b.buffer, b.byteOffset, n);
  } else {
    throw new Error(`unsupported NIfTI datatype code ${code}`);
  }
  return { data, dims };
}
