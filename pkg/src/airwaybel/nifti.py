"""Minimal single-file NIfTI-1 reader/writer.

Covers the subset the toolkit needs: 3D volumes, little- or big-endian
input, optional gzip, datatypes uint8 / int16 / int32 / float32 / float64,
scl_slope/scl_inter intensity scaling, and pixdim spacing. The raw 348-byte
header is kept on read so pass-through writes preserve fields we do not
interpret (orientation quaternions and affine rows in particular).

Output is always little-endian with vox_offset 352 and no extensions.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError
from .volume import Volume3

HEADER_SIZE = 348
VOX_OFFSET = 352
MAGIC = b"n+1\x00"

_DTYPES = {
    2: np.dtype(np.uint8),
    4: np.dtype(np.int16),
    8: np.dtype(np.int32),
    16: np.dtype(np.float32),
    64: np.dtype(np.float64),
}
_CODES = {v: k for k, v in _DTYPES.items()}
_NAME_TO_DTYPE = {
    "uint8": np.dtype(np.uint8),
    "int16": np.dtype(np.int16),
    "int32": np.dtype(np.int32),
    "float32": np.dtype(np.float32),
    "float64": np.dtype(np.float64),
}


@dataclass
class NiftiHeader:
    dims: tuple[int, int, int]
    datatype_code: int
    bitpix: int
    pixdim: tuple[float, float, float]
    scl_slope: float
    scl_inter: float
    vox_offset: int
    byte_order: str  # '<' or '>'
    magic: bytes
    raw: bytes  # original 348 header bytes, as stored in the file


def _read_file_bytes(path) -> bytes:
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(2)
        f.seek(0)
        if head == b"\x1f\x8b":
            with gzip.open(f) as gz:
                return gz.read()
        return f.read()


def read_nifti(path) -> tuple[Volume3, NiftiHeader]:
    """Load a (optionally gzipped) single-file NIfTI-1 volume.

    Applies scl_slope/scl_inter when non-trivial (result becomes float64);
    pixdim 1..3 becomes the volume spacing.
    """
    blob = _read_file_bytes(path)
    if len(blob) < HEADER_SIZE:
        raise FormatError(f"{path}: file too short for a NIfTI-1 header ({len(blob)} bytes)")
    raw = blob[:HEADER_SIZE]

    order = "<"
    (sizeof_hdr,) = struct.unpack_from("<i", raw, 0)
    if sizeof_hdr != HEADER_SIZE:
        (sizeof_hdr,) = struct.unpack_from(">i", raw, 0)
        if sizeof_hdr != HEADER_SIZE:
            raise FormatError(f"{path}: bad sizeof_hdr (not 348 in either byte order)")
        order = ">"

    magic = raw[344:348]
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected single-file NIfTI-1 {MAGIC!r}")

    dim = struct.unpack_from(order + "8h", raw, 40)
    ndim = dim[0]
    if ndim < 1 or ndim > 7:
        raise FormatError(f"{path}: invalid dim[0]={ndim}")
    shape = [max(1, d) for d in dim[1 : 1 + ndim]]
    if any(d > 1 for d in shape[3:]):
        raise FormatError(f"{path}: volume has more than 3 non-trivial dimensions: {shape}")
    shape = (shape + [1, 1, 1])[:3]

    (datatype_code,) = struct.unpack_from(order + "h", raw, 70)
    (bitpix,) = struct.unpack_from(order + "h", raw, 72)
    if datatype_code not in _DTYPES:
        raise FormatError(f"{path}: unsupported datatype code {datatype_code}")
    dt = _DTYPES[datatype_code].newbyteorder(order)
    if bitpix != dt.itemsize * 8:
        raise FormatError(f"{path}: bitpix {bitpix} disagrees with datatype {datatype_code}")

    pixdim = struct.unpack_from(order + "8f", raw, 76)
    spacing = tuple(float(p) if np.isfinite(p) and p > 0 else 1.0 for p in pixdim[1:4])

    (vox_offset_f,) = struct.unpack_from(order + "f", raw, 108)
    vox_offset = int(vox_offset_f)
    if vox_offset < HEADER_SIZE:
        raise FormatError(f"{path}: vox_offset {vox_offset} < {HEADER_SIZE}")
    scl_slope, scl_inter = struct.unpack_from(order + "2f", raw, 112)

    n = shape[0] * shape[1] * shape[2]
    payload = blob[vox_offset : vox_offset + n * dt.itemsize]
    if len(payload) != n * dt.itemsize:
        raise FormatError(
            f"{path}: truncated payload, expected {n * dt.itemsize} bytes, got {len(payload)}"
        )
    data = np.frombuffer(payload, dtype=dt).reshape(shape, order="F")
    if scl_slope not in (0.0, 1.0) or scl_inter != 0.0:
        if scl_slope != 0.0:
            data = data.astype(np.float64) * float(scl_slope) + float(scl_inter)

    header = NiftiHeader(
        dims=tuple(shape),
        datatype_code=datatype_code,
        bitpix=bitpix,
        pixdim=spacing,
        scl_slope=float(scl_slope),
        scl_inter=float(scl_inter),
        vox_offset=vox_offset,
        byte_order=order,
        magic=magic,
        raw=raw,
    )
    return Volume3(data, spacing), header


def _infer_datatype(data: np.ndarray) -> np.dtype:
    if data.dtype in (np.dtype(np.uint8), np.dtype(bool)):
        return np.dtype(np.uint8)
    if data.dtype == np.dtype(np.int16):
        return np.dtype(np.int16)
    if data.dtype == np.dtype(np.int32):
        return np.dtype(np.int32)
    if data.dtype == np.dtype(np.float32):
        return np.dtype(np.float32)
    return np.dtype(np.float64)


def write_nifti(volume: Volume3, path, datatype: str | None = None, header: NiftiHeader | None = None) -> None:
    """Write a single-file little-endian NIfTI-1 volume (gzip if ``*.gz``).

    ``datatype`` is one of uint8/int16/int32/float32/float64; by default it
    is inferred from the array dtype. uint8 output is reserved for masks and
    rejects values other than 0 and 1; int16 requires integral values in
    range. Passing the header from ``read_nifti`` preserves orientation
    fields verbatim.
    """
    data = volume.data
    dt = _NAME_TO_DTYPE[datatype] if datatype is not None else _infer_datatype(data)
    if datatype is not None and datatype not in _NAME_TO_DTYPE:
        raise ParameterError(f"unsupported datatype {datatype!r}")

    if dt == np.uint8:
        vals = np.unique(data)
        if not np.isin(vals, (0, 1)).all():
            raise ParameterError(
                f"uint8 output is for binary masks; found values {vals[:8]} outside {{0,1}}"
            )
    elif dt == np.int16 or dt == np.int32:
        if data.dtype.kind == "f" and not (data == np.round(data)).all():
            raise ParameterError(f"{dt.name} output requires integral values")
        if data.size:
            info = np.iinfo(dt)
            if data.min() < info.min or data.max() > info.max:
                raise ParameterError(f"values out of {dt.name} range [{info.min}, {info.max}]")

    out = data.astype(dt.newbyteorder("<"), copy=False)
    nx, ny, nz = out.shape

    if header is not None:
        raw = bytearray(header.raw)
    else:
        raw = bytearray(HEADER_SIZE)
        struct.pack_into("<i", raw, 0, HEADER_SIZE)
        raw[38] = ord("r")  # regular
        raw[123] = 2  # xyzt units: mm
    struct.pack_into("<8h", raw, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<2h", raw, 70, _CODES[np.dtype(dt.newbyteorder("="))], dt.itemsize * 8)
    struct.pack_into(
        "<8f", raw, 76, 0.0, volume.spacing[0], volume.spacing[1], volume.spacing[2], 0.0, 0.0, 0.0, 0.0
    )
    struct.pack_into("<f", raw, 108, float(VOX_OFFSET))
    struct.pack_into("<2f", raw, 112, 1.0, 0.0)  # values are written as-is
    raw[344:348] = MAGIC

    blob = bytes(raw) + b"\x00\x00\x00\x00" + out.tobytes(order="F")
    path = Path(path)
    if path.suffix == ".gz":
        # fixed mtime and no embedded filename so identical volumes
        # produce identical files
        with open(path, "wb") as f:
            with gzip.GzipFile(filename="", fileobj=f, mode="wb", mtime=0) as gz:
                gz.write(blob)
    else:
        with open(path, "wb") as f:
            f.write(blob)


def read_mask(path) -> Volume3:
    """Read a volume and validate it as a {0,1} mask (any integer dtype)."""
    vol, _ = read_nifti(path)
    data = vol.data
    vals = np.unique(data)
    if not np.isin(vals, (0, 1)).all():
        raise FormatError(f"{path}: mask contains values other than 0/1: {vals[:8]}")
    return Volume3(np.ascontiguousarray(data.astype(np.uint8)), vol.spacing)


def read_probability(path) -> Volume3:
    """Read a volume and validate it as a [0,1] probability map."""
    vol, _ = read_nifti(path)
    data = vol.data.astype(np.float64)
    if data.size and (data.min() < 0.0 or data.max() > 1.0 or not np.isfinite(data).all()):
        raise FormatError(f"{path}: probability volume has values outside [0,1]")
    return Volume3(data, vol.spacing)
