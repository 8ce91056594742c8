"""Binary morphology, boundary extraction, and the exact Euclidean
distance transform.

The EDT is computed on squared distances with separable lower-envelope
passes (one parabola sweep per axis). In voxel units the squared distances
are exact integers; ``sqrt`` is applied only at the very end. The same
machinery supports a per-site additive cost, which gives a nearest-site
label transform with deterministic tie-breaking (used for nearest-branch
assignment).
"""

from __future__ import annotations

import numpy as np

from .errors import EmptyInputError, ParameterError
from .volume import Spacing, require_mask, require_same_shape

CROSS6 = "cross6"
CUBE26 = "cube26"

_OFFSETS = {
    CROSS6: [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)],
    CUBE26: [
        (dx, dy, dz)
        for dx in (-1, 0, 1)
        for dy in (-1, 0, 1)
        for dz in (-1, 0, 1)
        if (dx, dy, dz) != (0, 0, 0)
    ],
}

_INF = np.inf


def structuring_offsets(se: str) -> list[tuple[int, int, int]]:
    try:
        return _OFFSETS[se]
    except KeyError:
        raise ParameterError(f"structuring element must be '{CROSS6}' or '{CUBE26}', got {se!r}") from None


def _shifted(padded: np.ndarray, off: tuple[int, int, int], shape: tuple[int, ...]) -> np.ndarray:
    """View of the 1-padded array shifted by ``off``."""
    sl = tuple(slice(1 + o, 1 + o + n) for o, n in zip(off, shape))
    return padded[sl]


def erode(m: np.ndarray, se: str = CROSS6) -> np.ndarray:
    """A voxel survives iff itself and all its ``se`` neighbors are foreground.

    Out-of-bounds neighbors count as background, so the volume border erodes.
    """
    m = require_mask(m)
    padded = np.pad(m, 1, constant_values=0)
    out = m.copy()
    for off in structuring_offsets(se):
        np.minimum(out, _shifted(padded, off, m.shape), out=out)
    return out


def dilate(m: np.ndarray, se: str = CROSS6) -> np.ndarray:
    """A voxel becomes foreground iff itself or any ``se`` neighbor is foreground."""
    m = require_mask(m)
    padded = np.pad(m, 1, constant_values=0)
    out = m.copy()
    for off in structuring_offsets(se):
        np.maximum(out, _shifted(padded, off, m.shape), out=out)
    return out


def boundary(m: np.ndarray) -> np.ndarray:
    """Outermost surface: foreground voxels with a background 6-neighbor."""
    m = require_mask(m)
    return (m & ~erode(m, CROSS6)).astype(np.uint8)


def _envelope_line(f: np.ndarray, w: float, v: np.ndarray, z: np.ndarray, out: np.ndarray) -> None:
    """1D pass of the lower-envelope transform: out[p] = min_q f[q] + w*(p-q)^2.

    ``f`` holds +inf at non-site positions; ``v``/``z`` are scratch buffers.
    """
    n = f.shape[0]
    k = 0
    first = -1
    for q in range(n):
        if f[q] != _INF:
            first = q
            break
    if first < 0:
        out[:] = _INF
        return
    v[0] = first
    z[0] = -_INF
    z[1] = _INF
    for q in range(first + 1, n):
        fq = f[q]
        if fq == _INF:
            continue
        cq = fq + w * q * q
        while True:
            vk = v[k]
            s = (cq - (f[vk] + w * vk * vk)) / (2.0 * w * (q - vk))
            if s <= z[k]:
                k -= 1
            else:
                break
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = _INF
    k = 0
    for p in range(n):
        while z[k + 1] < p:
            k += 1
        vk = v[k]
        out[p] = w * (p - vk) * (p - vk) + f[vk]


def cost_transform(cost: np.ndarray, weights: Spacing = (1.0, 1.0, 1.0)) -> np.ndarray:
    """min over sites of ``cost[site] + sum_a weights[a] * (delta_a)^2``.

    ``cost`` is float64 with +inf at non-site voxels. With integer costs and
    integer weights every output value is an exactly represented integer.
    """
    out = np.asarray(cost, dtype=np.float64).copy()
    n_max = max(out.shape)
    v = np.empty(n_max + 1, dtype=np.int64)
    z = np.empty(n_max + 2, dtype=np.float64)
    buf = np.empty(n_max, dtype=np.float64)
    for axis, w in enumerate(weights):
        moved = np.ascontiguousarray(np.moveaxis(out, axis, -1))
        n = moved.shape[-1]
        flat = moved.reshape(-1, n)
        for line in flat:
            if (line == _INF).all():
                continue
            _envelope_line(line.copy(), float(w), v, z, buf)
            line[:] = buf[:n]
        out = np.moveaxis(moved, -1, axis)
    return out


def squared_edt(reference: np.ndarray, spacing: Spacing | None = None) -> np.ndarray:
    """Exact squared distance from every voxel to the nearest reference voxel.

    Voxel units (int64) when ``spacing`` is None, mm^2 (float64) otherwise.
    """
    reference = require_mask(reference, "reference")
    if reference.sum() == 0:
        raise EmptyInputError("squared_edt: reference mask has no foreground voxels")
    cost = np.where(reference != 0, 0.0, _INF)
    if spacing is None:
        sq = cost_transform(cost, (1.0, 1.0, 1.0))
        return np.rint(sq).astype(np.int64)
    weights = tuple(float(s) * float(s) for s in spacing)
    return cost_transform(cost, weights)


def joint_bbox(*masks: np.ndarray, pad: int = 0) -> tuple[slice, slice, slice] | None:
    """Bounding-box slices covering the foreground of all masks, or None."""
    lo = None
    hi = None
    for m in masks:
        pts = np.argwhere(m)
        if pts.size == 0:
            continue
        mlo = pts.min(axis=0)
        mhi = pts.max(axis=0)
        lo = mlo if lo is None else np.minimum(lo, mlo)
        hi = mhi if hi is None else np.maximum(hi, mhi)
    if lo is None:
        return None
    shape = masks[0].shape
    lo = np.maximum(lo - pad, 0)
    hi = np.minimum(hi + pad, np.asarray(shape) - 1)
    return tuple(slice(int(a), int(b) + 1) for a, b in zip(lo, hi))


def edt(reference: np.ndarray, domain: np.ndarray | None = None, spacing: Spacing | None = None) -> np.ndarray:
    """Euclidean distance to the nearest reference voxel, zeroed outside ``domain``.

    ``spacing`` selects mm units; default is isotropic voxel units. With a
    domain given, the transform runs on the joint bounding box only — the
    envelope passes are exact on any window containing all sites and all
    queried voxels.
    """
    if domain is not None:
        domain = require_mask(domain, "domain")
        reference = require_mask(reference, "reference")
        require_same_shape(reference, domain, "reference and domain")
        box = joint_bbox(reference, domain)
        if box is None:
            raise EmptyInputError("edt: reference mask has no foreground voxels")
        sq = squared_edt(reference[box], spacing)
        d = np.zeros(reference.shape, dtype=np.float64)
        d[box] = np.sqrt(sq.astype(np.float64))
        return np.where(domain != 0, d, 0.0)
    sq = squared_edt(reference, spacing)
    return np.sqrt(sq.astype(np.float64))


def nearest_site_labels(site_labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-site label for every voxel, ties broken by the smaller label.

    ``site_labels`` holds 0 for non-sites and positive integer labels at
    sites. Returns ``(labels, squared_distances)``, both exact: the label
    is folded into the transported cost as ``n_labels * d^2 + (label - 1)``
    so the lexicographic (distance, label) minimum is a single scalar min.
    """
    site_labels = np.asarray(site_labels)
    if site_labels.ndim != 3:
        raise ParameterError(f"site label volume must be 3D, got shape {site_labels.shape}")
    if (site_labels < 0).any():
        raise ParameterError("site labels must be non-negative")
    k = int(site_labels.max())
    if k == 0:
        raise EmptyInputError("nearest_site_labels: no sites")
    m = float(k)
    cost = np.where(site_labels > 0, site_labels.astype(np.float64) - 1.0, _INF)
    res = cost_transform(cost, (m, m, m))
    res = np.rint(res).astype(np.int64)
    labels = (res % k + 1).astype(np.int32)
    sq = res // k
    return labels, sq


def max_distance(d: np.ndarray, over: np.ndarray) -> float:
    """Maximum of ``d`` over the foreground of ``over``."""
    over = require_mask(over, "over")
    require_same_shape(d, over, "distance and mask")
    if over.sum() == 0:
        raise EmptyInputError("max_distance: mask has no foreground voxels")
    return float(d[over != 0].max())
