"""Core 3D grid type, intensity normalization, patch tiling, and
connected-component machinery.

Conventions shared by every module in this package:

* volumes are numpy arrays of shape ``(nx, ny, nz)`` indexed ``[x, y, z]``;
* the flat (serialized) element order is x-fastest, i.e. linear index
  ``i = x + nx * (y + ny * z)`` — the same order a NIfTI payload uses;
* binary masks hold exactly 0 and 1;
* out-of-bounds voxels count as background.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import EmptyInputError, ParameterError

Spacing = tuple[float, float, float]

DEFAULT_SPACING: Spacing = (1.0, 1.0, 1.0)

#: Connectivity used for component analysis of airway masks.
COMPONENT_CONNECTIVITY = 26


@dataclass(frozen=True)
class Volume3:
    """A dense 3D scalar grid with voxel spacing in mm.

    ``data`` must be 3-dimensional; ``spacing`` strictly positive and finite.
    Instances are treated as immutable carriers between I/O and the numeric
    routines, which operate on the bare arrays.
    """

    data: np.ndarray
    spacing: Spacing = DEFAULT_SPACING

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ParameterError(f"volume must be 3D, got shape {self.data.shape}")
        if len(self.spacing) != 3:
            raise ParameterError(f"spacing must have 3 components, got {self.spacing}")
        for s in self.spacing:
            if not (math.isfinite(s) and s > 0):
                raise ParameterError(f"spacing components must be finite and > 0, got {self.spacing}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    def flat(self) -> np.ndarray:
        """Elements in serialization order (x fastest)."""
        return self.data.ravel(order="F")


@dataclass(frozen=True)
class PatchGrid:
    """Sliding-window tiling of a volume: every window fits, union covers."""

    patch_size: tuple[int, int, int]
    overlap_fraction: float
    starts: tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]
    origins: list[tuple[int, int, int]] = field(default_factory=list)


def require_mask(m: np.ndarray, name: str = "mask") -> np.ndarray:
    """Validate a {0,1} volume and return it as uint8."""
    m = np.asarray(m)
    if m.ndim != 3:
        raise ParameterError(f"{name} must be 3D, got shape {m.shape}")
    if m.dtype == bool:
        return m.astype(np.uint8)
    vals = np.unique(m)
    if not np.isin(vals, (0, 1)).all():
        raise ParameterError(f"{name} must contain only 0 and 1, found values {vals[:8]}")
    return m.astype(np.uint8, copy=False)


def require_probability(p: np.ndarray, name: str = "probability volume") -> np.ndarray:
    """Validate a [0,1] float volume and return it as float64."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 3:
        raise ParameterError(f"{name} must be 3D, got shape {p.shape}")
    if p.size and (np.nanmin(p) < 0.0 or np.nanmax(p) > 1.0 or not np.isfinite(p).all()):
        raise ParameterError(f"{name} must lie in [0,1] and be finite")
    return p


def require_same_shape(a: np.ndarray, b: np.ndarray, what: str = "volumes") -> None:
    if a.shape != b.shape:
        raise ParameterError(f"{what} must share dims, got {a.shape} vs {b.shape}")


def normalize_hu(v: np.ndarray, lo: float = -1000.0, hi: float = 600.0) -> np.ndarray:
    """Clip CT intensities to ``[lo, hi]`` and rescale to ``[0, 1]``.

    ``out = clamp((v - lo) / (hi - lo), 0, 1)``, computed in float64.
    """
    if not lo < hi:
        raise ParameterError(f"normalize_hu requires lo < hi, got lo={lo}, hi={hi}")
    v = np.asarray(v, dtype=np.float64)
    return np.clip((v - lo) / (hi - lo), 0.0, 1.0)


def _axis_starts(n: int, p: int, overlap: float) -> tuple[int, ...]:
    if p < 1:
        raise ParameterError(f"patch size must be >= 1, got {p}")
    if p > n:
        raise ParameterError(f"patch size {p} exceeds volume extent {n}")
    if not 0.0 <= overlap < 1.0:
        raise ParameterError(f"overlap fraction must be in [0,1), got {overlap}")
    # round-half-up; clamp the final window instead of padding
    stride = max(1, math.floor(p * (1.0 - overlap) + 0.5))
    starts = list(range(0, max(n - p, 0) + 1, stride))
    if starts[-1] != n - p:
        starts.append(n - p)
    return tuple(dict.fromkeys(starts))


def sliding_windows(
    dims: tuple[int, int, int],
    patch: tuple[int, int, int],
    overlap: float = 0.25,
) -> PatchGrid:
    """Window origins tiling ``dims`` with the requested patch size and overlap.

    Per axis the starts are ``0, s, 2s, ...`` with stride
    ``s = round(p * (1 - overlap))``; the final start is clamped to ``n - p``
    so every window stays in bounds while coverage remains total.
    """
    per_axis = tuple(_axis_starts(n, p, overlap) for n, p in zip(dims, patch))
    origins = [tuple(o) for o in itertools.product(*per_axis)]
    return PatchGrid(patch_size=tuple(patch), overlap_fraction=overlap, starts=per_axis, origins=origins)


def _label_structure(connectivity: int) -> np.ndarray:
    if connectivity == 6:
        return ndimage.generate_binary_structure(3, 1)
    if connectivity == 18:
        return ndimage.generate_binary_structure(3, 2)
    if connectivity == 26:
        return ndimage.generate_binary_structure(3, 3)
    raise ParameterError(f"connectivity must be 6, 18 or 26, got {connectivity}")


def connected_components(m: np.ndarray, connectivity: int = COMPONENT_CONNECTIVITY) -> tuple[np.ndarray, int]:
    """Label foreground components; 0 is background, labels run 1..K.

    Labels are assigned in raster order of each component's first voxel, so
    label 1 contains the lexicographically smallest foreground voxel.
    """
    m = require_mask(m)
    labels, count = ndimage.label(m, structure=_label_structure(connectivity))
    return labels.astype(np.int32, copy=False), int(count)


def component_sizes(labels: np.ndarray, count: int) -> np.ndarray:
    """Voxel count per label, index 0 unused."""
    return np.bincount(labels.ravel(), minlength=count + 1)


def largest_component(m: np.ndarray, connectivity: int = COMPONENT_CONNECTIVITY) -> np.ndarray:
    """Mask of the largest foreground component; size ties keep the smallest label."""
    labels, count = connected_components(m, connectivity)
    if count == 0:
        raise EmptyInputError("largest_component: mask has no foreground voxels")
    sizes = component_sizes(labels, count)
    best = int(np.argmax(sizes[1:])) + 1  # argmax returns the first (smallest) label on ties
    return (labels == best).astype(np.uint8)
