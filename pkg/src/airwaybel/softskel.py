"""Soft morphology on float grids, the iterated soft skeleton, and the
breakage map.

``soft_erode``/``soft_dilate`` are min/max pooling over the 6-connected
cross (self included, outside-volume reads 0). On binary input one step is
bit-identical to the discrete cross6 erosion/dilation from
:mod:`airwaybel.morphology`, which pins the semantics; on probability
volumes the same stencils stay continuous, so the skeleton map can be used
inside a differentiable training loop.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError
from .morphology import CROSS6, structuring_offsets
from .volume import require_probability, require_same_shape

#: Default number of erosion rounds; covers tube radii up to ~10 voxels.
DEFAULT_ITERATIONS = 10

_CROSS_OFFSETS = structuring_offsets(CROSS6)


def _pool(x: np.ndarray, reduce_ufunc) -> np.ndarray:
    padded = np.pad(x, 1, constant_values=0.0)
    out = x.copy()
    for off in _CROSS_OFFSETS:
        sl = tuple(slice(1 + o, 1 + o + n) for o, n in zip(off, x.shape))
        reduce_ufunc(out, padded[sl], out=out)
    return out


def soft_erode(x: np.ndarray) -> np.ndarray:
    """Min over the 6-neighborhood of each voxel (self included)."""
    return _pool(require_probability(x), np.minimum)


def soft_dilate(x: np.ndarray) -> np.ndarray:
    """Max over the 6-neighborhood of each voxel (self included)."""
    return _pool(require_probability(x), np.maximum)


def soft_open(x: np.ndarray) -> np.ndarray:
    return soft_dilate(soft_erode(x))


def soft_skel(x: np.ndarray, iterations: int = DEFAULT_ITERATIONS) -> np.ndarray:
    """Continuous skeleton map of a [0,1] volume.

    Iterative scheme: the skeleton starts as ``relu(x - open(x))``, then for
    each round the volume is eroded once and the newly exposed ridge
    ``relu(x - open(x))`` is merged in via ``skel += relu(delta - skel*delta)``.
    ``iterations`` must be at least the radius of the thickest structure for
    the map to reach its core.
    """
    if iterations < 1:
        raise ParameterError(f"soft_skel needs iterations >= 1, got {iterations}")
    x = require_probability(x)
    skel = np.maximum(x - soft_open(x), 0.0)
    for _ in range(iterations):
        x = soft_erode(x)
        delta = np.maximum(x - soft_open(x), 0.0)
        skel = skel + np.maximum(delta - skel * delta, 0.0)
    return skel


def breakage_map(g: np.ndarray, p: np.ndarray, iterations: int = DEFAULT_ITERATIONS) -> np.ndarray:
    """Per-voxel deficit of the predicted skeleton against the reference one.

    ``B = max(0, soft_skel(g) - soft_skel(p))``; positive exactly where the
    prediction fails to reproduce reference centerline strength, which is
    where tree connectivity is at risk.
    """
    g = require_probability(np.asarray(g, dtype=np.float64), "reference mask")
    p = require_probability(p, "prediction")
    require_same_shape(g, p, "reference and prediction")
    return np.maximum(soft_skel(g, iterations) - soft_skel(p, iterations), 0.0)
