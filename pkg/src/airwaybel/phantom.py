"""Deterministic synthetic tree phantoms with exact ground truth.

A phantom is a full binary tree of straight tubes descending from the top
(+z) face. Axis endpoints are snapped to voxel centers, tubes are
rasterized by exact point-to-segment distance, and the per-branch
centerline is a 26-connected integer walk between the endpoints — so voxel
counts, branch membership, and every degradation are reproducible
integers. Degradation operators (breaking a branch, adding a leak blob)
report exactly which voxels they touched, which is what makes closed-form
metric values checkable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .skeleton import Branch, SkeletonGraph
from .volume import Spacing, DEFAULT_SPACING

_MIN_RADIUS = 1.0


@dataclass(frozen=True)
class TreeSpec:
    depth: int = 3
    root_radius: float = 4.0
    radius_decay: float = 0.72
    branch_length: float = 22.0
    length_decay: float = 0.8
    branching_angle: float = 35.0
    dims: tuple[int, int, int] = (96, 96, 96)
    seed: int = 0

    def __post_init__(self):
        if self.depth < 0:
            raise ParameterError(f"depth must be >= 0, got {self.depth}")
        if self.root_radius < _MIN_RADIUS:
            raise ParameterError(f"root_radius must be >= {_MIN_RADIUS}, got {self.root_radius}")
        if not 0.0 < self.radius_decay <= 1.0:
            raise ParameterError(f"radius_decay must be in (0,1], got {self.radius_decay}")
        if not 0.0 < self.length_decay <= 1.0:
            raise ParameterError(f"length_decay must be in (0,1], got {self.length_decay}")
        if self.branch_length < 2.0:
            raise ParameterError(f"branch_length must be >= 2, got {self.branch_length}")
        if not 0.0 < self.branching_angle < 90.0:
            raise ParameterError(f"branching_angle must be in (0,90) degrees, got {self.branching_angle}")


@dataclass
class PhantomBranch:
    id: int
    parent: int | None
    generation: int
    start: tuple[int, int, int]
    end: tuple[int, int, int]
    radius: float
    path: list[tuple[int, int, int]]
    tube: np.ndarray  # (n,3) voxel coordinates of this branch's rasterized tube


@dataclass
class PhantomTruth:
    spec: TreeSpec
    mask: np.ndarray
    branches: list[PhantomBranch]
    centerline_mask: np.ndarray = field(repr=False, default=None)

    @property
    def centerline_count(self) -> int:
        return int(self.centerline_mask.sum())

    def graph(self, spacing: Spacing = DEFAULT_SPACING) -> SkeletonGraph:
        """The truth tree in skeleton-graph form (paths include junction voxels)."""
        from .skeleton import _path_length_mm

        branches = [
            Branch(
                id=b.id,
                parent=b.parent,
                generation=b.generation,
                voxels=list(b.path),
                length_mm=_path_length_mm(list(b.path), spacing),
            )
            for b in self.branches
        ]
        return SkeletonGraph(
            branches=branches,
            nodes=[],
            root=self.branches[0].start,
            dims=self.mask.shape,
            generation_by_id={b.id: b.generation for b in self.branches},
        )

    def to_truth_json(self) -> dict:
        d = self.graph().to_json_dict()
        d["centerline_voxel_count"] = self.centerline_count
        d["mask_voxel_count"] = int(self.mask.sum())
        d["branch_count"] = len(self.branches)
        return d


@dataclass
class BreakResult:
    mask: np.ndarray
    removed: np.ndarray  # (n,3) voxels flipped to background
    erased_centerline: np.ndarray  # (m,3) centerline voxels among them
    branch_id: int
    gap_voxels: int


@dataclass
class LeakResult:
    mask: np.ndarray
    added: np.ndarray  # (n,3) new false-positive voxels
    location: tuple[int, int, int]
    radius: float


def _walk26(a: np.ndarray, b: np.ndarray) -> list[tuple[int, int, int]]:
    """26-connected integer walk from a to b (inclusive)."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    n = int(np.abs(b - a).max())
    if n == 0:
        return [(int(a[0]), int(a[1]), int(a[2]))]
    pts = np.rint(a[None, :] + (b - a)[None, :] * (np.arange(n + 1)[:, None] / n)).astype(np.int64)
    path = [(int(pts[0][0]), int(pts[0][1]), int(pts[0][2]))]
    for p in pts[1:]:
        t = (int(p[0]), int(p[1]), int(p[2]))
        if t != path[-1]:
            path.append(t)
    return path


def _segment_tube_voxels(start, end, radius, dims) -> np.ndarray:
    """Voxels within ``radius`` of the segment start-end (exact distances)."""
    s = np.asarray(start, dtype=np.float64)
    e = np.asarray(end, dtype=np.float64)
    lo = np.maximum(np.floor(np.minimum(s, e) - radius - 1), 0).astype(int)
    hi = np.minimum(np.ceil(np.maximum(s, e) + radius + 1), np.asarray(dims) - 1).astype(int)
    xs, ys, zs = [np.arange(lo[i], hi[i] + 1) for i in range(3)]
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    pts = np.stack([gx, gy, gz], axis=-1).reshape(-1, 3).astype(np.float64)
    seg = e - s
    seg_len2 = float(seg @ seg)
    if seg_len2 == 0.0:
        d2 = ((pts - s) ** 2).sum(axis=1)
    else:
        t = np.clip((pts - s) @ seg / seg_len2, 0.0, 1.0)
        proj = s + t[:, None] * seg
        d2 = ((pts - proj) ** 2).sum(axis=1)
    return pts[d2 <= radius * radius + 1e-9].astype(np.int64)


def _orthonormal_frame(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ref = np.array([1.0, 0.0, 0.0]) if abs(d[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(d, ref)
    u /= np.linalg.norm(u)
    v = np.cross(d, u)
    return u, v


def generate(spec: TreeSpec) -> PhantomTruth:
    """Build the phantom; bit-deterministic for a given spec (seed included)."""
    rng = np.random.default_rng(spec.seed)
    dims = spec.dims
    nx, ny, nz = dims

    margin = spec.root_radius + 1.0
    start = np.array([nx // 2, ny // 2, nz - 1 - int(round(margin))], dtype=np.float64)
    direction = np.array([0.0, 0.0, -1.0])

    # grow the axis tree breadth-first
    records = []  # (id, parent, generation, start_int, end_int, ideal_dir, radius)
    queue = [(None, 0, start, direction)]
    next_id = 1
    while queue:
        parent_id, gen, s_real, d = queue.pop(0)
        length = spec.branch_length * spec.length_decay**gen
        radius = max(_MIN_RADIUS, spec.root_radius * spec.radius_decay**gen)
        e_real = s_real + length * d
        s_int = np.rint(s_real).astype(np.int64)
        e_int = np.rint(e_real).astype(np.int64)
        bid = next_id
        next_id += 1
        records.append((bid, parent_id, gen, s_int, e_int, d, radius))
        if gen < spec.depth:
            u, v = _orthonormal_frame(d)
            az = np.deg2rad(90.0 * gen + rng.uniform(-15.0, 15.0))
            m = np.cos(az) * u + np.sin(az) * v
            ang = np.deg2rad(spec.branching_angle)
            for sign in (1.0, -1.0):
                child = np.cos(ang) * d + sign * np.sin(ang) * m
                child /= np.linalg.norm(child)
                queue.append((bid, gen + 1, e_int.astype(np.float64), child))

    # bounds check before rasterizing anything
    for bid, _, _, s_int, e_int, _, radius in records:
        for p in (s_int, e_int):
            lo_ok = (p - radius >= -0.5).all()
            hi_ok = (p + radius <= np.asarray(dims) - 0.5).all()
            if not (lo_ok and hi_ok):
                raise ParameterError(
                    f"phantom branch {bid} leaves the volume: endpoint {tuple(int(c) for c in p)} "
                    f"with radius {radius:.2f} exceeds dims {dims}"
                )

    mask = np.zeros(dims, dtype=np.uint8)
    centerline = np.zeros(dims, dtype=np.uint8)
    branches: list[PhantomBranch] = []
    for bid, parent_id, gen, s_int, e_int, _, radius in records:
        tube = _segment_tube_voxels(s_int, e_int, radius, dims)
        mask[tube[:, 0], tube[:, 1], tube[:, 2]] = 1
        path = _walk26(s_int, e_int)
        for vxl in path:
            centerline[vxl] = 1
        branches.append(
            PhantomBranch(
                id=bid,
                parent=parent_id,
                generation=gen,
                start=tuple(int(c) for c in s_int),
                end=tuple(int(c) for c in e_int),
                radius=radius,
                path=path,
                tube=tube,
            )
        )
    return PhantomTruth(spec=spec, mask=mask, branches=branches, centerline_mask=centerline)


def _other_tubes_mask(truth: PhantomTruth, branch_id: int) -> np.ndarray:
    other = np.zeros(truth.mask.shape, dtype=bool)
    for b in truth.branches:
        if b.id != branch_id:
            other[b.tube[:, 0], b.tube[:, 1], b.tube[:, 2]] = True
    return other


def break_branch(
    truth: PhantomTruth, branch_id: int, gap_voxels: int, base_mask: np.ndarray | None = None
) -> BreakResult:
    """Erase a gap-long slab of one branch's tube around its midpoint.

    Voxels shared with any other branch's tube are spared, so the rest of
    the tree is untouched and the removal bookkeeping is exact. A gap at
    least as long as the branch erases its whole (exclusive) tube.
    Degradations compose via ``base_mask``.
    """
    by_id = {b.id: b for b in truth.branches}
    if branch_id not in by_id:
        raise ParameterError(f"no branch with id {branch_id}")
    if gap_voxels < 0:
        raise ParameterError(f"gap_voxels must be >= 0, got {gap_voxels}")
    base = truth.mask if base_mask is None else base_mask
    b = by_id[branch_id]
    empty = np.zeros((0, 3), dtype=np.int64)
    if gap_voxels == 0:
        return BreakResult(base.copy(), empty, empty, branch_id, 0)

    n = len(b.path)
    if gap_voxels >= n:
        seg_a, seg_b = b.start, b.end
    else:
        mid = n // 2
        lo = max(0, mid - gap_voxels // 2)
        hi = min(n - 1, lo + gap_voxels - 1)
        seg_a, seg_b = b.path[lo], b.path[hi]

    slab = _segment_tube_voxels(seg_a, seg_b, b.radius, truth.mask.shape)
    keep_out = _other_tubes_mask(truth, branch_id)
    in_slab = np.zeros(truth.mask.shape, dtype=bool)
    in_slab[slab[:, 0], slab[:, 1], slab[:, 2]] = True
    removed_sel = in_slab & (base != 0) & ~keep_out

    degraded = base.copy()
    degraded[removed_sel] = 0
    removed = np.argwhere(removed_sel).astype(np.int64)
    erased_cl = np.argwhere(removed_sel & (truth.centerline_mask != 0)).astype(np.int64)
    return BreakResult(degraded, removed, erased_cl, branch_id, gap_voxels)


def add_leak(truth: PhantomTruth, location: tuple[int, int, int], radius: float,
             base_mask: np.ndarray | None = None) -> LeakResult:
    """Union a sphere of false-positive voxels at ``location`` into the mask.

    ``radius <= 0`` is the identity. Degradations compose: pass the mask
    from a previous operation as ``base_mask``.
    """
    base = truth.mask if base_mask is None else base_mask
    empty = np.zeros((0, 3), dtype=np.int64)
    if radius <= 0.0:
        return LeakResult(base.copy(), empty, tuple(location), radius)
    loc = np.asarray(location, dtype=np.float64)
    if (loc < 0).any() or (loc > np.asarray(base.shape) - 1).any():
        raise ParameterError(f"leak location {location} outside volume {base.shape}")
    sphere = _segment_tube_voxels(loc, loc, radius, base.shape)
    sel = np.zeros(base.shape, dtype=bool)
    sel[sphere[:, 0], sphere[:, 1], sphere[:, 2]] = True
    added_sel = sel & (base == 0)
    out = base.copy()
    out[added_sel] = 1
    added = np.argwhere(added_sel).astype(np.int64)
    return LeakResult(out, added, tuple(location), radius)
