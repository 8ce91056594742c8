"""Discrete topology-preserving thinning and the skeleton graph.

Thinning is sequential directional peeling: six sub-iterations per pass
(one per face direction), deleting only simple points (26-connected
object / 6-connected background) that are not curve endpoints. Each
deletion re-tests simplicity against the current mask, so connectivity,
tunnels and cavities are preserved by construction, and the fixed
direction + raster order makes the result deterministic.

The graph layer decomposes a centerline into junction/endpoint nodes and
maximal junction-free branch paths, labels generations by breadth-first
traversal from the most superior endpoint, and assigns every mask voxel
to its nearest branch for the small-airway restriction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import EmptyInputError, ParameterError
from .morphology import CUBE26, edt, nearest_site_labels, structuring_offsets
from .volume import DEFAULT_SPACING, Spacing, require_mask, require_same_shape

_NEIGH26 = structuring_offsets(CUBE26)
_FACE_IDX = [i for i, d in enumerate(_NEIGH26) if abs(d[0]) + abs(d[1]) + abs(d[2]) == 1]
_EDGE18_IDX = [i for i, d in enumerate(_NEIGH26) if abs(d[0]) + abs(d[1]) + abs(d[2]) <= 2]

# 26-adjacency between neighborhood cells (Chebyshev distance 1)
_ADJ26 = [
    [
        j
        for j, e in enumerate(_NEIGH26)
        if j != i and max(abs(e[0] - d[0]), abs(e[1] - d[1]), abs(e[2] - d[2])) == 1
    ]
    for i, d in enumerate(_NEIGH26)
]
# 6-adjacency restricted to the 18-neighborhood
_ADJ6_18 = [
    [
        j
        for j in _EDGE18_IDX
        if j != i
        and abs(_NEIGH26[j][0] - _NEIGH26[i][0])
        + abs(_NEIGH26[j][1] - _NEIGH26[i][1])
        + abs(_NEIGH26[j][2] - _NEIGH26[i][2])
        == 1
    ]
    for i in range(len(_NEIGH26))
]

# deletion sweep order: superior/inferior first, then the in-plane faces
_DIRECTIONS = [(0, 0, 1), (0, 0, -1), (0, 1, 0), (0, -1, 0), (1, 0, 0), (-1, 0, 0)]

_simple_cache: dict[int, bool] = {}


def _is_simple(code: int) -> bool:
    """Simple-point test on a 26-bit neighborhood occupancy pattern.

    The center is deletable iff its foreground neighbors form exactly one
    26-component and the background of its 18-neighborhood forms exactly
    one 6-component touching a face neighbor.
    """
    cached = _simple_cache.get(code)
    if cached is not None:
        return cached

    fg = [i for i in range(26) if code >> i & 1]
    ok = False
    if fg:
        seen = set()
        comps = 0
        for i in fg:
            if i in seen:
                continue
            comps += 1
            if comps > 1:
                break
            stack = [i]
            seen.add(i)
            while stack:
                c = stack.pop()
                for j in _ADJ26[c]:
                    if code >> j & 1 and j not in seen:
                        seen.add(j)
                        stack.append(j)
        if comps == 1:
            bg18 = [i for i in _EDGE18_IDX if not code >> i & 1]
            face_bg = [i for i in _FACE_IDX if not code >> i & 1]
            if face_bg:
                seen_b = set()
                comps_b = 0
                for i in bg18:
                    if i in seen_b:
                        continue
                    stack = [i]
                    seen_b.add(i)
                    members = {i}
                    while stack:
                        c = stack.pop()
                        for j in _ADJ6_18[c]:
                            if not code >> j & 1 and j not in seen_b:
                                seen_b.add(j)
                                members.add(j)
                                stack.append(j)
                    if any(m in members for m in face_bg):
                        comps_b += 1
                ok = comps_b == 1

    _simple_cache[code] = ok
    return ok


def thin(m: np.ndarray, prune_spurs: int = 3) -> np.ndarray:
    """Peel a mask down to a unit-wide centerline without changing topology.

    ``prune_spurs`` removes endpoint chains of at most that many voxels that
    terminate at a junction — the short barbs the endpoint-preservation rule
    leaves behind on thick tubes. Every pruned voxel is a degree-1 simple
    point at deletion time, so components and tunnels are still preserved;
    set it to 0 to keep raw peeling output.
    """
    m = require_mask(m)
    pad = np.pad(m, 1).astype(np.uint8)
    dims = m.shape

    # alternate peeling and spur pruning until neither changes anything;
    # both only delete voxels, so the loop terminates
    while True:
        changed = True
        while changed:
            changed = False
            for dx, dy, dz in _DIRECTIONS:
                inner = pad[1:-1, 1:-1, 1:-1]
                border_bg = (
                    pad[1 + dx : 1 + dx + dims[0], 1 + dy : 1 + dy + dims[1], 1 + dz : 1 + dz + dims[2]]
                    == 0
                )
                candidates = np.argwhere((inner == 1) & border_bg)
                for cx, cy, cz in candidates + 1:
                    if not pad[cx, cy, cz]:
                        continue
                    code = 0
                    count = 0
                    for i, (ox, oy, oz) in enumerate(_NEIGH26):
                        if pad[cx + ox, cy + oy, cz + oz]:
                            code |= 1 << i
                            count += 1
                    if count == 1:  # curve endpoint, keep
                        continue
                    if _is_simple(code):
                        pad[cx, cy, cz] = 0
                        changed = True
        if prune_spurs <= 0 or _prune_spurs(pad, prune_spurs) == 0:
            break
    return pad[1:-1, 1:-1, 1:-1]


def _prune_spurs(pad: np.ndarray, max_len: int) -> int:
    """Delete endpoint chains of <= max_len voxels whose base is a junction.

    Returns the number of voxels removed."""

    def fg_neighbors(v):
        return [
            (v[0] + o[0], v[1] + o[1], v[2] + o[2])
            for o in _NEIGH26
            if pad[v[0] + o[0], v[1] + o[1], v[2] + o[2]]
        ]

    endpoints = sorted(
        tuple(v)
        for v in np.argwhere(pad == 1)
        if len(fg_neighbors(tuple(v))) == 1
    )
    removed = 0
    for ep in endpoints:
        if not pad[ep]:
            continue
        chain = [ep]
        prev = None
        cur = ep
        reached_junction = False
        while len(chain) <= max_len:
            nbrs = [n for n in fg_neighbors(cur) if n != prev]
            if len(nbrs) != 1:
                reached_junction = len(nbrs) > 1
                break
            nxt = nbrs[0]
            if len(fg_neighbors(nxt)) > 2:
                reached_junction = True
                break
            prev, cur = cur, nxt
            chain.append(cur)
        if reached_junction and len(chain) <= max_len:
            for v in chain:
                pad[v] = 0
            removed += len(chain)
    return removed


@dataclass
class Branch:
    id: int
    parent: int | None
    generation: int
    voxels: list[tuple[int, int, int]]
    length_mm: float


@dataclass
class SkeletonGraph:
    branches: list[Branch]
    nodes: list[tuple[int, int, int]]
    root: tuple[int, int, int]
    dims: tuple[int, int, int]
    generation_by_id: dict[int, int] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "root": list(self.root),
            "branches": [
                {
                    "id": b.id,
                    "parent": b.parent,
                    "generation": b.generation,
                    "voxels": [list(v) for v in b.voxels],
                    "length_mm": b.length_mm,
                }
                for b in self.branches
            ],
        }


def _path_length_mm(path: list[tuple[int, int, int]], spacing: Spacing) -> float:
    total = 0.0
    for a, b in zip(path, path[1:]):
        total += (
            ((b[0] - a[0]) * spacing[0]) ** 2
            + ((b[1] - a[1]) * spacing[1]) ** 2
            + ((b[2] - a[2]) * spacing[2]) ** 2
        ) ** 0.5
    return total


def _order_path(piece: set[tuple[int, int, int]]) -> list[tuple[int, int, int]]:
    """Order a degree<=2 voxel set into a walkable path (cycles start at the
    lexicographically smallest voxel)."""
    if len(piece) == 1:
        return list(piece)
    nbrs = {
        v: sorted(
            (v[0] + o[0], v[1] + o[1], v[2] + o[2])
            for o in _NEIGH26
            if (v[0] + o[0], v[1] + o[1], v[2] + o[2]) in piece
        )
        for v in piece
    }
    ends = sorted(v for v, ns in nbrs.items() if len(ns) <= 1)
    start = ends[0] if ends else min(piece)
    path = [start]
    seen = {start}
    cur = start
    while True:
        nxt = [n for n in nbrs[cur] if n not in seen]
        if not nxt:
            break
        cur = nxt[0]
        path.append(cur)
        seen.add(cur)
    return path


def build_graph(
    centerline: np.ndarray,
    spacing: Spacing = DEFAULT_SPACING,
    root_at_max_z: bool = True,
) -> SkeletonGraph:
    """Decompose a centerline mask into nodes and generation-labelled branches.

    Junctions are voxels with >= 3 skeleton 26-neighbors, endpoints have
    exactly one; maximal junction-free runs between them are branches. The
    root is the endpoint with maximal z (ties: lexicographically smallest
    voxel), its branch gets generation 0 and children increment by one.
    ``root_at_max_z=False`` flips the axis convention for feet-first
    orientations. Additional connected components are traversed the same
    way from their own most-superior endpoints; ids stay unique across
    components.
    """
    centerline = require_mask(centerline, "centerline")
    coords = [(int(v[0]), int(v[1]), int(v[2])) for v in np.argwhere(centerline)]
    if not coords:
        raise EmptyInputError("build_graph: centerline is empty")
    vox = set(coords)

    degree = {}
    for v in coords:
        degree[v] = sum(
            (v[0] + o[0], v[1] + o[1], v[2] + o[2]) in vox for o in _NEIGH26
        )
    node_set = {v for v in coords if degree[v] >= 3 or degree[v] == 1}

    # connected components of the full centerline (26-adjacency)
    comp_labels, n_comp = ndimage.label(centerline, structure=np.ones((3, 3, 3)))

    # components made entirely of nodes (isolated voxels, 2-voxel bars)
    # become single branches instead
    comp_has_path = {c: False for c in range(1, n_comp + 1)}
    for v in coords:
        if v not in node_set:
            comp_has_path[comp_labels[v]] = True
    for v in list(node_set):
        if not comp_has_path[comp_labels[v]]:
            node_set.discard(v)

    path_voxels = [v for v in coords if v not in node_set]

    # pieces: 26-components of the non-node voxels
    piece_of: dict[tuple[int, int, int], int] = {}
    pieces: list[set[tuple[int, int, int]]] = []
    path_set = set(path_voxels)
    for v in path_voxels:
        if v in piece_of:
            continue
        idx = len(pieces)
        members = {v}
        piece_of[v] = idx
        stack = [v]
        while stack:
            c = stack.pop()
            for o in _NEIGH26:
                n = (c[0] + o[0], c[1] + o[1], c[2] + o[2])
                if n in path_set and n not in piece_of:
                    piece_of[n] = idx
                    members.add(n)
                    stack.append(n)
        pieces.append(members)

    # node groups: clusters of mutually adjacent node voxels act as one junction
    group_of: dict[tuple[int, int, int], int] = {}
    groups: list[set[tuple[int, int, int]]] = []
    for v in sorted(node_set):
        if v in group_of:
            continue
        idx = len(groups)
        members = {v}
        group_of[v] = idx
        stack = [v]
        while stack:
            c = stack.pop()
            for o in _NEIGH26:
                n = (c[0] + o[0], c[1] + o[1], c[2] + o[2])
                if n in node_set and n not in group_of:
                    group_of[n] = idx
                    members.add(n)
                    stack.append(n)
        groups.append(members)

    group_pieces: dict[int, set[int]] = {i: set() for i in range(len(groups))}
    piece_groups: dict[int, set[int]] = {i: set() for i in range(len(pieces))}
    for gi, members in enumerate(groups):
        for v in members:
            for o in _NEIGH26:
                n = (v[0] + o[0], v[1] + o[1], v[2] + o[2])
                if n in piece_of:
                    pi = piece_of[n]
                    group_pieces[gi].add(pi)
                    piece_groups[pi].add(gi)

    def superior_key(v):
        return (-v[2] if root_at_max_z else v[2], v[0], v[1])

    def piece_key(pi):
        return min(superior_key(v) for v in pieces[pi])

    # per component: pick the root voxel (max z endpoint if any)
    comp_pieces: dict[int, list[int]] = {}
    for pi, members in enumerate(pieces):
        comp_pieces.setdefault(int(comp_labels[next(iter(members))]), []).append(pi)

    comp_roots = []
    for comp, pis in comp_pieces.items():
        comp_nodes = [v for v in node_set if comp_labels[v] == comp]
        endpoints = [v for v in comp_nodes if degree[v] == 1]
        if endpoints:
            root_voxel = min(endpoints, key=superior_key)
            root_piece = min(group_pieces[group_of[root_voxel]], key=piece_key)
        else:
            all_vox = [v for pi in pis for v in pieces[pi]] + comp_nodes
            root_voxel = min(all_vox, key=superior_key)
            if comp_nodes:
                gi = group_of.get(root_voxel)
                root_piece = (
                    min(group_pieces[gi], key=piece_key) if gi is not None else piece_of[root_voxel]
                )
            else:
                root_piece = piece_of[root_voxel]
        comp_roots.append((superior_key(root_voxel), root_voxel, root_piece))
    comp_roots.sort()

    branches: list[Branch] = []
    generation_by_id: dict[int, int] = {}
    visited_pieces: set[int] = set()
    next_id = 1
    for _, root_voxel, root_piece in comp_roots:
        if root_piece in visited_pieces:
            continue
        queue = [(root_piece, None, 0)]
        visited_pieces.add(root_piece)
        while queue:
            pi, parent_id, gen = queue.pop(0)
            path = _order_path(pieces[pi])
            bid = next_id
            next_id += 1
            branches.append(
                Branch(
                    id=bid,
                    parent=parent_id,
                    generation=gen,
                    voxels=path,
                    length_mm=_path_length_mm(path, spacing),
                )
            )
            generation_by_id[bid] = gen
            for gi in sorted(piece_groups[pi]):
                for child in sorted(group_pieces[gi], key=piece_key):
                    if child not in visited_pieces:
                        visited_pieces.add(child)
                        queue.append((child, bid, gen + 1))

    root = comp_roots[0][1]
    return SkeletonGraph(
        branches=branches,
        nodes=sorted(node_set),
        root=root,
        dims=centerline.shape,
        generation_by_id=generation_by_id,
    )


def branch_label_volume(m: np.ndarray, graph: SkeletonGraph) -> np.ndarray:
    """Assign each foreground voxel the id of its nearest branch.

    Sites are the branch path voxels; exact-distance ties go to the smaller
    branch id. Background stays 0.
    """
    m = require_mask(m)
    if not graph.branches:
        raise EmptyInputError("branch_label_volume: graph has no branches")
    sites = np.zeros(m.shape, dtype=np.int32)
    for b in sorted(graph.branches, key=lambda b: -b.id):
        for v in b.voxels:
            sites[v] = b.id
    from .morphology import joint_bbox

    box = joint_bbox(m, sites != 0)
    labels = np.zeros(m.shape, dtype=np.int32)
    if box is not None:
        sub_labels, _ = nearest_site_labels(sites[box])
        labels[box] = sub_labels
    return np.where(m != 0, labels, 0).astype(np.int32)


def small_airway_mask(m: np.ndarray, graph: SkeletonGraph, drop_generations: int = 2) -> np.ndarray:
    """Strip the proximal tree: keep voxels whose nearest branch has
    generation >= ``drop_generations`` (default 2 removes the trachea and
    the main bronchi; 0 is the identity)."""
    if drop_generations < 0:
        raise ParameterError(f"drop_generations must be >= 0, got {drop_generations}")
    m = require_mask(m)
    if drop_generations == 0:
        return m.copy()
    labels = branch_label_volume(m, graph)
    gen = np.zeros(max(graph.generation_by_id) + 1, dtype=np.int32)
    for bid, g in graph.generation_by_id.items():
        gen[bid] = g
    keep = (m != 0) & (gen[labels] >= drop_generations)
    return keep.astype(np.uint8)


def centerline_distance(m: np.ndarray, spacing: Spacing | None = None) -> np.ndarray:
    """Distance from each foreground voxel to the thinned centerline of the mask."""
    m = require_mask(m)
    if m.sum() == 0:
        raise EmptyInputError("centerline_distance: mask is empty")
    cl = thin(m)
    return edt(cl, domain=m, spacing=spacing)
