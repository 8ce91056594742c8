"""Segmentation quality panel: overlap metrics plus tree-topology metrics
(detected length rate and detected branch rate), with an optional
small-airway restriction.

Conventions:

* the centerline and branch graph always derive from the ground truth,
  never from the prediction;
* ``evaluate`` can first reduce the prediction to its largest connected
  component, mirroring how challenge leaderboards score submissions;
* the small-airway variant restricts BOTH volumes to the region whose
  nearest branch has generation >= ``drop_generations`` (0 = trachea,
  1 = main bronchi) before recomputing IoU/DLR/DBR.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInputError, ParameterError
from .skeleton import SkeletonGraph, build_graph, small_airway_mask, thin
from .volume import largest_component, require_mask, require_same_shape

CSV_HEADER = "case,iou,dlr,dbr,precision,leakage,amr,iou_s,dlr_s,dbr_s"


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class EvaluateOptions:
    lcc: bool = True
    small: bool = False
    branch_threshold: float = 0.8
    connectivity: int = 26
    drop_generations: int = 2
    root_at_max_z: bool = True
    lung_mask: np.ndarray | None = None
    # phantom-style exact ground truth; when absent both derive from the mask
    truth_centerline: np.ndarray | None = None
    truth_graph: SkeletonGraph | None = None


@dataclass
class SmallAirwayReport:
    iou: float
    dlr: float
    dbr: float


@dataclass
class MetricsReport:
    iou: float
    dlr: float
    dbr: float
    precision: float
    leakage: float
    amr: float
    small: SmallAirwayReport | None = None
    config: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        d = {
            "iou": self.iou,
            "dlr": self.dlr,
            "dbr": self.dbr,
            "precision": self.precision,
            "leakage": self.leakage,
            "amr": self.amr,
            "config": self.config,
        }
        if self.small is not None:
            d["small"] = {"iou_s": self.small.iou, "dlr_s": self.small.dlr, "dbr_s": self.small.dbr}
        return d

    def to_csv_row(self, case: str) -> str:
        cells = [case] + [
            f"{v:.6f}" for v in (self.iou, self.dlr, self.dbr, self.precision, self.leakage, self.amr)
        ]
        if self.small is not None:
            cells += [f"{v:.6f}" for v in (self.small.iou, self.small.dlr, self.small.dbr)]
        else:
            cells += ["", "", ""]
        return ",".join(cells)


def confusion(p: np.ndarray, g: np.ndarray) -> ConfusionCounts:
    p = require_mask(p, "prediction")
    g = require_mask(g, "ground truth")
    require_same_shape(p, g)
    pb = p != 0
    gb = g != 0
    tp = int(np.count_nonzero(pb & gb))
    fp = int(np.count_nonzero(pb & ~gb))
    fn = int(np.count_nonzero(~pb & gb))
    tn = p.size - tp - fp - fn
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def overlap_metrics(c: ConfusionCounts) -> tuple[float, float, float, float]:
    """(iou, precision, leakage, amr); zero denominators yield 0."""
    iou = c.tp / (c.tp + c.fp + c.fn) if c.tp + c.fp + c.fn else 0.0
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    gt = c.tp + c.fn
    leakage = c.fp / gt if gt else 0.0
    amr = c.fn / gt if gt else 0.0
    return iou, precision, leakage, amr


def dlr(p: np.ndarray, g_centerline: np.ndarray) -> float:
    """Fraction of ground-truth centerline voxels covered by the prediction."""
    p = require_mask(p, "prediction")
    cl = require_mask(g_centerline, "centerline")
    require_same_shape(p, cl)
    total = int(cl.sum())
    if total == 0:
        raise EmptyInputError("dlr: centerline is empty")
    covered = int(np.count_nonzero((cl != 0) & (p != 0)))
    return covered / total


def branch_coverage(p: np.ndarray, branch_voxels) -> float:
    n = len(branch_voxels)
    if n == 0:
        return 0.0
    hit = sum(1 for v in branch_voxels if p[v] != 0)
    return hit / n


def dbr(p: np.ndarray, g_graph: SkeletonGraph, threshold: float = 0.8) -> float:
    """Fraction of branches whose centerline coverage reaches ``threshold``."""
    p = require_mask(p, "prediction")
    if not g_graph.branches:
        raise EmptyInputError("dbr: graph has no branches")
    if not 0.0 < threshold <= 1.0:
        raise ParameterError(f"branch threshold must be in (0,1], got {threshold}")
    detected = sum(1 for b in g_graph.branches if branch_coverage(p, b.voxels) >= threshold)
    return detected / len(g_graph.branches)


def evaluate(p: np.ndarray, g: np.ndarray, opts: EvaluateOptions = EvaluateOptions()) -> MetricsReport:
    """Full metric panel between a prediction mask and a ground-truth mask."""
    p = require_mask(p, "prediction")
    g = require_mask(g, "ground truth")
    require_same_shape(p, g)
    if g.sum() == 0:
        raise EmptyInputError("evaluate: ground truth is empty")

    if opts.lcc and p.sum() > 0:
        p = largest_component(p, opts.connectivity)

    centerline = opts.truth_centerline
    graph = opts.truth_graph
    if centerline is None:
        centerline = thin(g)
    if graph is None:
        graph = build_graph(centerline, root_at_max_z=opts.root_at_max_z)

    c = confusion(p, g)
    iou, precision, leakage, amr = overlap_metrics(c)
    report = MetricsReport(
        iou=iou,
        dlr=dlr(p, centerline),
        dbr=dbr(p, graph, opts.branch_threshold),
        precision=precision,
        leakage=leakage,
        amr=amr,
        config={
            "lcc": opts.lcc,
            "small": opts.small,
            "branch_threshold": opts.branch_threshold,
            "connectivity": opts.connectivity,
            "drop_generations": opts.drop_generations,
        },
    )
    if not opts.small:
        return report

    region = small_airway_mask(g, graph, opts.drop_generations)
    if opts.lung_mask is not None:
        lung = require_mask(opts.lung_mask, "lung mask")
        require_same_shape(g, lung)
        region = (region & lung).astype(np.uint8)
    p_s = (p & region).astype(np.uint8)
    g_s = (g & region).astype(np.uint8)
    iou_s = overlap_metrics(confusion(p_s, g_s))[0]

    small_branches = [b for b in graph.branches if b.generation >= opts.drop_generations]
    cl_small = np.zeros(g.shape, dtype=np.uint8)
    for b in small_branches:
        for v in b.voxels:
            if region[v]:
                cl_small[v] = 1
    dlr_s = dlr(p_s, cl_small) if cl_small.sum() else 0.0

    covs = []
    for b in small_branches:
        vox = [v for v in b.voxels if region[v]]
        if vox:
            covs.append(branch_coverage(p_s, vox))
    dbr_s = (
        sum(1 for cv in covs if cv >= opts.branch_threshold) / len(covs) if covs else 0.0
    )
    report.small = SmallAirwayReport(iou=iou_s, dlr=dlr_s, dbr=dbr_s)
    return report
