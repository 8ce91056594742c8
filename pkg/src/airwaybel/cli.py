"""Command-line interface.

Exit codes: 0 success, 2 parameter error, 3 input format error,
4 degenerate input. All JSON output is emitted with sorted keys so
identical inputs give byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DegenerateInputError, EmptyInputError, FormatError, ParameterError
from .losses import (
    PRESETS,
    LossParams,
    bel_grad,
    bel_loss,
    dice_loss,
    gul_loss,
    is_degenerate,
    tversky_loss,
    weight_map,
)
from .metrics import CSV_HEADER, EvaluateOptions, evaluate
from .nifti import read_mask, read_nifti, read_probability, write_nifti
from .phantom import TreeSpec, add_leak, break_branch, generate
from .skeleton import build_graph, thin
from .softskel import DEFAULT_ITERATIONS, breakage_map
from .volume import Volume3, sliding_windows


def _dump_json(obj, path=None) -> str:
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def _loss_params(args) -> LossParams:
    # precedence: explicit flags > preset > defaults
    base = PRESETS[args.preset] if getattr(args, "preset", None) else LossParams.default()
    alpha = args.alpha if args.alpha is not None else base.alpha
    return LossParams.default(
        alpha=alpha,
        r=args.r if args.r is not None else base.r,
        gamma=args.gamma if args.gamma is not None else base.gamma,
        theta=args.theta if args.theta is not None else base.theta,
        mode=getattr(args, "mode", None) or base.mode,
    )


def _maybe_breakage(args, g: np.ndarray) -> np.ndarray | None:
    if getattr(args, "breakage_map", None):
        return read_probability(args.breakage_map).data
    if getattr(args, "pred", None) and getattr(args, "breakage_iters", None):
        p = read_probability(args.pred)
        return breakage_map(g, p.data, args.breakage_iters)
    return None


def cmd_weights(args) -> int:
    gt = read_mask(args.gt)
    params = _loss_params(args)
    B = _maybe_breakage(args, gt.data)
    w = weight_map(gt.data, params, B=B)
    write_nifti(Volume3(w, gt.spacing), args.out, datatype=args.dtype)
    return 0


def cmd_loss(args) -> int:
    gt = read_mask(args.gt)
    pred = read_probability(args.pred)
    params = _loss_params(args)
    p, g = pred.data, gt.data

    if args.weights and args.loss != "bel":
        raise ParameterError("--weights applies to the bel loss only")

    w = None
    if args.loss == "dice":
        if args.grad:
            raise ParameterError("--grad is only available for bel, tversky and gul")
        value = dice_loss(p, g)
    elif args.loss == "tversky":
        value = tversky_loss(p, g, params.alpha, params.beta)
        params = LossParams.default(alpha=params.alpha, r=1.0, gamma=params.gamma, mode="uniform")
    elif args.loss == "gul":
        params = LossParams.default(alpha=params.alpha, r=params.r, gamma=params.gamma,
                                    theta=params.theta, mode="centerline")
        w = weight_map(g, params)
        value = bel_loss(p, g, w, params)
    else:  # bel
        if args.weights:
            w = read_nifti(args.weights)[0].data.astype(np.float64)
        else:
            B = _maybe_breakage(args, g)
            w = weight_map(g, params, B=B)
        value = bel_loss(p, g, w, params)

    if args.grad:
        grad = bel_grad(p, g, w, params)
        write_nifti(Volume3(grad, gt.spacing), args.grad, datatype=args.dtype)

    degenerate = is_degenerate(p, g)
    out = {"loss": value}
    if degenerate:
        out["degenerate"] = True
    sys.stdout.write(_dump_json(out))
    return 4 if degenerate else 0


def cmd_metrics(args) -> int:
    pred = read_mask(args.pred)
    gt = read_mask(args.gt)
    lung = read_mask(args.lung).data if args.lung else None
    opts = EvaluateOptions(
        lcc=args.lcc,
        small=args.small,
        branch_threshold=args.branch_threshold,
        drop_generations=args.drop_generations,
        root_at_max_z=not args.root_at_min_z,
        lung_mask=lung,
    )
    report = evaluate(pred.data, gt.data, opts)
    case = args.case or Path(args.pred).name.split(".")[0]
    out = Path(args.out)
    if out.suffix == ".csv":
        out.write_text(CSV_HEADER + "\n" + report.to_csv_row(case) + "\n")
    else:
        payload = report.to_json_dict()
        payload["case"] = case
        _dump_json(payload, out)
    return 0


def cmd_skeleton(args) -> int:
    vol = read_mask(args.input)
    cl = thin(vol.data)
    write_nifti(Volume3(cl, vol.spacing), args.out, datatype="uint8")
    if args.graph:
        graph = build_graph(cl, spacing=vol.spacing, root_at_max_z=not args.root_at_min_z)
        _dump_json(graph.to_json_dict(), args.graph)
    return 0


def cmd_breakage(args) -> int:
    gt = read_mask(args.gt)
    pred = read_probability(args.pred)
    B = breakage_map(gt.data, pred.data, args.iters)
    write_nifti(Volume3(B, gt.spacing), args.out, datatype=args.dtype)
    return 0


def _parse_break(text: str) -> tuple[int, int]:
    try:
        bid, gap = text.split(":")
        return int(bid), int(gap)
    except ValueError:
        raise ParameterError(f"--break expects id:gap, got {text!r}") from None


def _parse_leak(text: str) -> tuple[tuple[int, int, int], float]:
    try:
        loc, r = text.split(":")
        x, y, z = (int(c) for c in loc.split(","))
        return (x, y, z), float(r)
    except ValueError:
        raise ParameterError(f"--leak expects x,y,z:radius, got {text!r}") from None


def cmd_phantom(args) -> int:
    spec_values = json.loads(Path(args.spec).read_text()) if args.spec else {}
    if "dims" in spec_values:
        spec_values["dims"] = tuple(spec_values["dims"])
    try:
        spec = TreeSpec(**spec_values)
    except TypeError as e:
        raise ParameterError(f"bad phantom spec: {e}") from None
    truth = generate(spec)

    mask = truth.mask
    degradations = []
    for item in args.break_branch or []:
        bid, gap = _parse_break(item)
        res = break_branch(truth, bid, gap, base_mask=mask)
        mask = res.mask
        degradations.append(
            {
                "type": "break",
                "branch_id": bid,
                "gap_voxels": gap,
                "removed_voxels": len(res.removed),
                "erased_centerline": [list(map(int, v)) for v in res.erased_centerline],
            }
        )
    for item in args.leak or []:
        loc, radius = _parse_leak(item)
        res = add_leak(truth, loc, radius, base_mask=mask)
        mask = res.mask
        degradations.append(
            {
                "type": "leak",
                "location": list(loc),
                "radius": radius,
                "added_voxels": len(res.added),
            }
        )

    write_nifti(Volume3(mask, (1.0, 1.0, 1.0)), args.out, datatype="uint8")
    if args.truth:
        payload = truth.to_truth_json()
        if degradations:
            payload["degradations"] = degradations
        _dump_json(payload, args.truth)
    return 0


def cmd_patches(args) -> int:
    vol, _ = read_nifti(args.input)
    grid = sliding_windows(vol.dims, (args.size, args.size, args.size), args.overlap)
    payload = {
        "patch_size": list(grid.patch_size),
        "overlap": grid.overlap_fraction,
        "origins": [list(o) for o in grid.origins],
    }
    sys.stdout.write(_dump_json(payload))
    return 0


def _add_loss_flags(sp, with_mode=True):
    sp.add_argument("--preset", choices=sorted(PRESETS), help="named parameter preset")
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--r", type=float, default=None)
    sp.add_argument("--gamma", type=float, default=None)
    sp.add_argument("--theta", type=float, default=None)
    if with_mode:
        sp.add_argument("--mode", choices=["boundary", "centerline", "uniform"], default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="airwaybel",
        description="Boundary-emphasized loss maps and airway-tree metrics on NIfTI volumes",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("weights", help="write the per-voxel loss weight map")
    sp.add_argument("--gt", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--pred", help="prediction volume for the breakage term")
    sp.add_argument("--breakage-iters", type=int, default=None)
    sp.add_argument("--breakage-map", help="precomputed breakage volume (overrides --pred)")
    sp.add_argument("--dtype", choices=["float32", "float64"], default="float32")
    _add_loss_flags(sp)
    sp.set_defaults(func=cmd_weights)

    sp = sub.add_parser("loss", help="evaluate a loss value (JSON on stdout)")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--loss", choices=["dice", "tversky", "gul", "bel"], default="bel")
    sp.add_argument("--grad", help="write the analytic gradient volume here")
    sp.add_argument("--weights", help="precomputed weight map (bel only)")
    sp.add_argument("--breakage-iters", type=int, default=None)
    sp.add_argument("--breakage-map", help="precomputed breakage volume (overrides --pred)")
    sp.add_argument("--dtype", choices=["float32", "float64"], default="float32")
    _add_loss_flags(sp)
    sp.set_defaults(func=cmd_loss)

    sp = sub.add_parser("metrics", help="overlap and topology metric panel")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--out", required=True, help="report path (.json or .csv)")
    sp.add_argument("--case", default=None)
    sp.add_argument("--lcc", action="store_true", help="score the largest component only")
    sp.add_argument("--small", action="store_true", help="add the small-airway panel")
    sp.add_argument("--branch-threshold", type=float, default=0.8)
    sp.add_argument("--drop-generations", type=int, default=2)
    sp.add_argument("--root-at-min-z", action="store_true",
                    help="tree enters at the inferior face instead of the superior one")
    sp.add_argument("--lung", help="optional lung mask restricting the small-airway region")
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("skeleton", help="thin a mask to its centerline")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--graph", help="also write the branch graph JSON here")
    sp.add_argument("--root-at-min-z", action="store_true",
                    help="tree enters at the inferior face instead of the superior one")
    sp.set_defaults(func=cmd_skeleton)

    sp = sub.add_parser("breakage", help="write the soft-skeleton breakage map")
    sp.add_argument("--gt", required=True)
    sp.add_argument("--pred", required=True)
    sp.add_argument("--iters", type=int, default=DEFAULT_ITERATIONS)
    sp.add_argument("--out", required=True)
    sp.add_argument("--dtype", choices=["float32", "float64"], default="float32")
    sp.set_defaults(func=cmd_breakage)

    sp = sub.add_parser("phantom", help="generate a synthetic tree with exact truth")
    sp.add_argument("--spec", help="JSON file with tree parameters")
    sp.add_argument("--out", required=True)
    sp.add_argument("--truth", help="write truth graph + bookkeeping JSON here")
    sp.add_argument("--break", dest="break_branch", action="append", metavar="ID:GAP")
    sp.add_argument("--leak", action="append", metavar="X,Y,Z:R")
    sp.set_defaults(func=cmd_phantom)

    sp = sub.add_parser("patches", help="sliding-window origins for a volume")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--size", type=int, required=True)
    sp.add_argument("--overlap", type=float, default=0.25)
    sp.add_argument("--list", action="store_true", help="print the window origins")
    sp.set_defaults(func=cmd_patches)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParameterError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (FormatError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (EmptyInputError, DegenerateInputError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
