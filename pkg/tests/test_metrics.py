import numpy as np
import pytest

from airwaybel.errors import EmptyInputError
from airwaybel.metrics import (
    EvaluateOptions,
    confusion,
    dbr,
    dlr,
    evaluate,
    overlap_metrics,
)
from airwaybel.morphology import boundary
from airwaybel.phantom import TreeSpec, add_leak, break_branch, generate
from airwaybel.skeleton import build_graph

from oracles import confusion_loop


@pytest.fixture(scope="module")
def depth3():
    return generate(TreeSpec(depth=3, dims=(96, 96, 96)))


def truth_opts(truth, **kw):
    return EvaluateOptions(truth_centerline=truth.centerline_mask, truth_graph=truth.graph(), **kw)


class TestConfusion:
    def test_perfect(self):
        rng = np.random.default_rng(60)
        g = (rng.random((6, 6, 6)) < 0.4).astype(np.uint8)
        c = confusion(g, g)
        assert c.fp == 0 and c.fn == 0
        assert c.tp == int(g.sum())
        assert c.total == g.size

    def test_inverted(self):
        rng = np.random.default_rng(61)
        g = (rng.random((6, 6, 6)) < 0.4).astype(np.uint8)
        c = confusion(1 - g, g)
        assert c.tp == 0 and c.tn == 0

    def test_matches_loop(self):
        rng = np.random.default_rng(62)
        for _ in range(20):
            p = (rng.random((8, 8, 8)) < 0.5).astype(np.uint8)
            g = (rng.random((8, 8, 8)) < 0.5).astype(np.uint8)
            c = confusion(p, g)
            assert (c.tp, c.fp, c.fn, c.tn) == confusion_loop(p, g)


class TestOverlapMetrics:
    def test_perfect(self):
        c = confusion(np.ones((3, 3, 3), dtype=np.uint8), np.ones((3, 3, 3), dtype=np.uint8))
        iou, precision, leakage, amr = overlap_metrics(c)
        assert (iou, precision, leakage, amr) == (1.0, 1.0, 0.0, 0.0)

    def test_arithmetic(self):
        from airwaybel.metrics import ConfusionCounts

        iou, precision, leakage, amr = overlap_metrics(ConfusionCounts(tp=9, fp=1, fn=1, tn=100))
        assert iou == pytest.approx(9 / 11)
        assert precision == pytest.approx(0.9)
        assert leakage == pytest.approx(0.1)
        assert amr == pytest.approx(0.1)


class TestDlrDbr:
    def test_dlr_bounds(self, depth3):
        cl = depth3.centerline_mask
        assert dlr(depth3.mask, cl) == 1.0
        assert dlr(np.zeros_like(cl), cl) == 0.0

    def test_dlr_empty_centerline(self):
        with pytest.raises(EmptyInputError):
            dlr(np.ones((3, 3, 3), dtype=np.uint8), np.zeros((3, 3, 3), dtype=np.uint8))

    def test_dbr_full_and_partial(self, depth3):
        g = depth3.graph()
        assert dbr(depth3.mask, g) == 1.0
        leaf = [b for b in depth3.branches if b.generation == 3][0]
        res = break_branch(depth3, leaf.id, 10_000)
        assert dbr(res.mask, g) == pytest.approx(14 / 15)

    def test_dbr_y_tree_child_erased(self):
        m = np.zeros((17, 9, 22), dtype=np.uint8)
        for z in range(13, 21):
            m[8, 4, z] = 1
        for i in range(1, 8):
            m[8 + i, 4, 13 - i] = 1
            m[8 - i, 4, 13 - i] = 1
        g = build_graph(m)
        assert len(g.branches) == 3
        p = m.copy()
        for i in range(1, 8):
            p[8 + i, 4, 13 - i] = 0
        assert dbr(p, g) == pytest.approx(2 / 3)


class TestEvaluate:
    def test_perfect_prediction(self, depth3):
        rep = evaluate(depth3.mask, depth3.mask, truth_opts(depth3, small=True))
        assert rep.iou == 1.0 and rep.precision == 1.0
        assert rep.dlr == 1.0 and rep.dbr == 1.0
        assert rep.leakage == 0.0 and rep.amr == 0.0
        assert rep.small.iou == 1.0 and rep.small.dlr == 1.0 and rep.small.dbr == 1.0

    def test_detached_blob_removed_by_lcc(self, depth3):
        p = depth3.mask.copy()
        p[2:5, 2:5, 2:5] = 1  # far from the tree
        rep_blob = evaluate(p, depth3.mask, truth_opts(depth3, lcc=True))
        rep_clean = evaluate(depth3.mask, depth3.mask, truth_opts(depth3, lcc=True))
        assert rep_blob.to_json_dict() == rep_clean.to_json_dict()

    def test_lcc_noop_for_connected_prediction(self, depth3):
        a = evaluate(depth3.mask, depth3.mask, truth_opts(depth3, lcc=True))
        b = evaluate(depth3.mask, depth3.mask, truth_opts(depth3, lcc=False))
        assert a.to_json_dict()["iou"] == b.to_json_dict()["iou"]
        assert a.dlr == b.dlr and a.dbr == b.dbr

    def test_empty_gt_raises(self):
        with pytest.raises(EmptyInputError):
            evaluate(np.ones((4, 4, 4), dtype=np.uint8), np.zeros((4, 4, 4), dtype=np.uint8))

    def test_derives_truth_from_mask_when_not_given(self, depth3):
        rep = evaluate(depth3.mask, depth3.mask, EvaluateOptions(small=False))
        assert rep.dlr == 1.0 and rep.dbr == 1.0 and rep.iou == 1.0

    def test_empty_prediction(self, depth3):
        rep = evaluate(np.zeros_like(depth3.mask), depth3.mask, truth_opts(depth3))
        assert rep.iou == 0.0 and rep.dlr == 0.0 and rep.dbr == 0.0
        assert rep.amr == 1.0 and rep.leakage == 0.0


class TestPhantomClosures:
    def test_break_dlr_exact(self, depth3):
        L = depth3.centerline_count
        res = break_branch(depth3, 12, 7)
        rep = evaluate(res.mask, depth3.mask, truth_opts(depth3, lcc=False))
        assert rep.dlr == pytest.approx(1.0 - len(res.erased_centerline) / L, abs=1e-15)

    def test_erase_leaves_dbr_dlr_exact(self, depth3):
        leaves = [b for b in depth3.branches if b.generation == 3]
        L = depth3.centerline_count
        mask = depth3.mask
        erased_total = 0
        for k, leaf in enumerate(leaves[:4], start=1):
            res = break_branch(depth3, leaf.id, 10_000, base_mask=mask)
            mask = res.mask
            erased_total += len(res.erased_centerline)
            rep = evaluate(mask, depth3.mask, truth_opts(depth3, lcc=True))
            assert rep.dbr == pytest.approx((15 - k) / 15, abs=1e-15)
            assert rep.dlr == pytest.approx(1.0 - erased_total / L, abs=1e-15)

    def test_leak_changes_leakage_exactly(self, depth3):
        surf = tuple(np.argwhere(boundary(depth3.mask))[0])
        res = add_leak(depth3, surf, 3.0)
        base = evaluate(depth3.mask, depth3.mask, truth_opts(depth3, lcc=True))
        rep = evaluate(res.mask, depth3.mask, truth_opts(depth3, lcc=True))
        gt = int(depth3.mask.sum())
        assert rep.leakage - base.leakage == pytest.approx(len(res.added) / gt, abs=1e-15)
        assert rep.dlr == 1.0 and rep.dbr == 1.0

    def test_small_panel_drops_proximal_generations(self, depth3):
        rep = evaluate(depth3.mask, depth3.mask, truth_opts(depth3, small=True, drop_generations=2))
        assert rep.small is not None
        # a degraded distal branch should move the small panel but not gen<2 coverage
        leaf = [b for b in depth3.branches if b.generation == 3][2]
        res = break_branch(depth3, leaf.id, 10_000)
        rep2 = evaluate(res.mask, depth3.mask, truth_opts(depth3, small=True, drop_generations=2))
        assert rep2.small.dbr < 1.0
        assert rep2.small.dlr < 1.0
        assert rep2.small.iou < 1.0


class TestReportSerialization:
    def test_csv_row_layout(self, depth3):
        rep = evaluate(depth3.mask, depth3.mask, truth_opts(depth3, small=True))
        row = rep.to_csv_row("case01")
        assert row.startswith("case01,")
        assert len(row.split(",")) == 10

    def test_csv_without_small_has_empty_cells(self, depth3):
        rep = evaluate(depth3.mask, depth3.mask, truth_opts(depth3, small=False))
        row = rep.to_csv_row("x")
        assert row.endswith(",,,")

    def test_json_fields(self, depth3):
        rep = evaluate(depth3.mask, depth3.mask, truth_opts(depth3, small=True))
        d = rep.to_json_dict()
        assert set(d) == {"iou", "dlr", "dbr", "precision", "leakage", "amr", "config", "small"}
