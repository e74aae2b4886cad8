"""Oracle detector, metrics, and accounting tests."""

import numpy as np
import pytest

from arena.evaluation import (AnnotationStore, CostRecord, OracleConfig,
                              bandwidth_report, head_predict, map_at_50,
                              oracle_detect, recall_at_50)
from arena.model import BBox, Detection, Frame
from arena.rng import Xorshift64Star
from arena.vit.engine import Engine, MemoryTokenPools
from arena.vit.params import EngineConfig


def store_with(boxes_by_frame):
    store = AnnotationStore()
    for fid, boxes in boxes_by_frame.items():
        for b in boxes:
            store.add(fid, b)
    return store


class TestOracleDetect:
    def test_perfect_oracle_returns_ground_truth(self):
        store = store_with({0: [BBox(0, 0, 10, 10), BBox(20, 20, 40, 45)]})
        dets = oracle_detect(0, store, OracleConfig(), Xorshift64Star(0))
        assert [d.bbox for d in dets] == [b.bbox for b in store.boxes(0)]
        assert all(d.score == 1.0 for d in dets)

    def test_absent_frame_gives_empty(self):
        store = store_with({0: [BBox(0, 0, 10, 10)]})
        assert oracle_detect(99, store, OracleConfig(), Xorshift64Star(0)) == []

    def test_high_drop_rate_drops_nearly_all(self):
        store = store_with({0: [BBox(0, 0, 10, 10)] * 50})
        cfg = OracleConfig(drop_rate=0.999, rng_seed=0)
        total = 0
        for seed in range(40):
            total += len(oracle_detect(0, store, cfg, Xorshift64Star(seed)))
        assert total <= 10  # expectation is 50*40*0.001 = 2

    def test_fixed_seed_reproducible(self):
        store = store_with({0: [BBox(0, 0, 10, 10), BBox(5, 5, 30, 30)]})
        cfg = OracleConfig(drop_rate=0.3, jitter=2.0, rng_seed=1)
        a = oracle_detect(0, store, cfg, Xorshift64Star(42))
        b = oracle_detect(0, store, cfg, Xorshift64Star(42))
        assert a == b

    def test_jitter_bounded_and_boxes_valid(self):
        store = store_with({0: [BBox(10, 10, 20, 20)]})
        cfg = OracleConfig(jitter=3.0)
        for seed in range(50):
            for d in oracle_detect(0, store, cfg, Xorshift64Star(seed)):
                assert d.bbox.x1 <= d.bbox.x2 and d.bbox.y1 <= d.bbox.y2
                assert abs(d.bbox.x1 - 10) <= 3 or abs(d.bbox.x1 - 20) <= 3


class TestMapAt50:
    def test_exact_detections_give_one(self):
        store = store_with({0: [BBox(0, 0, 10, 10)], 1: [BBox(5, 5, 25, 25)]})
        dets = {fid: [Detection(g.bbox, 1.0, g.class_id)
                      for g in store.boxes(fid)]
                for fid in store.frame_ids()}
        assert map_at_50(dets, store) == 1.0
        assert recall_at_50(dets, store) == 1.0

    def test_no_detections_give_zero(self):
        store = store_with({0: [BBox(0, 0, 10, 10)]})
        assert map_at_50({}, store) == 0.0
        assert recall_at_50({}, store) == 0.0

    def test_no_ground_truth_defined_zero(self):
        assert map_at_50({0: [Detection(BBox(0, 0, 1, 1), 0.5, 0)]},
                         AnnotationStore()) == 0.0

    def test_hand_computed_two_gt_one_tp_one_fp(self):
        # PR curve: TP at score .9 -> precision 1, recall 0.5; FP at .8 ->
        # precision 0.5, recall 0.5. All-points AP = 0.5 * 1.0 = 0.5.
        store = store_with({0: [BBox(0, 0, 10, 10), BBox(50, 50, 60, 60)]})
        dets = {0: [Detection(BBox(0, 0, 10, 10), 0.9, 0),
                    Detection(BBox(80, 80, 90, 90), 0.8, 0)]}
        assert map_at_50(dets, store) == pytest.approx(0.5)

    def test_invariant_under_monotone_score_rescale(self):
        store = store_with({0: [BBox(0, 0, 10, 10), BBox(30, 0, 44, 14)],
                            1: [BBox(2, 2, 12, 12)]})
        dets = {0: [Detection(BBox(1, 0, 10, 10), 0.9, 0),
                    Detection(BBox(70, 70, 80, 80), 0.6, 0)],
                1: [Detection(BBox(2, 2, 12, 12), 0.4, 0)]}
        base = map_at_50(dets, store)
        rescaled = {fid: [Detection(d.bbox, d.score ** 3, d.class_id)
                          for d in ds] for fid, ds in dets.items()}
        assert map_at_50(rescaled, store) == pytest.approx(base)

    def test_low_score_false_positive_never_increases_ap(self):
        store = store_with({0: [BBox(0, 0, 10, 10)]})
        dets = {0: [Detection(BBox(0, 0, 10, 10), 0.9, 0)]}
        base = map_at_50(dets, store)
        with_fp = {0: dets[0] + [Detection(BBox(90, 90, 99, 99), 0.1, 0)]}
        assert map_at_50(with_fp, store) <= base

    def test_true_positive_never_decreases_ap(self):
        store = store_with({0: [BBox(0, 0, 10, 10), BBox(50, 50, 60, 60)]})
        dets = {0: [Detection(BBox(0, 0, 10, 10), 0.9, 0)]}
        base = map_at_50(dets, store)
        more = {0: dets[0] + [Detection(BBox(50, 50, 60, 60), 0.45, 0)]}
        assert map_at_50(more, store) >= base

    def test_multi_class_mean(self):
        store = AnnotationStore()
        store.add(0, BBox(0, 0, 10, 10), class_id=1)
        store.add(0, BBox(30, 30, 40, 40), class_id=2)
        dets = {0: [Detection(BBox(0, 0, 10, 10), 0.9, 1)]}  # class 2 missed
        assert map_at_50(dets, store) == pytest.approx(0.5)

    def test_iou_below_half_is_false_positive(self):
        store = store_with({0: [BBox(0, 0, 10, 10)]})
        dets = {0: [Detection(BBox(6, 0, 16, 10), 0.9, 0)]}  # IoU = 4/16
        assert map_at_50(dets, store) == 0.0


class TestHeadPredict:
    def test_shape_range_and_sensitivity(self):
        cfg = EngineConfig(frame_w=32, frame_h=32, embed_dim=8, depth=1,
                           heads=2, weight_seed=9)
        engine = Engine(cfg)
        rng = np.random.default_rng(0)
        arr = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
        pyr = engine.keyframe_infer(Frame(0, 32, 32, 3, arr),
                                    MemoryTokenPools())
        grid = head_predict(pyr, engine)
        assert grid.shape == (2, 2)
        assert ((grid > 0) & (grid < 1)).all()

        changed = arr.copy()
        changed[0:16, 0:16] ^= 0x55  # flip pixels of patch 0
        pyr2 = engine.keyframe_infer(Frame(1, 32, 32, 3, changed),
                                     MemoryTokenPools())
        assert (head_predict(pyr2, engine) != grid).any()


class TestBandwidthReport:
    def rec(self, fid, phase, nbytes, patches):
        return CostRecord(fid, phase, nbytes, patches)

    def test_totals_and_ratio(self):
        full = 12288
        records = [self.rec(0, "keyframe", full + 23, 16),
                   self.rec(1, "non-keyframe", 3110, 4)]
        rep = bandwidth_report(records, full)
        assert rep["total_bytes"] == full + 23 + 3110
        assert rep["normalized"] == pytest.approx((full + 23 + 3110) / (2 * full))
        assert rep["keyframe"]["count"] == 1
        assert rep["non_keyframe"]["payload_ratio"] == pytest.approx(3110 / full)

    def test_additive_over_concatenation(self):
        full = 1000
        a = [self.rec(0, "keyframe", 1010, 4)]
        b = [self.rec(1, "non-keyframe", 260, 1)]
        whole = bandwidth_report(a + b, full)
        assert whole["total_bytes"] == (bandwidth_report(a, full)["total_bytes"]
                                        + bandwidth_report(b, full)["total_bytes"])

    def test_empty_records_rejected(self):
        with pytest.raises(ValueError):
            bandwidth_report([], 100)


class TestCostRecord:
    def test_phase_validated(self):
        with pytest.raises(ValueError):
            CostRecord(0, "bogus", 10, 1)

    def test_negative_bytes_rejected(self):
        with pytest.raises(ValueError):
            CostRecord(0, "keyframe", -1, 1)
