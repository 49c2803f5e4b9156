import numpy as np
import pytest

from rotdet import Detection, NmsConfig, RotatedBox, confidence_filter, iou, nms

from util import random_box


def det(cx, cy, w, h, theta, conf):
    return Detection(RotatedBox(cx, cy, w, h, theta), conf)


class TestDetection:
    def test_confidence_validated(self):
        with pytest.raises(ValueError):
            det(0, 0, 2, 4, 0, 1.5)
        with pytest.raises(ValueError):
            det(0, 0, 2, 4, 0, -0.1)

    def test_non_canonical_box_allowed(self):
        d = det(0, 0, 4, 2, 0, 0.5)
        assert d.box.w == 4


class TestConfidenceFilter:
    def test_zero_threshold_keeps_all(self):
        dets = [det(0, 0, 2, 4, 0, c) for c in (0.1, 0.5, 0.9)]
        assert confidence_filter(dets, 0.0) == dets

    def test_impossible_threshold_empties(self):
        dets = [det(0, 0, 2, 4, 0, c) for c in (0.1, 0.5, 0.9)]
        assert confidence_filter(dets, 1.0) == []

    def test_boundary_inclusive(self):
        dets = [det(0, 0, 2, 4, 0, c) for c in (0.9, 0.29, 0.31)]
        kept = confidence_filter(dets, 0.3)
        assert [d.conf for d in kept] == [0.9, 0.31]


class TestNms:
    def test_duplicate_suppressed(self):
        a = det(5, 5, 2, 4, 0.2, 0.9)
        b = det(5, 5, 2, 4, 0.2, 0.8)
        assert nms([b, a], NmsConfig(conf_threshold=0.0)) == [a]

    def test_disjoint_kept(self):
        a = det(5, 5, 2, 4, 0, 0.9)
        b = det(50, 50, 2, 4, 0, 0.8)
        assert nms([b, a], NmsConfig(conf_threshold=0.0)) == [a, b]

    def test_greedy_is_not_cascaded(self):
        # A suppresses B; C survives on its low IoU with A even though
        # IoU(B, C) exceeds the threshold
        a = det(0.0, 0.0, 4.0, 5.0, 0.0, 0.9)
        b = det(1.25, 0.0, 6.0, 5.0, 0.0, 0.8)
        c = det(3.25, 0.0, 6.0, 5.0, 0.0, 0.7)
        assert iou(a.box, b.box) == pytest.approx(0.6, abs=1e-12)
        assert iou(b.box, c.box) == pytest.approx(0.5, abs=1e-12)
        assert iou(a.box, c.box) == pytest.approx(8.75 / 41.25, abs=1e-12)
        kept = nms([a, b, c], NmsConfig(conf_threshold=0.0, iou_threshold=0.45))
        assert kept == [a, c]

    def test_confidence_threshold_applied(self):
        a = det(5, 5, 2, 4, 0, 0.9)
        b = det(50, 50, 2, 4, 0, 0.1)
        assert nms([a, b], NmsConfig(conf_threshold=0.3)) == [a]

    def test_equal_confidence_tie_break_deterministic(self):
        a = det(5, 5, 2, 4, 0, 0.8)
        b = det(5, 9, 2, 4, 0, 0.8)
        kept_one = nms([a, b], NmsConfig(conf_threshold=0.0, iou_threshold=0.45))
        kept_two = nms([b, a], NmsConfig(conf_threshold=0.0, iou_threshold=0.45))
        assert kept_one == kept_two

    def _random_frame(self, rng, n):
        return [
            Detection(random_box(rng, span=25.0), float(rng.uniform(0.05, 1.0)))
            for _ in range(n)
        ]

    def test_invariants_on_random_frames(self):
        rng = np.random.default_rng(29)
        cfg = NmsConfig(conf_threshold=0.2, iou_threshold=0.45)
        for _ in range(60):
            frame = self._random_frame(rng, int(rng.integers(0, 18)))
            kept = nms(frame, cfg)
            assert all(k in frame for k in kept)
            assert all(k.conf >= cfg.conf_threshold for k in kept)
            confs = [k.conf for k in kept]
            assert confs == sorted(confs, reverse=True)
            for i in range(len(kept)):
                for j in range(i + 1, len(kept)):
                    assert iou(kept[i].box, kept[j].box) <= cfg.iou_threshold + 1e-12
            assert nms(kept, cfg) == kept

    def test_confidence_order_equivariance(self):
        rng = np.random.default_rng(31)
        cfg = NmsConfig(conf_threshold=0.0, iou_threshold=0.45)
        for _ in range(20):
            frame = self._random_frame(rng, 12)
            kept = nms(frame, cfg)
            squashed = [Detection(d.box, d.conf**2) for d in frame]
            kept_squashed = nms(squashed, cfg)
            assert [d.box for d in kept_squashed] == [d.box for d in kept]
