import json
import math

import numpy as np
import pytest

from rotdet import (
    AnnotationFormatError,
    AnnotationSet,
    CorruptionConfig,
    Detection,
    PredictionSet,
    RotatedBox,
    SynthConfig,
    generate_scene,
    load_annotations,
    load_predictions,
    radius_aligned_angle,
    save_annotations,
    save_predictions,
)
from rotdet.dataio import VideoAnnotations, deg_to_rad, rad_to_deg
from rotdet.codec import ConfigError

from util import random_canonical_box


GOOD_ANNOTATIONS = {
    "format": "rotdet-annotations",
    "version": 1,
    "angle_unit": "deg",
    "videos": [
        {
            "name": "lab",
            "image_size": [512, 512],
            "frames": [
                {
                    "frame": "000000",
                    "people": [
                        {"id": 1, "cx": 100.0, "cy": 120.0, "w": 30.0, "h": 70.0, "angle": 12.0}
                    ],
                }
            ],
        }
    ],
}


class TestAngleConversion:
    def test_round_trip_precision(self):
        rng = np.random.default_rng(0)
        for theta in rng.uniform(-math.pi / 2, math.pi / 2, size=1000):
            assert deg_to_rad(rad_to_deg(theta)) == pytest.approx(theta, abs=1e-12)

    def test_known_value(self):
        assert rad_to_deg(math.pi / 2) == 90.0
        assert deg_to_rad(-90.0) == -math.pi / 2


class TestLoadAnnotations:
    def test_well_formed(self, tmp_path):
        path = tmp_path / "ann.json"
        path.write_text(json.dumps(GOOD_ANNOTATIONS))
        got = load_annotations(path)
        assert list(got.videos) == ["lab"]
        video = got.videos["lab"]
        assert video.image_size == (512, 512)
        ((pid, box),) = video.frames["000000"]
        assert pid == 1
        assert box.is_canonical()
        assert box.theta == pytest.approx(math.radians(12.0))

    def test_wide_box_canonicalized(self, tmp_path):
        doc = json.loads(json.dumps(GOOD_ANNOTATIONS))
        doc["videos"][0]["frames"][0]["people"][0].update({"w": 70.0, "h": 30.0})
        path = tmp_path / "ann.json"
        path.write_text(json.dumps(doc))
        ((_, box),) = load_annotations(path).videos["lab"].frames["000000"]
        assert box.w < box.h
        assert box.is_canonical()

    def test_truncated_file_names_byte_offset(self, tmp_path):
        path = tmp_path / "ann.json"
        text = json.dumps(GOOD_ANNOTATIONS)
        path.write_text(text[: len(text) // 2])
        with pytest.raises(AnnotationFormatError, match="byte"):
            load_annotations(path)

    def test_malformed_record_names_location(self, tmp_path):
        doc = json.loads(json.dumps(GOOD_ANNOTATIONS))
        del doc["videos"][0]["frames"][0]["people"][0]["cy"]
        path = tmp_path / "ann.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(AnnotationFormatError, match="record 0"):
            load_annotations(path)

    def test_non_positive_side_rejected(self, tmp_path):
        doc = json.loads(json.dumps(GOOD_ANNOTATIONS))
        doc["videos"][0]["frames"][0]["people"][0]["w"] = -3.0
        path = tmp_path / "ann.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(AnnotationFormatError, match="invalid box"):
            load_annotations(path)

    def test_wrong_format_field(self, tmp_path):
        doc = json.loads(json.dumps(GOOD_ANNOTATIONS))
        doc["format"] = "something-else"
        path = tmp_path / "ann.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(AnnotationFormatError, match="format"):
            load_annotations(path)

    def test_duplicate_frame_key_rejected(self, tmp_path):
        doc = json.loads(json.dumps(GOOD_ANNOTATIONS))
        doc["videos"][0]["frames"].append(doc["videos"][0]["frames"][0])
        path = tmp_path / "ann.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(AnnotationFormatError, match="duplicate frame"):
            load_annotations(path)


class TestRoundTrips:
    def test_annotations_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        frames = {
            f"{k:06d}": tuple(
                (pid + 1, random_canonical_box(rng)) for pid in range(3)
            )
            for k in range(4)
        }
        original = AnnotationSet({"a": VideoAnnotations((256, 256), frames)})
        path = tmp_path / "ann.json"
        save_annotations(original, path)
        loaded = load_annotations(path)
        for key, people in original.videos["a"].frames.items():
            got = loaded.videos["a"].frames[key]
            for (pid_a, box_a), (pid_b, box_b) in zip(people, got):
                assert pid_a == pid_b
                assert box_b.as_tuple() == pytest.approx(box_a.as_tuple(), abs=1e-9)

    def test_predictions_round_trip_values(self, tmp_path):
        rng = np.random.default_rng(5)
        dets = tuple(
            Detection(
                RotatedBox(*rng.uniform(10, 200, size=2), *np.sort(rng.uniform(5, 40, size=2)),
                           rng.uniform(-math.pi / 2, math.pi / 2)),
                float(rng.uniform(0, 1)),
            )
            for _ in range(1000)
        )
        original = PredictionSet({"v": {"000000": dets}})
        path = tmp_path / "pred.json"
        save_predictions(original, path)
        loaded = load_predictions(path)
        for a, b in zip(dets, loaded.videos["v"]["000000"]):
            assert b.conf == a.conf
            assert b.box.as_tuple() == pytest.approx(a.box.as_tuple(), abs=1e-9)

    def test_save_load_save_is_byte_identical(self, tmp_path):
        rng = np.random.default_rng(7)
        dets = tuple(
            Detection(random_canonical_box(rng), float(rng.uniform(0, 1))) for _ in range(50)
        )
        original = PredictionSet({"v": {"000000": dets}})
        first = tmp_path / "a.json"
        second = tmp_path / "b.json"
        save_predictions(original, first)
        save_predictions(load_predictions(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_empty_detection_list_valid(self, tmp_path):
        path = tmp_path / "pred.json"
        save_predictions(PredictionSet({"v": {"000000": ()}}), path)
        loaded = load_predictions(path)
        assert loaded.videos["v"]["000000"] == ()


class TestGenerator:
    def test_deterministic_files(self, tmp_path):
        cfg = SynthConfig(seed=0, frames=5)
        a, _ = generate_scene(cfg)
        b, _ = generate_scene(cfg)
        pa, pb = tmp_path / "a.json", tmp_path / "b.json"
        save_annotations(a, pa)
        save_annotations(b, pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_different_seeds_differ(self):
        a, _ = generate_scene(SynthConfig(seed=0, frames=3))
        b, _ = generate_scene(SynthConfig(seed=1, frames=3))
        assert save_to_text(a) != save_to_text(b)

    def test_all_boxes_canonical_and_inside(self):
        annotations, _ = generate_scene(SynthConfig(seed=2, frames=8))
        video = annotations.videos["synthetic"]
        for people in video.frames.values():
            for _, box in people:
                assert box.is_canonical()
                assert 0 < box.cx < video.image_size[0]
                assert 0 < box.cy < video.image_size[1]

    def test_zero_pose_noise_is_radius_aligned(self):
        cfg = SynthConfig(seed=3, frames=5, pose_noise=0.0)
        annotations, _ = generate_scene(cfg)
        center = (cfg.image_size / 2, cfg.image_size / 2)
        for people in annotations.videos["synthetic"].frames.values():
            for _, box in people:
                expected = radius_aligned_angle(box.cx, box.cy, center)
                assert box.theta == pytest.approx(expected, abs=1e-9)

    def test_ids_stable_across_frames(self):
        annotations, _ = generate_scene(SynthConfig(seed=4, frames=6, people=(3, 3)))
        ids = set()
        for people in annotations.videos["synthetic"].frames.values():
            ids.update(pid for pid, _ in people)
        assert ids <= {1, 2, 3}

    def test_corruption_produces_detections(self):
        cfg = SynthConfig(seed=5, frames=4, corruption=CorruptionConfig())
        _, preds = generate_scene(cfg)
        assert preds is not None
        dets = [d for ds in preds.videos["synthetic"].values() for d in ds]
        assert dets
        assert all(0.0 <= d.conf <= 1.0 for d in dets)

    def test_drop_rate_concentration(self):
        corr = CorruptionConfig(drop_rate=0.5, spurious_rate=0.0)
        kept = total = 0
        # ~10^4 boxes across seeds; binomial std of the kept fraction ~ 0.005
        for seed in range(40):
            cfg = SynthConfig(seed=seed, frames=60, people=(4, 6), presence=1.0, corruption=corr)
            annotations, preds = generate_scene(cfg)
            total += sum(len(p) for p in annotations.videos["synthetic"].frames.values())
            kept += sum(len(d) for d in preds.videos["synthetic"].values())
        assert total > 8000
        assert kept / total == pytest.approx(0.5, abs=0.02)

    def test_invalid_config_rejected(self):
        with pytest.raises(ConfigError):
            SynthConfig(image_size=0)
        with pytest.raises(ConfigError):
            SynthConfig(people=(3, 2))
        with pytest.raises(ConfigError):
            SynthConfig(frames=0)

    def test_config_from_file(self, tmp_path):
        path = tmp_path / "synth.cfg"
        path.write_text(
            "seed = 9\nframes = 7\npeople = 2, 4\nimage_size = 128\n"
            "pose_noise = 0.05\naspect_range = 2.5, 3.5\nheight_range = 30, 60\ncorrupt = yes\n"
        )
        cfg = SynthConfig.from_file(path)
        assert cfg.seed == 9
        assert cfg.frames == 7
        assert cfg.people == (2, 4)
        assert cfg.image_size == 128
        assert cfg.corruption is not None


def save_to_text(annotations) -> str:
    import io
    import tempfile
    import os

    fd, name = tempfile.mkstemp()
    os.close(fd)
    try:
        save_annotations(annotations, name)
        with open(name) as fh:
            return fh.read()
    finally:
        os.unlink(name)
