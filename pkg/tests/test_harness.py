"""Harness tests: file formats, annotations, synthesis, and replay."""

import json

import numpy as np
import pytest

from arena.akis import AkisConfig
from arena.evaluation import OracleConfig
from arena.harness import (ReplayOptions, SynthObject, SynthSpec, load_frames,
                           open_sequence, parse_mot_annotations, parse_pnm,
                           replay, synth_sequence, write_pnm, write_report,
                           write_synth)
from arena.pps import PpsConfig
from arena.vit.params import EngineConfig

SMALL_ENGINE = EngineConfig(frame_w=64, frame_h=64, embed_dim=16, depth=2,
                            heads=2, weight_seed=3)


def small_configs(p=1.0, k=2, drop=0.0, jitter=0.0, seed=5):
    return (PpsConfig(sampling_rate=p, margin=1, rng_seed=seed),
            AkisConfig(k_lower=k, k_upper=k),
            OracleConfig(drop, jitter, rng_seed=seed))


class TestPnm:
    def test_p5_round_trip(self, tmp_path):
        data = b"P5\n2 2\n255\n\x00\x40\x80\xFF"
        w, h, c, px = parse_pnm(data)
        assert (w, h, c) == (2, 2, 1)
        assert px.tolist() == [0, 0x40, 0x80, 0xFF]

    def test_p6_with_comments(self):
        data = b"P6\n# a comment\n2 1\n# another\n255\n" + bytes(6)
        w, h, c, px = parse_pnm(data)
        assert (w, h, c) == (2, 1, 3)
        assert len(px) == 6

    def test_p7_rejected(self):
        with pytest.raises(ValueError, match="magic"):
            parse_pnm(b"P7\n2 2\n255\n" + bytes(4))

    def test_wrong_maxval_rejected(self):
        with pytest.raises(ValueError, match="maxval"):
            parse_pnm(b"P5\n2 2\n65535\n" + bytes(8))

    def test_short_raster_rejected(self):
        with pytest.raises(ValueError, match="raster"):
            parse_pnm(b"P5\n2 2\n255\n\x00")

    def test_write_then_read(self, tmp_path):
        path = tmp_path / "f.ppm"
        rng = np.random.default_rng(1)
        pixels = rng.integers(0, 256, size=(4, 6, 3), dtype=np.uint8)
        write_pnm(path, 6, 4, 3, pixels)
        w, h, c, px = parse_pnm(path.read_bytes())
        assert (w, h, c) == (6, 4, 3)
        assert (px.reshape(4, 6, 3) == pixels).all()


class TestMotParsing:
    def test_field_mapping(self):
        store = parse_mot_annotations("1,1,912,484,97,109,1,1,1\n")
        boxes = store.boxes(1)
        assert len(boxes) == 1
        b = boxes[0].bbox
        assert (b.x1, b.y1, b.x2, b.y2) == (912, 484, 1009, 593)

    def test_conf_zero_excluded(self):
        store = parse_mot_annotations("1,1,912,484,97,109,0,1,1\n")
        assert store.boxes(1) == []

    def test_malformed_line_names_line_number(self):
        with pytest.raises(ValueError, match="line 2"):
            parse_mot_annotations("1,1,1,1,5,5,1,1,1\n1,1,bad,1,5,5,1,1,1\n")

    def test_empty_text_empty_store(self):
        assert len(parse_mot_annotations("")) == 0

    def test_grouping_by_frame(self):
        text = "1,1,0,0,5,5,1,1,1\n2,1,1,1,5,5,1,1,1\n1,2,8,8,4,4,1,1,1\n"
        store = parse_mot_annotations(text)
        assert len(store.boxes(1)) == 2
        assert len(store.boxes(2)) == 1


class TestSynth:
    def test_moving_object_gt_advances(self):
        spec = SynthSpec(width=64, height=64, frames=10, objects=(
            SynthObject(4, 10, 16, 16, vx=2.0),))
        frames, store = synth_sequence(spec)
        assert len(frames) == 10
        xs = [store.boxes(fid)[0].bbox.x1 for fid in range(1, 11)]
        assert xs == [4 + 2 * t for t in range(10)]

    def test_zero_velocity_static_frames(self):
        spec = SynthSpec(frames=3, objects=(SynthObject(8, 8, 16, 16),))
        frames, _ = synth_sequence(spec)
        assert (frames[0].pixels == frames[1].pixels).all()
        assert (frames[1].pixels == frames[2].pixels).all()

    def test_same_seed_identical_bytes(self):
        spec = SynthSpec(frames=4, objects=(SynthObject(0, 0, 16, 16, 1, 1),),
                         texture_seed=9)
        f1, _ = synth_sequence(spec)
        f2, _ = synth_sequence(spec)
        for a, b in zip(f1, f2):
            assert a.to_bytes() == b.to_bytes()

    def test_oversized_object_rejected(self):
        with pytest.raises(ValueError):
            synth_sequence(SynthSpec(width=32, height=32, frames=1,
                                     objects=(SynthObject(0, 0, 64, 16),)))

    def test_write_synth_loads_back(self, tmp_path):
        spec = SynthSpec(frames=3, objects=(SynthObject(8, 8, 16, 16),))
        source = write_synth(spec, tmp_path / "seq")
        assert source.annotation_path is not None
        frames = list(load_frames(source))
        assert [f.frame_id for f in frames] == [1, 2, 3]
        originals, _ = synth_sequence(spec)
        assert frames[0].to_bytes() == originals[0].to_bytes()

    def test_unpadded_numeric_names_sort_numerically(self, tmp_path):
        for stem in ("2", "10", "1"):
            write_pnm(tmp_path / f"{stem}.pgm", 4, 4, 1,
                      np.zeros((4, 4), np.uint8))
        source = open_sequence(tmp_path)
        ids = [f.frame_id for f in load_frames(source)]
        assert ids == [1, 2, 10]

    def test_dimension_drift_detected(self, tmp_path):
        write_pnm(tmp_path / "000001.pgm", 4, 4, 1, np.zeros((4, 4), np.uint8))
        write_pnm(tmp_path / "000002.pgm", 8, 8, 1, np.zeros((8, 8), np.uint8))
        source = open_sequence(tmp_path)
        with pytest.raises(ValueError, match="drift"):
            list(load_frames(source))


class TestReplay:
    def static_scene(self, frames=6):
        spec = SynthSpec(width=64, height=64, frames=frames, objects=(
            SynthObject(16, 16, 16, 16),), texture_seed=4)
        return synth_sequence(spec)

    def test_static_scene_perfect_accuracy(self):
        frames, store = self.static_scene()
        pps, akis, oracle = small_configs(p=1.0, k=3)
        report = replay(frames, store, SMALL_ENGINE, pps, akis, oracle)
        assert not report["incomplete"]
        assert report["accuracy"]["map50"] == 1.0
        assert report["accuracy"]["recall"] == 1.0

    def test_all_keyframes_bandwidth_is_one_plus_overhead(self):
        frames, store = self.static_scene()
        pps, akis, oracle = small_configs(p=1.0, k=1)
        report = replay(frames, store, SMALL_ENGINE, pps, akis, oracle)
        ratio = report["bandwidth"]["normalized"]
        assert 1.0 < ratio < 1.02
        assert all(r["phase"] == "keyframe" for r in report["frames"])

    def test_loopback_deterministic_byte_identical(self, tmp_path):
        frames, store = self.static_scene()
        pps, akis, oracle = small_configs(p=0.9, k=3, jitter=1.0)
        r1 = replay(frames, store, SMALL_ENGINE, pps, akis, oracle)
        r2 = replay(frames, store, SMALL_ENGINE, pps, akis, oracle)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        write_report(r1, p1)
        write_report(r2, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_socket_mode_matches_loopback_semantics(self):
        frames, store = self.static_scene(frames=5)
        pps, akis, oracle = small_configs(p=0.9, k=2, jitter=0.5)
        loop = replay(frames, store, SMALL_ENGINE, pps, akis, oracle)
        sock = replay(frames, store, SMALL_ENGINE, pps, akis, oracle,
                      options=ReplayOptions(mode="socket"))
        assert not sock["incomplete"]
        assert sock["accuracy"] == loop["accuracy"]
        assert ([r["bytes_sent"] for r in sock["frames"]]
                == [r["bytes_sent"] for r in loop["frames"]])
        assert ([r["patches_sent"] for r in sock["frames"]]
                == [r["patches_sent"] for r in loop["frames"]])

    def test_akis_disabled_equals_pinned_bounds(self):
        frames, store = self.static_scene()
        pps, akis, oracle = small_configs(p=1.0, k=2)
        pinned = replay(frames, store, SMALL_ENGINE, pps, akis, oracle)
        disabled = replay(frames, store, SMALL_ENGINE, pps, akis, oracle,
                          options=ReplayOptions(akis_enabled=False))
        for key in ("frames", "bandwidth", "accuracy", "akis_trace",
                    "poi_cdf", "latency_us"):
            assert pinned[key] == disabled[key]

    def test_poi_cdf_monotone_ending_at_one(self):
        frames, store = self.static_scene(frames=8)
        pps, akis, oracle = small_configs(p=0.9, k=2)
        report = replay(frames, store, SMALL_ENGINE, pps, akis, oracle)
        cdf = report["poi_cdf"]
        assert cdf, "non-keyframes must produce CDF points"
        fractions = [pt[1] for pt in cdf]
        assert fractions == sorted(fractions)
        assert fractions[-1] == 1.0
        props = [pt[0] for pt in cdf]
        assert props == sorted(props)

    def test_single_channel_sequence_replays(self):
        spec = SynthSpec(width=64, height=64, frames=4, channels=1,
                         objects=(SynthObject(16, 16, 16, 16),))
        frames, store = synth_sequence(spec)
        cfg = EngineConfig(frame_w=64, frame_h=64, embed_dim=16, depth=1,
                           heads=2, channels=1)
        pps, akis, oracle = small_configs(p=1.0, k=2)
        report = replay(frames, store, cfg, pps, akis, oracle)
        assert not report["incomplete"]
        assert report["accuracy"]["map50"] == 1.0

    def test_protocol_failure_yields_partial_incomplete_report(self):
        # frames that do not match the engine dims abort at the first
        # keyframe; the report must come back flagged, not raise
        spec = SynthSpec(width=32, height=32, frames=3, objects=(
            SynthObject(4, 4, 8, 8),))
        frames, store = synth_sequence(spec)
        pps, akis, oracle = small_configs()
        report = replay(frames, store, SMALL_ENGINE, pps, akis, oracle)
        assert report["incomplete"]
        assert report["error"]

    def test_aggregates_recomputable_from_frame_records(self):
        frames, store = self.static_scene()
        pps, akis, oracle = small_configs(p=0.9, k=3)
        report = replay(frames, store, SMALL_ENGINE, pps, akis, oracle)
        total = sum(r["bytes_sent"] for r in report["frames"])
        assert total == report["bandwidth"]["total_bytes"]
        full = 64 * 64 * 3
        assert report["bandwidth"]["normalized"] == pytest.approx(
            total / (len(report["frames"]) * full))


class TestReportJson:
    def test_schema_and_json_fidelity(self, tmp_path):
        frames, store = TestReplay().static_scene(frames=3)
        pps, akis, oracle = small_configs(p=1.0, k=2)
        report = replay(frames, store, SMALL_ENGINE, pps, akis, oracle)
        path = tmp_path / "report.json"
        write_report(report, path)
        loaded = json.loads(path.read_text())
        assert loaded["schema"] == "arena-report/1"
        assert loaded["accuracy"] == report["accuracy"]
