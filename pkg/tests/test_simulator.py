import math

import numpy as np
import pytest

from boundloc.geometry import Pose2
from boundloc.simulator import (
    GpsBiasModel,
    PRESETS,
    Scenario,
    ScenarioConfig,
    build_centerline,
    generate,
    info_profile,
    offset_polyline,
    preset,
)

STRAIGHT = (("straight", 40.0),)
ONE_CORNER = (("straight", 20.0), ("turn", math.pi / 2), ("straight", 20.0))


def quiet(course=STRAIGHT, **kw):
    return ScenarioConfig(course=course, **kw)


class TestCenterline:
    def test_straight_plus_turn(self):
        verts = build_centerline(ONE_CORNER)
        np.testing.assert_allclose(verts, [[0, 0], [20, 0], [20, 20]], atol=1e-12)

    def test_arc_reaches_expected_endpoint(self):
        verts = build_centerline((("arc", math.pi / 2, 10.0),))
        np.testing.assert_allclose(verts[-1], [10.0, 10.0], atol=1e-9)

    def test_zero_length_rejected(self):
        with pytest.raises(ValueError, match="positive length"):
            build_centerline((("straight", 0.0),))

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="unknown course segment"):
            build_centerline((("wiggle", 1.0),))

    def test_no_travel_rejected(self):
        with pytest.raises(ValueError, match="no travel"):
            build_centerline((("turn", 1.0),))


class TestOffset:
    def test_straight_offset(self):
        verts = np.array([[0.0, 0.0], [10.0, 0.0]])
        left = offset_polyline(verts, 2.0)
        np.testing.assert_allclose(left, [[0, 2], [10, 2]], atol=1e-12)

    def test_miter_corner(self):
        verts = np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]])
        left = offset_polyline(verts, 2.0)
        # left wall of a left turn: inner corner at the offset intersection
        np.testing.assert_allclose(left[1], [8.0, 2.0], atol=1e-12)
        right = offset_polyline(verts, -2.0)
        np.testing.assert_allclose(right[1], [12.0, -2.0], atol=1e-12)


class TestGenerate:
    def test_zero_noise_detections_reproject_onto_map(self):
        sc = generate(quiet(course=ONE_CORNER))
        lmk_set = {tuple(np.round(p, 9)) for p in sc.landmarks.positions}
        for frame, pose in zip(sc.frames, sc.truth.poses):
            world = pose.transform(frame.detections.points)
            for p in world:
                assert tuple(np.round(p, 9)) in lmk_set
            dist = np.linalg.norm(world - pose.t, axis=1)
            assert np.all(dist <= sc.config.sensor_range + 1e-9)

    def test_determinism_is_bitwise(self):
        cfg = quiet(course=ONE_CORNER, detection_noise=0.1, odometry_noise=(0.03, 0.004),
                    gps_noise=0.3, seed=42)
        a, b = generate(cfg), generate(cfg)
        assert len(a.frames) == len(b.frames)
        for fa, fb in zip(a.frames, b.frames):
            assert np.array_equal(fa.detections.points, fb.detections.points)
            assert np.array_equal(fa.odometry.t, fb.odometry.t)
            assert fa.odometry.theta == fb.odometry.theta
            assert np.array_equal(fa.gps.position, fb.gps.position)

    def test_seed_changes_noise(self):
        cfg1 = quiet(gps_noise=0.3, seed=1)
        cfg2 = quiet(gps_noise=0.3, seed=2)
        a, b = generate(cfg1), generate(cfg2)
        assert not np.array_equal(a.frames[1].gps.position, b.frames[1].gps.position)

    def test_dropout_window_exact(self):
        cfg = quiet(dropout=((10, 20),))
        sc = generate(cfg)
        for frame in sc.frames:
            if 10 <= frame.frame_index <= 20:
                assert len(frame.detections) == 0
            else:
                assert len(frame.detections) > 0

    def test_constant_bias_offsets_gps_exactly(self):
        cfg = quiet(gps_bias=GpsBiasModel(constant=(1.5, -0.8)))
        sc = generate(cfg)
        for frame, pose in zip(sc.frames, sc.truth.poses):
            np.testing.assert_allclose(frame.gps.position - pose.t, (1.5, -0.8), atol=1e-12)
        np.testing.assert_allclose(sc.truth.bias, np.tile((1.5, -0.8), (len(sc.frames), 1)))

    def test_sinusoidal_bias_traces_period(self):
        cfg = quiet(course=(("straight", 100.0),), gps_bias=GpsBiasModel(amplitude=2.0, period=100.0))
        sc = generate(cfg)
        np.testing.assert_allclose(sc.truth.bias[0], (0.0, 2.0), atol=1e-12)
        # quarter period in traveled distance
        quarter = 50   # frame 50 = 25 m = quarter of 100 m period
        np.testing.assert_allclose(sc.truth.bias[quarter], (2.0, 0.0), atol=1e-9)

    def test_odometry_zero_noise_consistent(self):
        sc = generate(quiet(course=ONE_CORNER))
        from boundloc.geometry import between
        for k in range(1, len(sc.frames)):
            truth_delta = between(sc.truth.poses[k - 1], sc.truth.poses[k])
            np.testing.assert_allclose(sc.frames[k].odometry.t, truth_delta.t, atol=1e-9)

    def test_frame_spacing_and_count(self):
        sc = generate(quiet(course=(("straight", 10.0),), frame_spacing=0.5))
        assert len(sc.frames) == 21
        np.testing.assert_allclose(sc.truth.poses[1].t, (0.5, 0.0), atol=1e-12)


class TestInfoProfile:
    def test_straight_corridor_scores_zero(self):
        sc = generate(quiet())
        s = info_profile(sc)
        np.testing.assert_allclose(s, 0.0, atol=1e-12)

    def test_corner_contributes_both_walls(self):
        sc = generate(quiet(course=ONE_CORNER, sensor_range=10.0))
        s = info_profile(sc)
        # near the corner both wall corner vertices are in range; each
        # carries a right angle, everything else is straight
        mid = len(s) // 2
        assert s[mid] == pytest.approx(math.pi, abs=1e-9)
        assert s[0] == 0.0

    def test_dropout_gives_zero_score(self):
        sc = generate(quiet(course=ONE_CORNER, dropout=((0, 1000),)))
        np.testing.assert_allclose(info_profile(sc), 0.0)


class TestPresets:
    def test_known_presets(self):
        for name in ("corner-rich", "corridor-ambiguous", "mixed"):
            assert name in PRESETS
            cfg = preset(name, seed=3)
            assert cfg.seed == 3

    def test_unknown_preset(self):
        with pytest.raises(ValueError, match="unknown preset"):
            preset("nope")

    def test_override(self):
        cfg = preset("corner-rich", gps_noise=0.0)
        assert cfg.gps_noise == 0.0

    def test_corridor_has_long_straight(self):
        sc = generate(preset("corridor-ambiguous"))
        s = info_profile(sc)
        assert int(np.sum(s < 0.3)) >= 200

    def test_walls_do_not_cross(self):
        # corridor boundaries must never intersect each other or themselves
        for name in ("corner-rich", "corridor-ambiguous", "mixed"):
            sc = generate(preset(name))
            segs = []
            for line in sc.polylines:
                v = line.vertices
                segs.extend((v[i], v[i + 1]) for i in range(len(v) - 1))
            def crosses(a, b, c, d):
                def orient(p, q, r):
                    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
                o1, o2 = orient(a, b, c), orient(a, b, d)
                o3, o4 = orient(c, d, a), orient(c, d, b)
                return o1 * o2 < 0 and o3 * o4 < 0
            hits = 0
            for i in range(len(segs)):
                for j in range(i + 2, len(segs)):
                    if crosses(*segs[i], *segs[j]):
                        hits += 1
            assert hits == 0, f"{name}: {hits} wall self-intersections"


class TestConfigValidation:
    def test_rejects_bad_dropout(self):
        with pytest.raises(ValueError):
            quiet(dropout=((20, 10),))

    def test_rejects_negative_noise(self):
        with pytest.raises(ValueError):
            quiet(gps_noise=-0.1)

    def test_rejects_bad_spacing(self):
        with pytest.raises(ValueError):
            quiet(frame_spacing=0.0)
