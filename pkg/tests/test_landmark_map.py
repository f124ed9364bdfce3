import math

import numpy as np
import pytest

from boundloc.geometry import Pose2
from boundloc.landmark_map import LandmarkMap, LocalMap, Polyline, build_landmarks, crop


def line(*pts):
    return Polyline(np.array(pts, dtype=float))


class TestPolyline:
    def test_rejects_single_distinct_vertex(self):
        with pytest.raises(ValueError, match="degenerate"):
            line((0, 0), (0, 0))

    def test_rejects_too_few_vertices(self):
        with pytest.raises(ValueError):
            Polyline(np.array([[0.0, 0.0]]))

    def test_closed_detection(self):
        assert line((0, 0), (1, 0), (1, 1), (0, 0)).closed
        assert not line((0, 0), (1, 0)).closed


class TestBuildLandmarks:
    def test_straight_segment_all_zero_alpha(self):
        lmks = build_landmarks([line((0, 0), (5, 0))], resample_step=0.5)
        assert len(lmks) == 11
        np.testing.assert_allclose(lmks.alphas, 0.0)

    def test_right_angle_corner(self):
        lmks = build_landmarks([line((0, 0), (2, 0), (2, 2))], resample_step=0.5)
        corner = [lm for lm in lmks if np.allclose(lm.position, (2, 0))]
        assert len(corner) == 1
        assert corner[0].alpha == pytest.approx(math.pi / 2, abs=1e-12)

    def test_worked_example_diagonal(self):
        lmks = build_landmarks([line((0, 0), (1, 0), (2, 1))], resample_step=10.0)
        middle = [lm for lm in lmks if np.allclose(lm.position, (1, 0))]
        assert middle[0].alpha == pytest.approx(math.atan(1.0), abs=1e-12)

    def test_endpoints_carry_zero_alpha(self):
        lmks = build_landmarks([line((0, 0), (1, 0), (2, 1))], resample_step=10.0)
        assert lmks[0].alpha == 0.0
        assert lmks[len(lmks) - 1].alpha == 0.0

    def test_resampling_keeps_spacing_and_corners(self):
        step = 0.3
        lmks = build_landmarks([line((0, 0), (2, 0), (2, 2))], resample_step=step)
        pos = lmks.positions
        gaps = np.linalg.norm(np.diff(pos, axis=0), axis=1)
        assert np.max(gaps) <= step + 1e-12
        assert any(np.allclose(p, (2, 0)) for p in pos)

    def test_circle_polygon_alphas(self):
        n = 48
        angles = 2 * math.pi * np.arange(n + 1) / n
        ring = np.stack([np.cos(angles), np.sin(angles)], axis=1) * 20.0
        lmks = build_landmarks([Polyline(ring)], resample_step=100.0)
        assert len(lmks) == n
        np.testing.assert_allclose(lmks.alphas, 2 * math.pi / n, atol=1e-6)

    def test_closed_convex_polygon_alpha_sum(self):
        square = line((0, 0), (4, 0), (4, 4), (0, 4), (0, 0))
        lmks = build_landmarks([square], resample_step=1.0)
        assert float(np.sum(lmks.alphas)) == pytest.approx(2 * math.pi, abs=1e-9)

    def test_rejects_nonpositive_step(self):
        with pytest.raises(ValueError):
            build_landmarks([line((0, 0), (1, 0))], resample_step=0.0)


class TestCrop:
    def _random_map(self, n=1000, seed=13):
        rng = np.random.default_rng(seed)
        return LandmarkMap(rng.uniform(-100, 100, size=(n, 2)), rng.uniform(0, math.pi, size=n)), rng

    def test_radius_covers_everything(self):
        lmks, _ = self._random_map()
        local = crop(lmks, Pose2.identity(), 1e4)
        assert len(local) == len(lmks)

    def test_tiny_radius_isolated_landmark(self):
        lmks = LandmarkMap(np.array([[0.0, 0.0], [10.0, 0.0]]), np.zeros(2))
        local = crop(lmks, Pose2(0.0, (10.0, 0.0)), 1e-6)
        assert len(local) == 1
        np.testing.assert_allclose(local.positions[0], (10.0, 0.0))

    def test_matches_linear_scan_oracle(self):
        lmks, rng = self._random_map()
        for _ in range(20):
            center = Pose2(rng.uniform(-3, 3), rng.uniform(-100, 100, size=2))
            radius = rng.uniform(5, 60)
            local = crop(lmks, center, radius)
            # independent O(n) scan
            expect = [k for k in range(len(lmks))
                      if math.dist(lmks.positions[k], center.t) <= radius]
            assert local.indices.tolist() == expect

    def test_result_lies_within_radius(self):
        lmks, _ = self._random_map(seed=5)
        local = crop(lmks, Pose2(0.0, (10.0, -20.0)), 30.0)
        dist = np.linalg.norm(local.positions - np.array([10.0, -20.0]), axis=1)
        assert np.all(dist <= 30.0)

    def test_order_invariance(self):
        lmks, _ = self._random_map(n=200, seed=3)
        perm = np.random.default_rng(0).permutation(200)
        shuffled = LandmarkMap(lmks.positions[perm], lmks.alphas[perm])
        a = crop(lmks, Pose2.identity(), 40.0)
        b = crop(shuffled, Pose2.identity(), 40.0)
        key = lambda local: sorted(map(tuple, local.positions))
        assert key(a) == key(b)

    def test_rejects_bad_radius(self):
        lmks, _ = self._random_map(n=10)
        with pytest.raises(ValueError):
            crop(lmks, Pose2.identity(), 0.0)

    def test_accepts_landmark_list(self):
        lmks, _ = self._random_map(n=50, seed=9)
        as_list = list(lmks)
        local = crop(as_list, Pose2.identity(), 50.0)
        oracle = crop(lmks, Pose2.identity(), 50.0)
        np.testing.assert_array_equal(local.positions, oracle.positions)
