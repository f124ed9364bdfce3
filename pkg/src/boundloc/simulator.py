"""Deterministic synthetic worlds and sensor streams.

A scenario is a corridor: two boundary polylines offset left/right of a
course, with ground-truth poses spaced along the course centerline.
Detections are the map points within sensor range pushed into the vehicle
frame plus isotropic Gaussian noise, odometry is the true increment plus
noise, and GPS is the true position plus a smooth bias (constant offset plus
a sinusoid in traveled distance) plus noise. Detection dropout windows empty
the detection sets on the given frame ranges.

The shipped presets exercise the three failure regimes: ``corner-rich``
(information everywhere, constant GPS bias), ``corridor-ambiguous`` (a long
straight stretch where association carries no along-track information), and
``mixed`` (corner and straight sections, meant to be combined with a dropout
window and a sinusoidal bias).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .association import DetectionSet, associate
from .geometry import Pose2, RelativePose2, between
from .landmark_map import LandmarkMap, Polyline, build_landmarks, crop

_ARC_CHORD = 1.0  # m, polygonalization step for arc course segments
_MITER_LIMIT = 8.0  # times the offset distance


@dataclass(frozen=True)
class GpsFix:
    position: np.ndarray
    sigma_xy: float

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(2).copy())
        if self.sigma_xy < 0:
            raise ValueError("sigma_xy must be non-negative")


@dataclass(frozen=True)
class FrameObservation:
    """One frame's sensor bundle: odometry increment, detections, optional GPS."""

    frame_index: int
    odometry: RelativePose2
    detections: DetectionSet
    gps: GpsFix | None = None


@dataclass(frozen=True)
class GpsBiasModel:
    """Smooth GPS offset: constant part plus a circle traced in traveled
    distance, ``constant + amplitude * (sin, cos)(2 pi s / period)``."""

    constant: tuple[float, float] = (0.0, 0.0)
    amplitude: float = 0.0
    period: float = 1000.0

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("bias period must be positive")

    def at(self, arclength: float) -> np.ndarray:
        phase = 2.0 * math.pi * arclength / self.period
        return np.array([
            self.constant[0] + self.amplitude * math.sin(phase),
            self.constant[1] + self.amplitude * math.cos(phase),
        ])


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    course: tuple = ()
    half_width: float = 3.5
    frame_spacing: float = 0.5
    sensor_range: float = 20.0
    detection_noise: float = 0.0
    dropout: tuple = ()                      # ((first, last), ...) inclusive frame ranges
    odometry_noise: tuple[float, float] = (0.0, 0.0)   # (m, rad) per frame
    gps_noise: float = 0.0
    gps_bias: GpsBiasModel = field(default_factory=GpsBiasModel)
    resample_step: float = 0.5

    def __post_init__(self):
        if self.frame_spacing <= 0:
            raise ValueError("frame_spacing must be positive")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        if self.sensor_range <= 0:
            raise ValueError("sensor_range must be positive")
        if self.detection_noise < 0 or self.gps_noise < 0 or min(self.odometry_noise) < 0:
            raise ValueError("noise sigmas must be non-negative")
        cleaned = []
        for first, last in self.dropout:
            first, last = int(first), int(last)
            if last < first:
                raise ValueError(f"dropout range {first}:{last} is empty")
            cleaned.append((first, last))
        object.__setattr__(self, "dropout", tuple(cleaned))
        object.__setattr__(self, "course", tuple(tuple(seg) for seg in self.course))


@dataclass
class GroundTruth:
    poses: list[Pose2]
    bias: np.ndarray  # (N, 2) true GPS bias per frame

    def __post_init__(self):
        self.bias = np.asarray(self.bias, dtype=float).reshape(-1, 2)
        if self.bias.shape[0] != len(self.poses):
            raise ValueError("bias trace length must match pose count")


@dataclass
class Scenario:
    config: ScenarioConfig
    polylines: list[Polyline]
    landmarks: LandmarkMap
    frames: list[FrameObservation]
    truth: GroundTruth


def _heading_vec(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)])


def build_centerline(course: Sequence) -> np.ndarray:
    """Course segments -> polygon vertices. Segments are ``("straight", L)``,
    ``("turn", angle_rad)`` for a sharp corner, or ``("arc", angle_rad, radius)``."""
    heading = 0.0
    pos = np.zeros(2)
    verts = [pos.copy()]
    for seg in course:
        kind = seg[0]
        if kind == "straight":
            length = float(seg[1])
            if length <= 0:
                raise ValueError(f"straight segment must have positive length, got {length}")
            pos = pos + length * _heading_vec(heading)
            verts.append(pos.copy())
        elif kind == "turn":
            heading += float(seg[1])
        elif kind == "arc":
            angle, radius = float(seg[1]), float(seg[2])
            if radius < 0:
                raise ValueError("arc radius must be non-negative")
            if radius == 0 or angle == 0:
                heading += angle
                continue
            steps = max(4, math.ceil(abs(angle) * radius / _ARC_CHORD))
            step_angle = angle / steps
            chord = 2.0 * radius * math.sin(abs(step_angle) / 2.0)
            for _ in range(steps):
                heading += step_angle / 2.0
                pos = pos + chord * _heading_vec(heading)
                heading += step_angle / 2.0
                verts.append(pos.copy())
        else:
            raise ValueError(f"unknown course segment kind {kind!r}")
    if len(verts) < 2:
        raise ValueError("course produces no travel; add straight or arc segments")
    return np.array(verts)


def offset_polyline(verts: np.ndarray, distance: float) -> np.ndarray:
    """Parallel offset with miter joins; positive distance is the left side."""
    verts = np.asarray(verts, dtype=float)
    diffs = np.diff(verts, axis=0)
    lengths = np.linalg.norm(diffs, axis=1)
    dirs = diffs / lengths[:, None]
    normals = np.stack([-dirs[:, 1], dirs[:, 0]], axis=1)
    out = [verts[0] + distance * normals[0]]
    for j in range(1, verts.shape[0] - 1):
        u1, u2 = dirs[j - 1], dirs[j]
        p1 = verts[j - 1] + distance * normals[j - 1]
        p2 = verts[j] + distance * normals[j]
        denom = u1[0] * u2[1] - u1[1] * u2[0]
        if abs(denom) < 1e-12:
            out.append(verts[j] + distance * normals[j])
            continue
        w = p2 - p1
        t1 = (w[0] * u2[1] - w[1] * u2[0]) / denom
        corner = p1 + t1 * u1
        if np.linalg.norm(corner - verts[j]) > _MITER_LIMIT * abs(distance):
            out.append(verts[j] + distance * normals[j - 1])
            out.append(verts[j] + distance * normals[j])
        else:
            out.append(corner)
    out.append(verts[-1] + distance * normals[-1])
    cleaned = [out[0]]
    for p in out[1:]:
        if np.linalg.norm(p - cleaned[-1]) > 1e-9:
            cleaned.append(p)
    return np.array(cleaned)


def _poses_along(verts: np.ndarray, spacing: float) -> tuple[list[Pose2], np.ndarray]:
    seg = np.diff(verts, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    n_frames = int(math.floor(total / spacing + 1e-9)) + 1
    poses = []
    arcs = np.zeros(n_frames)
    for k in range(n_frames):
        s = min(k * spacing, total)
        idx = int(np.searchsorted(cum, s, side="right")) - 1
        idx = min(max(idx, 0), len(seg_len) - 1)
        frac = (s - cum[idx]) / seg_len[idx]
        position = verts[idx] + frac * seg[idx]
        heading = math.atan2(seg[idx, 1], seg[idx, 0])
        poses.append(Pose2(heading, position))
        arcs[k] = s
    return poses, arcs


def _in_dropout(frame: int, intervals) -> bool:
    return any(first <= frame <= last for first, last in intervals)


def generate(cfg: ScenarioConfig) -> Scenario:
    """Build the world and the sensor stream. Fully deterministic per seed."""
    centerline = build_centerline(cfg.course)
    left = offset_polyline(centerline, cfg.half_width)
    right = offset_polyline(centerline, -cfg.half_width)
    polylines = [Polyline(left), Polyline(right)]
    landmarks = build_landmarks(polylines, cfg.resample_step)
    poses, arcs = _poses_along(centerline, cfg.frame_spacing)

    rng = np.random.default_rng(cfg.seed)
    sigma_t, sigma_r = cfg.odometry_noise
    frames: list[FrameObservation] = []
    bias_trace = np.zeros((len(poses), 2))
    for k, pose in enumerate(poses):
        if k == 0:
            delta = RelativePose2()
        else:
            true_delta = between(poses[k - 1], pose)
            noise_t = rng.normal(size=2) * sigma_t
            noise_r = rng.normal() * sigma_r
            delta = RelativePose2(true_delta.theta + noise_r, true_delta.t + noise_t)
        if _in_dropout(k, cfg.dropout):
            points = np.zeros((0, 2))
        else:
            dist = np.linalg.norm(landmarks.positions - pose.t, axis=1)
            visible = landmarks.positions[dist <= cfg.sensor_range]
            points = pose.inverse().transform(visible)
            if cfg.detection_noise > 0 and points.shape[0]:
                points = points + rng.normal(size=points.shape) * cfg.detection_noise
        bias = cfg.gps_bias.at(arcs[k])
        bias_trace[k] = bias
        gps_pos = pose.t + bias + rng.normal(size=2) * cfg.gps_noise
        gps = GpsFix(gps_pos, cfg.gps_noise)
        frames.append(FrameObservation(k, delta, DetectionSet(points, k), gps))
    truth = GroundTruth(list(poses), bias_trace)
    return Scenario(cfg, polylines, landmarks, frames, truth)


def info_profile(scenario: Scenario, threshold: float = 1.0, crop_radius: float = 50.0) -> np.ndarray:
    """Per-frame information score under perfect association at the
    ground-truth poses. Used to calibrate ``s_max_hint`` and to verify that
    straight corridors drive the score to zero."""
    out = np.zeros(len(scenario.frames))
    for k, frame in enumerate(scenario.frames):
        if len(frame.detections) == 0:
            continue
        pose = scenario.truth.poses[k]
        local = crop(scenario.landmarks, pose, crop_radius)
        if len(local) == 0:
            continue
        out[k] = associate(frame.detections, local, pose, threshold).info_score
    return out


# ---------------------------------------------------------------------------
# Presets: lawnmower-style corner sections avoid wall self-intersections.

def _lawnmower(lane: float, gap: float, blocks: int) -> list:
    segs: list = []
    for b in range(blocks):
        segs.append(("straight", lane))
        if b % 2 == 0:
            segs.extend([("turn", math.pi / 2), ("straight", gap), ("turn", math.pi / 2)])
        else:
            segs.extend([("turn", -math.pi / 2), ("straight", gap), ("turn", -math.pi / 2)])
    segs.append(("straight", lane))
    return segs


_CORNER_RICH_COURSE = tuple(_lawnmower(lane=16.0, gap=10.0, blocks=4))

_CORRIDOR_COURSE = (
    ("straight", 10.0), ("turn", math.pi / 2),
    ("straight", 10.0), ("turn", -math.pi / 2),
    ("straight", 8.0), ("turn", -math.pi / 2),
    ("straight", 10.0), ("turn", math.pi / 2),
    ("straight", 150.0),                       # the ambiguous stretch
    ("turn", math.pi / 2), ("straight", 10.0),
    ("turn", -math.pi / 2), ("straight", 8.0),
    ("turn", -math.pi / 2), ("straight", 10.0),
    ("turn", math.pi / 2), ("straight", 10.0),
)

# Boustrophedon rows: long rows give mildly ambiguous middles, the row
# connectors are corner-dense. Row spacing clears twice the half width.
_MIXED_COURSE = (
    ("straight", 30.0), ("turn", math.pi / 2),
    ("straight", 10.0), ("turn", math.pi / 2),
    ("straight", 30.0), ("turn", -math.pi / 2),
    ("straight", 12.0), ("turn", -math.pi / 2),
    ("straight", 30.0), ("turn", math.pi / 2),
    ("straight", 10.0), ("turn", math.pi / 2),
    ("straight", 30.0), ("turn", -math.pi / 2),
    ("straight", 12.0), ("turn", -math.pi / 2),
    ("straight", 26.0), ("turn", math.pi / 2),
    ("straight", 10.0), ("turn", math.pi / 2),
    ("straight", 26.0),
)

PRESETS = {
    "corner-rich": ScenarioConfig(
        course=_CORNER_RICH_COURSE,
        detection_noise=0.05,
        odometry_noise=(0.02, 0.003),
        gps_noise=0.3,
        gps_bias=GpsBiasModel(constant=(1.5, -0.8)),
    ),
    "corridor-ambiguous": ScenarioConfig(
        course=_CORRIDOR_COURSE,
        detection_noise=0.22,
        odometry_noise=(0.05, 0.004),
        gps_noise=0.3,
        gps_bias=GpsBiasModel(constant=(1.5, -0.8)),
    ),
    "mixed": ScenarioConfig(
        course=_MIXED_COURSE,
        detection_noise=0.08,
        odometry_noise=(0.03, 0.003),
        gps_noise=0.3,
        gps_bias=GpsBiasModel(constant=(1.2, -0.7), amplitude=0.8, period=1200.0),
    ),
}


def preset(name: str, seed: int = 0, **overrides) -> ScenarioConfig:
    """Named scenario configuration, optionally overriding fields."""
    try:
        base = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}") from None
    return replace(base, seed=seed, **overrides)
