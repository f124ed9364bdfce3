"""Detection-to-map registration and data association.

A frame's detections are registered against the local map with a 2D
point-to-point ICP, then paired with their nearest landmarks under a distance
threshold. The information score of the frame is the sum of the paired
landmarks' differential angles: straight walls contribute nothing no matter
how many points match, corners carry the information.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .geometry import Pose2, compose
from .landmark_map import Landmark, LocalMap


@dataclass(frozen=True)
class DetectionSet:
    """2D detection points in the vehicle frame for one frame. May be empty."""

    points: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(pts)):
            raise ValueError("detections contain non-finite coordinates")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class IcpConfig:
    match_radius: float = 2.0      # m, nearest-neighbor gate inside ICP
    max_iterations: int = 30
    epsilon: float = 1e-4          # m^2, mean-squared distance improvement cutoff


@dataclass(frozen=True)
class IcpResult:
    pose: Pose2
    converged: bool
    iterations: int
    mean_sq_error: float


@dataclass(frozen=True)
class AssociationResult:
    """Matched (detection, landmark) pairs plus the frame's information score."""

    detections: np.ndarray         # (K, 2) vehicle frame
    landmark_positions: np.ndarray  # (K, 2) map frame
    landmark_alphas: np.ndarray    # (K,)
    landmark_indices: np.ndarray   # (K,) indices into the local map
    icp_transform: Pose2
    info_score: float
    pair_count: int

    @cached_property
    def pairs(self) -> list:
        return [
            (d, Landmark(p, float(a)))
            for d, p, a in zip(self.detections, self.landmark_positions, self.landmark_alphas)
        ]

    @classmethod
    def empty(cls, icp_transform: Pose2 | None = None) -> "AssociationResult":
        return cls(
            detections=np.zeros((0, 2)),
            landmark_positions=np.zeros((0, 2)),
            landmark_alphas=np.zeros(0),
            landmark_indices=np.zeros(0, dtype=int),
            icp_transform=icp_transform or Pose2.identity(),
            info_score=0.0,
            pair_count=0,
        )


def _nearest(points: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index and distance of the nearest target per point.

    Squared distances are formed term by term (not via the expanded dot
    product), so genuinely equal distances compare equal and ties resolve to
    the lowest target index (argmin keeps the first minimum).
    """
    diff = points[:, None, :] - targets[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    idx = np.argmin(d2, axis=1)
    return idx, np.sqrt(d2[np.arange(points.shape[0]), idx])


def _nearest_fast(points: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """BLAS-backed variant for the ICP inner loop; tie order is not guaranteed."""
    d2 = (
        np.einsum("ij,ij->i", points, points)[:, None]
        + np.einsum("ij,ij->i", targets, targets)[None, :]
        - 2.0 * (points @ targets.T)
    )
    idx = np.argmin(d2, axis=1)
    return idx, np.sqrt(np.maximum(d2[np.arange(points.shape[0]), idx], 0.0))


def _rigid_align(src: np.ndarray, dst: np.ndarray) -> Pose2:
    """Closed-form 2D rigid transform minimizing ||R src + t - dst||^2."""
    sc = src.mean(axis=0)
    dc = dst.mean(axis=0)
    sp = src - sc
    dp = dst - dc
    dot = float(np.sum(sp * dp))
    cross = float(np.sum(sp[:, 0] * dp[:, 1] - sp[:, 1] * dp[:, 0]))
    theta = math.atan2(cross, dot) if (cross != 0.0 or dot != 0.0) else 0.0
    pose = Pose2(theta, np.zeros(2))
    t = dc - pose.rotation() @ sc
    return Pose2(theta, t)


def icp_register(
    detections: DetectionSet,
    local_map: LocalMap,
    initial_guess: Pose2,
    cfg: IcpConfig = IcpConfig(),
) -> IcpResult:
    """Iteratively align detections with the local map starting from a guess.

    Each pass transforms the detections by the current pose, matches them to
    their nearest landmarks within the match radius, and applies the
    closed-form rigid correction. Stops when the mean-squared pair distance
    improves by less than ``cfg.epsilon``. A pass with zero matches returns
    the initial guess flagged unconverged; callers treat that frame as having
    no associations.
    """
    if len(local_map) == 0 or len(detections) == 0:
        return IcpResult(initial_guess, False, 0, math.inf)
    pose = initial_guess
    prev_mse = math.inf
    for iteration in range(1, cfg.max_iterations + 1):
        world = pose.transform(detections.points)
        nn_idx, nn_dist = _nearest_fast(world, local_map.positions)
        mask = nn_dist <= cfg.match_radius
        if not np.any(mask):
            return IcpResult(initial_guess, False, iteration, math.inf)
        mse = float(np.mean(nn_dist[mask] ** 2))
        if mse < 1e-16 or prev_mse - mse < cfg.epsilon:
            return IcpResult(pose, True, iteration, mse)
        correction = _rigid_align(world[mask], local_map.positions[nn_idx[mask]])
        pose = compose(correction, pose)
        prev_mse = mse
    return IcpResult(pose, True, cfg.max_iterations, prev_mse)


def associate(
    detections: DetectionSet,
    local_map: LocalMap,
    pose: Pose2,
    threshold: float = 1.0,
    icp_transform: Pose2 | None = None,
) -> AssociationResult:
    """Pair each detection (transformed by ``pose``) with its nearest landmark
    within ``threshold``. A landmark may serve several detections; no
    uniqueness is imposed. The information score is the sum of the paired
    landmarks' alphas.
    """
    if threshold <= 0:
        raise ValueError(f"association threshold must be positive, got {threshold}")
    if len(detections) == 0 or len(local_map) == 0:
        return AssociationResult.empty(icp_transform)
    world = pose.transform(detections.points)
    nn_idx, nn_dist = _nearest(world, local_map.positions)
    mask = nn_dist <= threshold
    idx = nn_idx[mask]
    return AssociationResult(
        detections=detections.points[mask].copy(),
        landmark_positions=local_map.positions[idx].copy(),
        landmark_alphas=local_map.alphas[idx].copy(),
        landmark_indices=idx.copy(),
        icp_transform=icp_transform or Pose2.identity(),
        info_score=float(np.sum(local_map.alphas[idx])),
        pair_count=int(np.count_nonzero(mask)),
    )
