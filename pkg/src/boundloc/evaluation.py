"""Trajectory metrics and ground-truth interpolation.

Both trajectories are geo-referenced, so no alignment step is applied before
computing errors. The aggregate is the RMS of the per-frame values by
default; a mean-absolute aggregate is available as an alternative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .factor_graph import (
    FactorSet,
    OdometryFactor,
    PriorFactor,
    SolverConfig,
    TrajectoryState,
    solve,
)
from .geometry import Pose2, RelativePose2, compose, wrap_angle

KEYFRAME_PRIOR_WEIGHT = 1e6   # keyframes are trusted anchors


@dataclass(frozen=True)
class KeyframeSet:
    """Trusted poses at strictly increasing frame indices."""

    entries: tuple

    def __post_init__(self):
        entries = tuple((int(f), p) for f, p in self.entries)
        frames = [f for f, _ in entries]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError("keyframe indices must be strictly increasing")
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


@dataclass
class AteResult:
    trans_error: float            # aggregate, meters
    rot_error: float              # aggregate, degrees
    per_frame: np.ndarray         # columns: frame, trans_err, rot_err_deg, s, w_a
    aggregate: str = "rms"

    def to_text(self) -> str:
        return (
            f"frames={self.per_frame.shape[0]}\n"
            f"aggregate={self.aggregate}\n"
            f"ate_trans_m={self.trans_error:.9g}\n"
            f"ate_rot_deg={self.rot_error:.9g}\n"
        )


def _poses_of(trajectory) -> list[Pose2]:
    poses = getattr(trajectory, "poses", trajectory)
    return list(poses)


def compute_ate(
    estimate,
    truth,
    *,
    frames: Sequence[int] | None = None,
    s: Sequence[float] | None = None,
    w_a: Sequence[float] | None = None,
    aggregate: str = "rms",
) -> AteResult:
    """Per-frame translation/rotation errors against ground truth.

    ``estimate`` and ``truth`` may be ``TrajectoryState``/``GroundTruth`` or
    plain pose sequences; they must be frame-aligned and equally long.
    Optional per-frame diagnostics (information score and association weight)
    are carried through into the per-frame table.
    """
    if aggregate not in ("rms", "mean"):
        raise ValueError(f"aggregate must be 'rms' or 'mean', got {aggregate!r}")
    est = _poses_of(estimate)
    gt = _poses_of(truth)
    if len(est) != len(gt):
        raise ValueError(f"trajectory lengths differ: estimate {len(est)} vs truth {len(gt)}")
    n = len(est)
    frames = np.arange(n) if frames is None else np.asarray(frames)
    s = np.zeros(n) if s is None else np.asarray(s, dtype=float)
    w_a = np.zeros(n) if w_a is None else np.asarray(w_a, dtype=float)
    table = np.zeros((n, 5))
    for k, (pe, pg) in enumerate(zip(est, gt)):
        table[k, 0] = frames[k]
        table[k, 1] = float(np.linalg.norm(pe.t - pg.t))
        table[k, 2] = abs(math.degrees(wrap_angle(pe.theta - pg.theta)))
        table[k, 3] = s[k]
        table[k, 4] = w_a[k]
    if n == 0:
        return AteResult(0.0, 0.0, table, aggregate)
    if aggregate == "rms":
        trans = float(np.sqrt(np.mean(table[:, 1] ** 2)))
        rot = float(np.sqrt(np.mean(table[:, 2] ** 2)))
    else:
        trans = float(np.mean(np.abs(table[:, 1])))
        rot = float(np.mean(np.abs(table[:, 2])))
    return AteResult(trans, rot, table, aggregate)


def interpolate_ground_truth(
    odometry: Sequence[RelativePose2],
    keyframes: KeyframeSet,
    solver_cfg: SolverConfig | None = None,
) -> list[Pose2]:
    """Full-batch solve of odometry factors (unit weight) anchored by strong
    position priors at the keyframes.

    ``odometry[k]`` is the increment from frame ``k-1`` to frame ``k``
    (entry 0 is ignored). Poses are initialized by composing odometry out
    from the first keyframe in both directions.
    """
    n = len(odometry)
    if len(keyframes) == 0:
        raise ValueError("at least one keyframe is required")
    for f, _ in keyframes:
        if not (0 <= f < n):
            raise ValueError(f"keyframe frame {f} outside [0, {n})")

    first_frame, first_pose = keyframes.entries[0]
    poses: list[Pose2 | None] = [None] * n
    poses[first_frame] = first_pose
    for k in range(first_frame + 1, n):
        poses[k] = compose(poses[k - 1], odometry[k])
    for k in range(first_frame - 1, -1, -1):
        poses[k] = compose(poses[k + 1], odometry[k + 1].inverse())

    state = TrajectoryState(poses, np.zeros(2))
    factors = FactorSet()
    for k in range(1, n):
        factors.odometry.append(OdometryFactor(k, odometry[k], 1.0))
    for f, pose in keyframes:
        factors.priors.append(PriorFactor(f, pose.t, 0.0, np.zeros(2), KEYFRAME_PRIOR_WEIGHT))
    cfg = solver_cfg or SolverConfig(max_iterations=200, cost_tolerance=1e-14)
    solved, _ = solve(state, factors, cfg, fixed_before=0, estimate_bias=False)
    return list(solved.poses)
