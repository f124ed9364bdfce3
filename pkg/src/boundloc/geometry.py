"""Planar rigid-body math shared by every other module.

Poses store the rotation as a scalar angle wrapped to (-pi, pi], so the
implied 2x2 rotation matrix is orthonormal by construction and never needs
renormalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap an angle in radians to (-pi, pi]."""
    theta = math.fmod(theta, TWO_PI)
    if theta <= -math.pi:
        theta += TWO_PI
    elif theta > math.pi:
        theta -= TWO_PI
    return theta


def rotation_matrix(theta: float) -> np.ndarray:
    """2x2 rotation matrix for a counterclockwise angle in radians."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _as_vec2(value) -> np.ndarray:
    return np.asarray(value, dtype=float).reshape(2).copy()


@dataclass(frozen=True)
class Pose2:
    """Planar rigid pose: heading ``theta`` (rad) plus translation ``t`` (m).

    ``theta`` is wrapped to (-pi, pi] on construction and after every
    operation, so residual angles stay minimal in magnitude.
    """

    theta: float = 0.0
    t: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))
        object.__setattr__(self, "t", _as_vec2(self.t))

    @classmethod
    def identity(cls):
        return cls(0.0, np.zeros(2))

    def rotation(self) -> np.ndarray:
        return rotation_matrix(self.theta)

    def compose(self, other: "Pose2") -> "Pose2":
        """Chain ``self`` then ``other``: rotation angles add, translation is
        ``other.t`` expressed in this frame plus ``self.t``."""
        return Pose2(self.theta + other.theta, self.rotation() @ other.t + self.t)

    def inverse(self):
        c, s = math.cos(self.theta), math.sin(self.theta)
        tx, ty = self.t
        return type(self)(-self.theta, np.array([-(c * tx + s * ty), -(-s * tx + c * ty)]))

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Map one point (2,) or a stack of points (N, 2) into the world frame."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation().T + self.t

    def almost_equal(self, other: "Pose2", tol: float = 1e-9) -> bool:
        return (
            abs(wrap_angle(self.theta - other.theta)) <= tol
            and np.all(np.abs(self.t - other.t) <= tol)
        )

    def __repr__(self):
        return f"{type(self).__name__}(theta={self.theta:.9g}, t=({self.t[0]:.9g}, {self.t[1]:.9g}))"


@dataclass(frozen=True, repr=False)
class RelativePose2(Pose2):
    """Same algebra as ``Pose2``, used for the increment between consecutive frames."""


def compose(a: Pose2, b: Pose2) -> Pose2:
    return a.compose(b)


def between(a: Pose2, b: Pose2) -> RelativePose2:
    """Increment ``r`` with ``compose(a, r) = b``.

    Translation is ``R(a.theta)^T (b.t - a.t)``, rotation ``b.theta - a.theta``
    wrapped.
    """
    c, s = math.cos(a.theta), math.sin(a.theta)
    d = b.t - a.t
    return RelativePose2(
        b.theta - a.theta,
        np.array([c * d[0] + s * d[1], -s * d[0] + c * d[1]]),
    )


def transform_point(pose: Pose2, point) -> np.ndarray:
    return pose.transform(_as_vec2(point))


def rotation_frobenius_sq(delta: float) -> float:
    """Squared Frobenius distance between two 2x2 rotations whose angles differ
    by ``delta``: the closed form is ``4 (1 - cos delta)``."""
    return 4.0 * (1.0 - math.cos(delta))
