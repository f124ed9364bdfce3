"""Polyline landmark maps: arc-length resampling, turn angles, local crops.

Each map vertex carries an unsigned differential angle ``alpha``: the absolute
turn between its incoming and outgoing segment directions. Straight-line
interior points get ``alpha = 0``; open-polyline endpoints get ``alpha = 0``
as well. Closed polylines (first vertex repeated at the end) are treated as
rings so the shared vertex also carries its turn angle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .geometry import Pose2

MIN_SEGMENT_LENGTH = 1e-9


@dataclass(frozen=True)
class Polyline:
    """Ordered 2D vertices (meters, map frame), at least two of them,
    consecutive vertices distinct."""

    vertices: np.ndarray

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 2:
            raise ValueError(f"polyline needs an (n, 2) array with n >= 2, got shape {verts.shape}")
        if not np.all(np.isfinite(verts)):
            raise ValueError("polyline has non-finite vertices")
        seg_len = np.linalg.norm(np.diff(verts, axis=0), axis=1)
        if np.any(seg_len <= MIN_SEGMENT_LENGTH):
            bad = int(np.argmax(seg_len <= MIN_SEGMENT_LENGTH))
            raise ValueError(f"degenerate polyline: segment {bad} shorter than {MIN_SEGMENT_LENGTH} m")
        object.__setattr__(self, "vertices", verts.copy())

    @property
    def closed(self) -> bool:
        return bool(np.linalg.norm(self.vertices[0] - self.vertices[-1]) <= MIN_SEGMENT_LENGTH)

    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.vertices, axis=0), axis=1).sum())


@dataclass(frozen=True)
class Landmark:
    """A map point with its differential angle ``alpha`` in [0, pi]."""

    position: np.ndarray
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(2))


class LandmarkMap(Sequence):
    """Immutable landmark collection with array views for fast queries."""

    def __init__(self, positions: np.ndarray, alphas: np.ndarray):
        positions = np.asarray(positions, dtype=float).reshape(-1, 2)
        alphas = np.asarray(alphas, dtype=float).reshape(-1)
        if positions.shape[0] != alphas.shape[0]:
            raise ValueError("positions and alphas length mismatch")
        self._positions = positions
        self._alphas = alphas
        self._positions.setflags(write=False)
        self._alphas.setflags(write=False)

    @classmethod
    def from_landmarks(cls, landmarks: Iterable[Landmark]) -> "LandmarkMap":
        landmarks = list(landmarks)
        if not landmarks:
            return cls(np.zeros((0, 2)), np.zeros(0))
        return cls(
            np.array([lm.position for lm in landmarks]),
            np.array([lm.alpha for lm in landmarks]),
        )

    @property
    def positions(self) -> np.ndarray:
        return self._positions

    @property
    def alphas(self) -> np.ndarray:
        return self._alphas

    def __len__(self) -> int:
        return self._positions.shape[0]

    def __getitem__(self, index):
        if isinstance(index, slice):
            return [Landmark(p, a) for p, a in zip(self._positions[index], self._alphas[index])]
        return Landmark(self._positions[index], float(self._alphas[index]))


@dataclass(frozen=True)
class LocalMap:
    """Landmarks within ``radius`` of ``center``; ``indices`` point back into
    the source map so tie-breaking stays deterministic."""

    positions: np.ndarray
    alphas: np.ndarray
    indices: np.ndarray
    center: Pose2
    radius: float

    @property
    def landmarks(self) -> list:
        return [Landmark(p, a) for p, a in zip(self.positions, self.alphas)]

    def __len__(self) -> int:
        return self.positions.shape[0]


def _turn_angle(incoming: np.ndarray, outgoing: np.ndarray) -> float:
    cross = incoming[0] * outgoing[1] - incoming[1] * outgoing[0]
    dot = incoming[0] * outgoing[0] + incoming[1] * outgoing[1]
    return abs(math.atan2(abs(cross), dot))


def _subdivide(a: np.ndarray, b: np.ndarray, step: float) -> np.ndarray:
    """Interior points of segment a->b at uniform spacing <= step (endpoints excluded)."""
    length = float(np.linalg.norm(b - a))
    pieces = max(1, math.ceil(length / step))
    if pieces == 1:
        return np.zeros((0, 2))
    fractions = np.arange(1, pieces)[:, None] / pieces
    return a + fractions * (b - a)


def build_landmarks(polylines: Iterable[Polyline], resample_step: float = 0.5) -> LandmarkMap:
    """Resample polylines at uniform arc-length spacing and attach turn angles.

    Original vertices are always kept so corner angles are never smoothed
    away; subdivision points lie on straight segments and carry alpha = 0.
    """
    if resample_step <= 0:
        raise ValueError(f"resample_step must be positive, got {resample_step}")
    positions: list[np.ndarray] = []
    alphas: list[float] = []
    for line in polylines:
        verts = line.vertices
        if line.closed:
            ring = verts[:-1]
            n = ring.shape[0]
            if n < 3:
                raise ValueError("closed polyline needs at least 3 distinct vertices")
            for j in range(n):
                prev_v = ring[(j - 1) % n]
                cur = ring[j]
                nxt = ring[(j + 1) % n]
                positions.append(cur)
                alphas.append(_turn_angle(cur - prev_v, nxt - cur))
                for p in _subdivide(cur, nxt, resample_step):
                    positions.append(p)
                    alphas.append(0.0)
        else:
            n = verts.shape[0]
            for j in range(n):
                cur = verts[j]
                if 0 < j < n - 1:
                    alpha = _turn_angle(cur - verts[j - 1], verts[j + 1] - cur)
                else:
                    alpha = 0.0
                positions.append(cur)
                alphas.append(alpha)
                if j < n - 1:
                    for p in _subdivide(cur, verts[j + 1], resample_step):
                        positions.append(p)
                        alphas.append(0.0)
    if not positions:
        return LandmarkMap(np.zeros((0, 2)), np.zeros(0))
    return LandmarkMap(np.array(positions), np.array(alphas))


def crop(landmarks, center: Pose2, radius: float) -> LocalMap:
    """Landmarks with Euclidean distance <= radius from the center translation.

    Result order follows the source map order, which equals a linear scan.
    """
    if radius <= 0:
        raise ValueError(f"crop radius must be positive, got {radius}")
    if isinstance(landmarks, LandmarkMap):
        positions, alphas = landmarks.positions, landmarks.alphas
    else:
        items = list(landmarks)
        positions = np.array([lm.position for lm in items]).reshape(-1, 2)
        alphas = np.array([lm.alpha for lm in items])
    if positions.shape[0] == 0:
        return LocalMap(np.zeros((0, 2)), np.zeros(0), np.zeros(0, dtype=int), center, radius)
    dist = np.linalg.norm(positions - center.t, axis=1)
    mask = dist <= radius
    idx = np.nonzero(mask)[0]
    return LocalMap(positions[idx].copy(), alphas[idx].copy(), idx, center, radius)
