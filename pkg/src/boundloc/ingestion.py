"""Strict text formats for sequences, maps, keyframes, and run outputs.

Sequence files carry one record per line:

* ``F <frame> ODO <dx> <dy> <dtheta>`` starts a frame with its odometry
  increment (vehicle frame, increment from the previous frame),
* ``D <frame> <x> <y>`` adds one detection point (vehicle frame),
* ``G <frame> <x> <y> <sigma_xy>`` attaches a GPS fix.

Ground-truth files carry ``T <frame> <x> <y> <theta>`` lines, keyframe files
``K <frame> <x> <y> <theta>``. Map files carry one polyline per line:
``P x1 y1 x2 y2 ...``. ``#`` starts a comment anywhere. Floats are written
with ``repr`` so parsing a written file reproduces the values bit for bit.

Parsing is strict: malformed lines, detections or fixes without a matching
frame record, and non-monotone frame indices are collected with their line
numbers and raised as a single ``ParseError``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .association import DetectionSet
from .evaluation import KeyframeSet
from .geometry import Pose2, RelativePose2
from .landmark_map import Polyline
from .simulator import FrameObservation, GpsFix

_MAX_REPORTED_ERRORS = 10


class ParseError(ValueError):
    def __init__(self, path, errors: list[str]):
        self.path = str(path)
        self.errors = errors
        shown = "; ".join(errors[:_MAX_REPORTED_ERRORS])
        extra = "" if len(errors) <= _MAX_REPORTED_ERRORS else f" (+{len(errors) - _MAX_REPORTED_ERRORS} more)"
        super().__init__(f"{self.path}: {shown}{extra}")


@dataclass
class ParsedSequence:
    frames: list[FrameObservation]
    source: str
    diagnostics: list[str] = field(default_factory=list)


def _fmt(value: float) -> str:
    return repr(float(value))


def _clean_lines(path):
    """Yield (line_number, tokens) for non-empty, non-comment content."""
    with open(path, "r", encoding="utf-8") as fh:
        for number, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            yield number, line.split()


def _floats(tokens, count, errors, number, what):
    if len(tokens) != count:
        errors.append(f"line {number}: {what} expects {count} numeric fields, got {len(tokens)}")
        return None
    try:
        return [float(tok) for tok in tokens]
    except ValueError:
        errors.append(f"line {number}: {what} has a non-numeric field")
        return None


# -- sequences -----------------------------------------------------------------


def parse_sequence(path) -> ParsedSequence:
    errors: list[str] = []
    records: dict[int, dict] = {}
    order: list[int] = []
    last_frame = None
    for number, tokens in _clean_lines(path):
        kind = tokens[0]
        if kind == "F":
            if len(tokens) != 6 or tokens[2] != "ODO":
                errors.append(f"line {number}: F record must be 'F <frame> ODO <dx> <dy> <dtheta>'")
                continue
            try:
                frame = int(tokens[1])
            except ValueError:
                errors.append(f"line {number}: frame index is not an integer")
                continue
            vals = _floats(tokens[3:], 3, errors, number, "odometry")
            if vals is None:
                continue
            if last_frame is not None and frame <= last_frame:
                errors.append(f"line {number}: frame {frame} not after frame {last_frame}")
                continue
            last_frame = frame
            records[frame] = {
                "odometry": RelativePose2(vals[2], (vals[0], vals[1])),
                "detections": [],
                "gps": None,
            }
            order.append(frame)
        elif kind in ("D", "G"):
            try:
                frame = int(tokens[1])
            except ValueError:
                errors.append(f"line {number}: frame index is not an integer")
                continue
            if frame not in records:
                errors.append(f"line {number}: {kind} record for frame {frame} before its F record")
                continue
            if kind == "D":
                vals = _floats(tokens[2:], 2, errors, number, "detection")
                if vals is not None:
                    records[frame]["detections"].append(vals)
            else:
                vals = _floats(tokens[2:], 3, errors, number, "gps fix")
                if vals is None:
                    continue
                if vals[2] < 0:
                    errors.append(f"line {number}: gps sigma must be non-negative")
                    continue
                records[frame]["gps"] = GpsFix(np.array(vals[:2]), vals[2])
        else:
            errors.append(f"line {number}: unknown record type {kind!r}")
    if errors:
        raise ParseError(path, errors)
    frames = []
    for frame in order:
        rec = records[frame]
        pts = np.array(rec["detections"]).reshape(-1, 2)
        frames.append(FrameObservation(frame, rec["odometry"], DetectionSet(pts, frame), rec["gps"]))
    return ParsedSequence(frames, str(path), [f"frames={len(frames)}"])


def write_sequence(path, frames) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# sequence: F <frame> ODO <dx> <dy> <dtheta> | D <frame> <x> <y> | G <frame> <x> <y> <sigma_xy>\n")
        for f in frames:
            o = f.odometry
            fh.write(f"F {f.frame_index} ODO {_fmt(o.t[0])} {_fmt(o.t[1])} {_fmt(o.theta)}\n")
            for p in f.detections.points:
                fh.write(f"D {f.frame_index} {_fmt(p[0])} {_fmt(p[1])}\n")
            if f.gps is not None:
                g = f.gps
                fh.write(f"G {f.frame_index} {_fmt(g.position[0])} {_fmt(g.position[1])} {_fmt(g.sigma_xy)}\n")


# -- ground truth and keyframes ---------------------------------------------------


def _parse_pose_lines(path, tag: str) -> list[tuple[int, Pose2]]:
    errors: list[str] = []
    out: list[tuple[int, Pose2]] = []
    last = None
    for number, tokens in _clean_lines(path):
        if tokens[0] != tag:
            errors.append(f"line {number}: expected {tag} record, got {tokens[0]!r}")
            continue
        try:
            frame = int(tokens[1])
        except (ValueError, IndexError):
            errors.append(f"line {number}: frame index is not an integer")
            continue
        vals = _floats(tokens[2:], 3, errors, number, f"{tag} pose")
        if vals is None:
            continue
        if last is not None and frame <= last:
            errors.append(f"line {number}: frame {frame} not after frame {last}")
            continue
        last = frame
        out.append((frame, Pose2(vals[2], (vals[0], vals[1]))))
    if errors:
        raise ParseError(path, errors)
    return out


def parse_ground_truth(path) -> list[tuple[int, Pose2]]:
    return _parse_pose_lines(path, "T")


def write_ground_truth(path, indexed_poses) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# ground truth: T <frame> <x> <y> <theta>\n")
        for frame, pose in indexed_poses:
            fh.write(f"T {frame} {_fmt(pose.t[0])} {_fmt(pose.t[1])} {_fmt(pose.theta)}\n")


def parse_keyframes(path) -> KeyframeSet:
    entries = _parse_pose_lines(path, "K")
    if not entries:
        raise ParseError(path, ["no keyframes"])
    return KeyframeSet(tuple(entries))


def write_keyframes(path, keyframes: KeyframeSet) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# keyframes: K <frame> <x> <y> <theta>\n")
        for frame, pose in keyframes:
            fh.write(f"K {frame} {_fmt(pose.t[0])} {_fmt(pose.t[1])} {_fmt(pose.theta)}\n")


# -- maps -------------------------------------------------------------------------


def parse_map(path) -> list[Polyline]:
    errors: list[str] = []
    polylines: list[Polyline] = []
    for number, tokens in _clean_lines(path):
        if tokens[0] != "P":
            errors.append(f"line {number}: expected P record, got {tokens[0]!r}")
            continue
        coords = tokens[1:]
        if len(coords) < 4 or len(coords) % 2:
            errors.append(f"line {number}: polyline needs an even number of >= 4 coordinates")
            continue
        try:
            values = [float(tok) for tok in coords]
        except ValueError:
            errors.append(f"line {number}: polyline has a non-numeric coordinate")
            continue
        try:
            polylines.append(Polyline(np.array(values).reshape(-1, 2)))
        except ValueError as exc:
            errors.append(f"line {number}: {exc}")
    if errors:
        raise ParseError(path, errors)
    if not polylines:
        raise ParseError(path, ["no polylines"])
    return polylines


def write_map(path, polylines) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# map: P x1 y1 x2 y2 ...\n")
        for line in polylines:
            coords = " ".join(_fmt(v) for v in np.asarray(line.vertices).ravel())
            fh.write(f"P {coords}\n")


# -- run outputs (delimited) --------------------------------------------------------

TRAJECTORY_HEADER = "frame,x,y,theta,ex,ey"
FRAMES_HEADER = "frame,s,pair_count,w_a,w_o,w_p,ex,ey,step_ms"
PERFRAME_HEADER = "frame,trans_err,rot_err,s,w_a,w_o,w_p"


def write_trajectory_csv(path, frame_indices, poses, bias_trace) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(TRAJECTORY_HEADER + "\n")
        for frame, pose, bias in zip(frame_indices, poses, bias_trace):
            fh.write(f"{frame},{_fmt(pose.t[0])},{_fmt(pose.t[1])},{_fmt(pose.theta)},"
                     f"{_fmt(bias[0])},{_fmt(bias[1])}\n")


def parse_trajectory_csv(path) -> tuple[list[int], list[Pose2], np.ndarray]:
    errors: list[str] = []
    frames: list[int] = []
    poses: list[Pose2] = []
    bias: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != TRAJECTORY_HEADER:
        raise ParseError(path, [f"line 1: expected header {TRAJECTORY_HEADER!r}"])
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 6:
            errors.append(f"line {number}: expected 6 fields")
            continue
        try:
            frames.append(int(parts[0]))
            values = [float(v) for v in parts[1:]]
        except ValueError:
            errors.append(f"line {number}: non-numeric field")
            continue
        poses.append(Pose2(values[2], (values[0], values[1])))
        bias.append([values[3], values[4]])
    if errors:
        raise ParseError(path, errors)
    return frames, poses, np.array(bias).reshape(-1, 2)


def write_frames_csv(path, logs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(FRAMES_HEADER + "\n")
        for log in logs:
            fh.write(f"{log.frame_index},{_fmt(log.s)},{log.pair_count},{_fmt(log.w_a)},"
                     f"{_fmt(log.w_o)},{_fmt(log.w_p)},{_fmt(log.bias[0])},{_fmt(log.bias[1])},"
                     f"{_fmt(log.step_seconds * 1e3)}\n")


def parse_frames_csv(path) -> dict[int, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != FRAMES_HEADER:
        raise ParseError(path, [f"line 1: expected header {FRAMES_HEADER!r}"])
    out: dict[int, dict] = {}
    errors: list[str] = []
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 9:
            errors.append(f"line {number}: expected 9 fields")
            continue
        try:
            frame = int(parts[0])
            out[frame] = {
                "s": float(parts[1]),
                "pair_count": int(parts[2]),
                "w_a": float(parts[3]),
                "w_o": float(parts[4]),
                "w_p": float(parts[5]),
                "bias": (float(parts[6]), float(parts[7])),
                "step_ms": float(parts[8]),
            }
        except ValueError:
            errors.append(f"line {number}: non-numeric field")
    if errors:
        raise ParseError(path, errors)
    return out


def write_perframe_table(path, rows) -> None:
    """Rows of (frame, trans_err, rot_err, s, w_a, w_o, w_p)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(PERFRAME_HEADER + "\n")
        for row in rows:
            frame = int(row[0])
            fh.write(frame.__str__() + "," + ",".join(_fmt(v) for v in row[1:]) + "\n")
