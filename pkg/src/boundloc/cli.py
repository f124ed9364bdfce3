"""Command-line pipeline: scenario generation, localization runs, ablations,
calibration, ground-truth interpolation, and evaluation.

Every subcommand is deterministic given its flags (plus the seed for
``simulate``). Exit codes: 0 success, 1 runtime failure, 2 configuration
error. Numeric flags can also come from a ``key = value`` config file via
``--config``; explicit command-line flags override the file.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import figures
from .engine import EngineConfig, EngineError, LocalizationEngine
from .evaluation import compute_ate, interpolate_ground_truth
from .factor_graph import SolverConfig, SolverError
from .ingestion import (
    ParseError,
    parse_frames_csv,
    parse_ground_truth,
    parse_keyframes,
    parse_map,
    parse_sequence,
    parse_trajectory_csv,
    write_frames_csv,
    write_ground_truth,
    write_map,
    write_perframe_table,
    write_sequence,
    write_trajectory_csv,
)
from .landmark_map import build_landmarks, crop
from .association import associate
from .simulator import GpsBiasModel, PRESETS, generate, info_profile, preset
from .weighting import WeightConfig


def _positive(value: str) -> float:
    out = float(value)
    if out <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {value}")
    return out


def _course_from_spec(spec: str) -> tuple:
    """Parse 'straight:20,turn:90,arc:-90:5' (turn/arc angles in degrees)."""
    segments = []
    for part in spec.split(","):
        fields = part.strip().split(":")
        kind = fields[0]
        try:
            if kind == "straight" and len(fields) == 2:
                segments.append(("straight", float(fields[1])))
            elif kind == "turn" and len(fields) == 2:
                segments.append(("turn", math.radians(float(fields[1]))))
            elif kind == "arc" and len(fields) == 3:
                segments.append(("arc", math.radians(float(fields[1])), float(fields[2])))
            else:
                raise ValueError
        except ValueError:
            raise argparse.ArgumentTypeError(
                f"bad course segment {part!r}; use straight:<m>, turn:<deg>, or arc:<deg>:<radius>"
            ) from None
    return tuple(segments)


def _dropout_range(value: str) -> tuple[int, int]:
    try:
        first, last = value.split(":")
        return int(first), int(last)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad dropout range {value!r}; use FIRST:LAST") from None


def _pair(value: str) -> tuple[float, float]:
    try:
        a, b = value.split(",")
        return float(a), float(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad pair {value!r}; use A,B") from None


def _expand_config_file(argv: list[str]) -> list[str]:
    """Prepend options from a --config file so command-line flags win."""
    path = None
    for k, arg in enumerate(argv):
        if arg == "--config" and k + 1 < len(argv):
            path = argv[k + 1]
        elif arg.startswith("--config="):
            path = arg.split("=", 1)[1]
    if path is None:
        return argv
    extra: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for number, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(path, [f"line {number}: expected key = value"])
            key, value = (part.strip() for part in line.split("=", 1))
            flag = "--" + key.replace("_", "-")
            if value.lower() in ("true", "on", "yes") and key in _SWITCH_KEYS:
                extra.append(flag)
            elif value.lower() in ("false", "off", "no") and key in _SWITCH_KEYS:
                continue
            else:
                extra.append(f"{flag}={value}")
    # insert after the subcommand token
    if argv and not argv[0].startswith("-"):
        return [argv[0], *extra, *argv[1:]]
    return [*extra, *argv]


_SWITCH_KEYS = {"prior_only", "conventional_odometry", "no_figures", "ate_mean"}


# ---------------------------------------------------------------------------


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--phi", choices=("a", "b"), default=None, help="sigmoid input variant")
    p.add_argument("--bias-estimation", choices=("on", "off"), default="on")
    p.add_argument("--fixed-weights", type=_positive, default=None,
                   help="pin every factor weight to this value (unweighted baseline)")
    p.add_argument("--prior-only", action="store_true", help="ignore detections (prior trajectory)")
    p.add_argument("--lambda-a", type=_positive, default=None)
    p.add_argument("--lambda-b", type=_positive, default=None)
    p.add_argument("--h", type=_positive, default=None, help="sigmoid active input span")
    p.add_argument("--s-max-hint", type=_positive, default=None,
                   help="observed maximum information score (calibrate-smax reports it)")
    p.add_argument("--window-frames", type=int, default=100)
    p.add_argument("--error-window", type=int, default=50)
    p.add_argument("--solver", choices=("lm", "gn"), default="lm")
    p.add_argument("--max-iterations", type=int, default=50)
    p.add_argument("--cost-tolerance", type=_positive, default=1e-10)
    p.add_argument("--step-tolerance", type=_positive, default=1e-12)
    p.add_argument("--lm-damping", type=_positive, default=1e-6)
    p.add_argument("--conventional-odometry", action="store_true",
                   help="use the forward relative-pose residual instead of the default backward form")
    p.add_argument("--assoc-threshold", type=_positive, default=1.0)
    p.add_argument("--icp-match-radius", type=_positive, default=2.0)
    p.add_argument("--crop-radius", type=_positive, default=50.0)
    p.add_argument("--resample-step", type=_positive, default=0.5)
    p.add_argument("--seed", type=int, default=0, help="accepted for interface parity; runs are deterministic")
    p.add_argument("--config", default=None, help="key = value file supplying any of these flags")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")


def _engine_config(args) -> EngineConfig:
    if args.fixed_weights is not None:
        phi_flags = [args.phi, args.lambda_a, args.lambda_b, args.h, args.s_max_hint]
        if any(v is not None for v in phi_flags):
            raise ConfigConflict("--fixed-weights excludes --phi/--lambda-a/--lambda-b/--h/--s-max-hint")
    weights = WeightConfig(
        phi_variant=args.phi or "a",
        s_max_hint=args.s_max_hint if args.s_max_hint is not None else 60.0,
        lambda_a=args.lambda_a,
        lambda_b=args.lambda_b,
        h=args.h if args.h is not None else 12.0,
    )
    solver = SolverConfig(
        algorithm=args.solver,
        max_iterations=args.max_iterations,
        cost_tolerance=args.cost_tolerance,
        step_tolerance=args.step_tolerance,
        lm_initial_damping=args.lm_damping,
        window_frames=args.window_frames,
        error_window_w=args.error_window,
    )
    from .association import IcpConfig

    return EngineConfig(
        weights=weights,
        solver=solver,
        icp=IcpConfig(match_radius=args.icp_match_radius),
        association_threshold=args.assoc_threshold,
        crop_radius=args.crop_radius,
        estimate_bias=args.bias_estimation == "on",
        use_detections=not args.prior_only,
        fixed_weight=args.fixed_weights,
        odometry_convention="forward" if args.conventional_odometry else "backward",
    )


class ConfigConflict(ValueError):
    pass


# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    if args.preset is None and args.course is None:
        raise ConfigConflict("simulate needs --preset or --course")
    overrides = {}
    if args.dropout:
        overrides["dropout"] = tuple(args.dropout)
    for key, flag in [("gps_noise", args.gps_noise), ("detection_noise", args.detection_noise),
                      ("half_width", args.half_width), ("frame_spacing", args.frame_spacing),
                      ("sensor_range", args.sensor_range), ("resample_step", args.resample_step)]:
        if flag is not None:
            overrides[key] = flag
    if args.odometry_noise is not None:
        overrides["odometry_noise"] = args.odometry_noise
    if args.preset is not None:
        cfg = preset(args.preset, seed=args.seed, **overrides)
    else:
        from .simulator import ScenarioConfig
        cfg = ScenarioConfig(seed=args.seed, course=_course_from_spec(args.course), **overrides)
    bias_kwargs = {}
    if args.bias_constant is not None:
        bias_kwargs["constant"] = args.bias_constant
    if args.bias_amplitude is not None:
        bias_kwargs["amplitude"] = args.bias_amplitude
    if args.bias_period is not None:
        bias_kwargs["period"] = args.bias_period
    if bias_kwargs:
        base = cfg.gps_bias
        from dataclasses import replace
        cfg = replace(cfg, gps_bias=GpsBiasModel(
            constant=bias_kwargs.get("constant", base.constant),
            amplitude=bias_kwargs.get("amplitude", base.amplitude),
            period=bias_kwargs.get("period", base.period),
        ))

    scenario = generate(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_map(out / "map.txt", scenario.polylines)
    write_sequence(out / "sequence.txt", scenario.frames)
    write_ground_truth(out / "sequence.gt",
                       [(f.frame_index, p) for f, p in zip(scenario.frames, scenario.truth.poses)])
    oracle = info_profile(scenario)
    print(f"frames={len(scenario.frames)}")
    print(f"landmarks={len(scenario.landmarks)}")
    print(f"max_oracle_s={oracle.max():.6g}")
    print(f"out={out}")
    return 0


def _localize_run(landmarks, frames, engine_cfg):
    engine = LocalizationEngine(landmarks, engine_cfg)
    return engine.run(frames)


def _write_run_outputs(out: Path, result, polylines, render: bool, truth=None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    indices = result.frame_indices()
    bias_trace = [log.bias for log in result.logs]
    write_trajectory_csv(out / "trajectory.csv", indices, result.state.poses, bias_trace)
    write_frames_csv(out / "frames.csv", result.logs)
    steps = np.array([log.step_seconds for log in result.logs])
    lines = [
        f"frames={len(result.logs)}",
        f"mean_step_ms={steps.mean() * 1e3:.3f}",
        f"p99_step_ms={np.percentile(steps, 99) * 1e3:.3f}",
    ]
    if result.last_report is not None:
        lines.append(result.last_report.to_text().rstrip("\n"))
    (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for line in lines:
        print(line)
    if render:
        figures.save_trajectory_figure(out / "trajectory.png", polylines, result.state.poses,
                                       truth_poses=truth)
        figures.save_weight_traces_figure(out / "weights.png", result.logs)


def cmd_localize(args) -> int:
    engine_cfg = _engine_config(args)
    polylines = parse_map(args.map)
    landmarks = build_landmarks(polylines, args.resample_step)
    sequence = parse_sequence(args.sequence)
    result = _localize_run(landmarks, sequence.frames, engine_cfg)
    _write_run_outputs(Path(args.out), result, polylines, render=not args.no_figures)
    return 0


def cmd_evaluate(args) -> int:
    frames_est, poses_est, _ = parse_trajectory_csv(args.estimate)
    gt_entries = parse_ground_truth(args.gt)
    gt_map = dict(gt_entries)
    missing = [f for f in frames_est if f not in gt_map]
    if missing:
        raise ParseError(args.gt, [f"ground truth missing frames {missing[:5]}"])
    if len(frames_est) != len(gt_entries):
        raise ParseError(args.gt, [
            f"length mismatch: estimate has {len(frames_est)} frames, ground truth {len(gt_entries)}"])
    gt_poses = [gt_map[f] for f in frames_est]
    diag = {}
    if args.frames is not None:
        diag = parse_frames_csv(args.frames)
    s = [diag.get(f, {}).get("s", 0.0) for f in frames_est]
    w_a = [diag.get(f, {}).get("w_a", 0.0) for f in frames_est]
    aggregate = "mean" if args.ate_mean else "rms"
    ate = compute_ate(poses_est, gt_poses, frames=frames_est, s=s, w_a=w_a, aggregate=aggregate)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.txt").write_text(ate.to_text(), encoding="utf-8")
    rows = []
    for k, frame in enumerate(frames_est):
        d = diag.get(frame, {})
        rows.append((frame, ate.per_frame[k, 1], ate.per_frame[k, 2], s[k], w_a[k],
                     d.get("w_o", 0.0), d.get("w_p", 0.0)))
    write_perframe_table(out / "perframe.csv", rows)
    print(ate.to_text().rstrip("\n"))
    if not args.no_figures:
        figures.save_error_trace_figure(out / "error_trace.png", ate.per_frame)
    return 0


def cmd_gt_interpolate(args) -> int:
    sequence = parse_sequence(args.sequence)
    keyframes = parse_keyframes(args.keyframes)
    odometry = [f.odometry for f in sequence.frames]
    poses = interpolate_ground_truth(odometry, keyframes)
    indices = [f.frame_index for f in sequence.frames]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_ground_truth(out, list(zip(indices, poses)))
    print(f"frames={len(poses)}")
    print(f"out={out}")
    return 0


def cmd_calibrate_smax(args) -> int:
    polylines = parse_map(args.map)
    landmarks = build_landmarks(polylines, args.resample_step)
    sequence = parse_sequence(args.sequence)
    if args.gt is not None:
        gt = dict(parse_ground_truth(args.gt))
        poses = [gt[f.frame_index] for f in sequence.frames if f.frame_index in gt]
        frames = [f for f in sequence.frames if f.frame_index in gt]
    else:
        cfg = EngineConfig(use_detections=False, estimate_bias=False)
        result = LocalizationEngine(landmarks, cfg).run(sequence.frames)
        poses = result.state.poses
        frames = sequence.frames
    s_max, s_argmax = 0.0, -1
    with threadpool_limits(limits=1):
        for frame, pose in zip(frames, poses):
            if len(frame.detections) == 0:
                continue
            local = crop(landmarks, pose, args.crop_radius)
            if len(local) == 0:
                continue
            s = associate(frame.detections, local, pose, args.assoc_threshold).info_score
            if s > s_max:
                s_max, s_argmax = s, frame.frame_index
    print(f"s_max={s_max:.6g}")
    print(f"s_max_frame={s_argmax}")
    return 0


_ABLATION_CONFIGS = (
    ("phi_a_with_bias", "a", True),
    ("phi_a_no_bias", "a", False),
    ("phi_b_with_bias", "b", True),
    ("phi_b_no_bias", "b", False),
)


def cmd_ablate(args) -> int:
    polylines = parse_map(args.map)
    landmarks = build_landmarks(polylines, args.resample_step)
    sequence = parse_sequence(args.sequence)
    gt_map = dict(parse_ground_truth(args.gt))
    gt_poses = [gt_map[f.frame_index] for f in sequence.frames]

    def one(config):
        name, phi, bias_on = config
        base = _engine_config(args)
        from dataclasses import replace
        weights = WeightConfig(phi_variant=phi,
                               s_max_hint=args.s_max_hint if args.s_max_hint is not None else 60.0,
                               lambda_a=args.lambda_a, lambda_b=args.lambda_b,
                               h=args.h if args.h is not None else 12.0)
        cfg = replace(base, weights=weights, estimate_bias=bias_on)
        result = LocalizationEngine(landmarks, cfg).run(sequence.frames)
        ate = compute_ate(result.state.poses, gt_poses)
        return name, result, ate

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=4) as pool:
        rows = list(pool.map(one, _ABLATION_CONFIGS))
    lines = ["config ate_trans_m ate_rot_deg"]
    for name, result, ate in rows:
        sub = out / name
        _write_stdoutless_outputs(sub, result)
        lines.append(f"{name} {ate.trans_error:.6g} {ate.rot_error:.6g}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    by_name = {name: ate.trans_error for name, _, ate in rows}
    for phi in ("a", "b"):
        with_bias = by_name[f"phi_{phi}_with_bias"]
        without = by_name[f"phi_{phi}_no_bias"]
        verdict = "improves" if with_bias < without else "does NOT improve"
        print(f"bias estimation {verdict} phi_{phi}: {with_bias:.3f} vs {without:.3f}")
    return 0


def _write_stdoutless_outputs(out: Path, result) -> None:
    out.mkdir(parents=True, exist_ok=True)
    indices = result.frame_indices()
    bias_trace = [log.bias for log in result.logs]
    write_trajectory_csv(out / "trajectory.csv", indices, result.state.poses, bias_trace)
    write_frames_csv(out / "frames.csv", result.logs)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boundloc",
        description="Map-based 2D geo-localization with information-driven factor weighting",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic scenario")
    p.add_argument("--preset", choices=sorted(PRESETS), default=None)
    p.add_argument("--course", default=None,
                   help="custom course, e.g. 'straight:20,turn:90,arc:-90:5'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--dropout", type=_dropout_range, action="append", default=None,
                   metavar="FIRST:LAST", help="detection dropout frame range (inclusive)")
    p.add_argument("--gps-noise", type=float, default=None)
    p.add_argument("--detection-noise", type=float, default=None)
    p.add_argument("--odometry-noise", type=_pair, default=None, metavar="SIGMA_T,SIGMA_R")
    p.add_argument("--bias-constant", type=_pair, default=None, metavar="EX,EY")
    p.add_argument("--bias-amplitude", type=float, default=None)
    p.add_argument("--bias-period", type=_positive, default=None)
    p.add_argument("--half-width", type=_positive, default=None)
    p.add_argument("--frame-spacing", type=_positive, default=None)
    p.add_argument("--sensor-range", type=_positive, default=None)
    p.add_argument("--resample-step", type=_positive, default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("localize", help="run the online localization engine")
    p.add_argument("--map", required=True)
    p.add_argument("--sequence", required=True)
    p.add_argument("--out", required=True)
    _add_run_flags(p)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("evaluate", help="trajectory error against ground truth")
    p.add_argument("--estimate", required=True, help="trajectory.csv from localize")
    p.add_argument("--gt", required=True, help="ground-truth .gt file")
    p.add_argument("--frames", default=None, help="frames.csv from localize (optional)")
    p.add_argument("--out", required=True)
    p.add_argument("--ate-mean", action="store_true", help="mean-absolute aggregate instead of RMS")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gt-interpolate", help="interpolate ground truth through keyframes")
    p.add_argument("--sequence", required=True)
    p.add_argument("--keyframes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_gt_interpolate)

    p = sub.add_parser("calibrate-smax", help="report the maximum information score over a sequence")
    p.add_argument("--sequence", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--gt", default=None, help="poses to evaluate at (prior trajectory otherwise)")
    p.add_argument("--assoc-threshold", type=_positive, default=1.0)
    p.add_argument("--crop-radius", type=_positive, default=50.0)
    p.add_argument("--resample-step", type=_positive, default=0.5)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_calibrate_smax)

    p = sub.add_parser("ablate", help="run the four weighting configurations and compare")
    p.add_argument("--map", required=True)
    p.add_argument("--sequence", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    _add_run_flags(p)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _expand_config_file(argv)
    except (OSError, ParseError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigConflict as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ParseError, EngineError, SolverError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
