"""Online localization: per-frame association, weighting, and window solves.

The per-frame cycle: predict the pose from odometry, crop the map, register
detections (ICP) and associate them, squash the information score into
factor weights, append the new factors (freezing the current bias estimate
into the new prior factor and the current position estimate into the new
bias-error term), then re-solve the trailing window of poses plus the bias
with older poses held constant.

The engine anchors itself on GPS: the first pose position comes from the
first fix, the initial heading from comparing the GPS chord with the
odometry chord over the first few meters of travel.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from threadpoolctl import threadpool_limits

from .association import IcpConfig, associate, icp_register
from .factor_graph import (
    AssociationFactor,
    ErrorTerm,
    FactorSet,
    OdometryFactor,
    PriorFactor,
    SolveReport,
    SolverConfig,
    SolverError,
    TrajectoryState,
    solve,
)
from .geometry import Pose2, compose, wrap_angle
from .landmark_map import LandmarkMap, crop
from .simulator import FrameObservation
from .weighting import FrameWeights, WeightConfig, frame_weights


class EngineError(RuntimeError):
    """Raised when a run cannot start or continue at all."""


@dataclass
class EngineConfig:
    weights: WeightConfig = field(default_factory=WeightConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    icp: IcpConfig = field(default_factory=IcpConfig)
    association_threshold: float = 1.0
    crop_radius: float = 50.0
    estimate_bias: bool = True
    use_detections: bool = True
    fixed_weight: float | None = None   # all factor weights pinned when set
    odometry_convention: str = "backward"
    init_min_baseline: float = 3.0      # m of travel before the heading anchor


@dataclass
class FrameLog:
    frame_index: int
    s: float
    pair_count: int
    w_a: float
    w_o: float
    w_p: float
    bias: np.ndarray
    icp_converged: bool | None
    solver_iterations: int
    step_seconds: float
    note: str = ""


@dataclass
class RunResult:
    state: TrajectoryState
    logs: list[FrameLog]
    factors: FactorSet
    last_report: SolveReport | None

    def frame_indices(self) -> list[int]:
        return [log.frame_index for log in self.logs]


class LocalizationEngine:
    """Stateful per-frame estimator over one sequence."""

    def __init__(self, landmarks: LandmarkMap, config: EngineConfig | None = None):
        self.map = landmarks
        self.cfg = config or EngineConfig()
        self.state = TrajectoryState()
        self.factors = FactorSet(odometry_convention=self.cfg.odometry_convention)
        self.logs: list[FrameLog] = []
        self.last_report: SolveReport | None = None
        self._pending: list[FrameObservation] = []
        self._initialized = False
        self._init_pose: Pose2 | None = None
        self._gps_count = 0

    # -- lifecycle -----------------------------------------------------------

    def step(self, frame: FrameObservation) -> None:
        """Feed one frame; frames must arrive in index order."""
        if self._initialized:
            self._process(frame)
            return
        self._pending.append(frame)
        if self._try_initialize(require_baseline=True):
            self._drain_pending()

    def run(self, frames: Iterable[FrameObservation]) -> RunResult:
        # Pin linear algebra to one thread: deterministic results and no
        # per-call thread wakeup latency on the small window-sized systems.
        with threadpool_limits(limits=1):
            for frame in frames:
                self.step(frame)
            self.finalize()
        return RunResult(self.state.copy(), list(self.logs), self.factors, self.last_report)

    def finalize(self) -> None:
        """Flush buffered frames, relaxing the heading-baseline requirement."""
        if self._initialized or not self._pending:
            if not self._initialized and not self._pending:
                raise EngineError("no frames were supplied")
            return
        if not self._try_initialize(require_baseline=False):
            raise EngineError("no GPS fix in the sequence; cannot anchor the trajectory")
        self._drain_pending()

    # -- initialization --------------------------------------------------------

    def _odometry_chain(self) -> list[Pose2]:
        chain = [Pose2.identity()]
        for frame in self._pending[1:]:
            chain.append(compose(chain[-1], frame.odometry))
        return chain

    def _try_initialize(self, require_baseline: bool) -> bool:
        fixes = [(k, f.gps.position) for k, f in enumerate(self._pending) if f.gps is not None]
        if not fixes or (require_baseline and len(fixes) < 2):
            return False
        chain = self._odometry_chain()
        ka, ga = fixes[0]
        theta0 = 0.0
        found = not require_baseline
        for kb, gb in fixes[1:]:
            baseline = chain[kb].t - chain[ka].t
            if np.linalg.norm(baseline) >= self.cfg.init_min_baseline:
                gps_chord = gb - ga
                theta0 = wrap_angle(
                    math.atan2(gps_chord[1], gps_chord[0]) - math.atan2(baseline[1], baseline[0])
                )
                found = True
                break
        if not found:
            return False
        anchor_rot = Pose2(theta0, np.zeros(2)).rotation()
        self._init_pose = Pose2(theta0, ga - anchor_rot @ chain[ka].t)
        self._initialized = True
        return True

    def _drain_pending(self) -> None:
        pending, self._pending = self._pending, []
        for frame in pending:
            self._process(frame)

    # -- the per-frame cycle -----------------------------------------------------

    def _process(self, frame: FrameObservation) -> None:
        start = time.perf_counter()
        note = ""
        if not self.state.poses:
            pred = self._init_pose
        else:
            pred = compose(self.state.poses[-1], frame.odometry)
        i = len(self.state.poses)
        self.state.poses.append(pred)

        s, k, assoc, icp_flag = 0.0, 0, None, None
        registered_t = None     # map-registered position, when available
        if self.cfg.use_detections and len(frame.detections) > 0:
            local = crop(self.map, pred, self.cfg.crop_radius)
            if len(local) > 0:
                icp = icp_register(frame.detections, local, pred, self.cfg.icp)
                icp_flag = icp.converged
                if icp.converged:
                    correction = compose(icp.pose, pred.inverse())
                    assoc = associate(
                        frame.detections, local, icp.pose,
                        self.cfg.association_threshold, icp_transform=correction,
                    )
                    if assoc.pair_count == 0:
                        assoc = None
                    else:
                        s, k = assoc.info_score, assoc.pair_count
                        registered_t = icp.pose.t
                else:
                    note = "icp unconverged"
            else:
                note = "no landmarks within crop radius"

        sigma = frame.gps.sigma_xy if frame.gps is not None else 0.0
        if self.cfg.fixed_weight is not None:
            w = FrameWeights.uniform(self.cfg.fixed_weight)
        else:
            w = frame_weights(s, k, sigma, self.cfg.weights)

        if i > 0:
            self.factors.odometry.append(OdometryFactor(i, frame.odometry, w.w_o))
        if assoc is not None:
            self.factors.associations.append(
                AssociationFactor(i, assoc.detections, assoc.landmark_positions, w.w_a)
            )
        if frame.gps is not None:
            bias_obs = self.state.bias.copy() if self.cfg.estimate_bias else np.zeros(2)
            self.factors.priors.append(
                PriorFactor(i, frame.gps.position, sigma, bias_obs, w.w_p)
            )
            if self.cfg.estimate_bias:
                # The frozen position observation is the map-registered
                # position when the frame counts as informative (w_a past its
                # midpoint), the odometry prediction otherwise. Ambiguous
                # stretches then coast on the prior-corrected chain instead
                # of leaking registration slip into the bias.
                if registered_t is not None and w.w_a >= 0.5:
                    t_bar = registered_t.copy()
                else:
                    t_bar = pred.t.copy()
                self.factors.error_window.append(
                    ErrorTerm(self._gps_count, frame.gps.position, t_bar, w.w_e)
                )
                keep = self.cfg.solver.error_window_w + 1
                if len(self.factors.error_window) > keep:
                    del self.factors.error_window[: len(self.factors.error_window) - keep]
                self._gps_count += 1

        iterations = 0
        if self.factors.count() > 0:
            fixed_before = max(0, len(self.state.poses) - self.cfg.solver.window_frames)
            try:
                self.state, report = solve(
                    self.state, self.factors, self.cfg.solver,
                    fixed_before=fixed_before, estimate_bias=self.cfg.estimate_bias,
                )
                self.last_report = report
                iterations = report.iterations
            except SolverError as exc:
                note = f"{note}; solver: {exc}" if note else f"solver: {exc}"

        self.logs.append(FrameLog(
            frame_index=frame.frame_index,
            s=s, pair_count=k,
            w_a=w.w_a, w_o=w.w_o, w_p=w.w_p,
            bias=self.state.bias.copy(),
            icp_converged=icp_flag,
            solver_iterations=iterations,
            step_seconds=time.perf_counter() - start,
            note=note,
        ))
