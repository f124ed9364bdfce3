"""Map-based 2D vehicle geo-localization with information-driven factor
weighting and online GNSS bias estimation."""

from .association import AssociationResult, DetectionSet, IcpConfig, IcpResult, associate, icp_register
from .engine import EngineConfig, EngineError, FrameLog, LocalizationEngine, RunResult
from .evaluation import AteResult, KeyframeSet, compute_ate, interpolate_ground_truth
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
    evaluate_cost,
    solve,
)
from .geometry import Pose2, RelativePose2, between, compose, rotation_frobenius_sq, transform_point, wrap_angle
from .landmark_map import Landmark, LandmarkMap, LocalMap, Polyline, build_landmarks, crop
from .simulator import (
    FrameObservation,
    GpsBiasModel,
    GpsFix,
    GroundTruth,
    Scenario,
    ScenarioConfig,
    generate,
    info_profile,
    preset,
)
from .weighting import FrameWeights, WeightConfig, frame_weights, phi, weight_association

__version__ = "0.1.0"
