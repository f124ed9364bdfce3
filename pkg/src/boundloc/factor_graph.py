"""Weighted nonlinear least squares over a planar trajectory and a GNSS bias.

Four residual families constrain the state:

* odometry: consecutive poses against the measured increment; the rotation
  part enters through the scalar closed form of the squared Frobenius
  distance between 2x2 rotations, so the residual ``2*sqrt(2)*sin(delta/2)``
  squares to exactly ``4*(1 - cos(delta))``.
* prior: pose translation against a GPS fix corrected by a frozen bias
  observation.
* association: detections pushed through the pose against their paired map
  landmarks.
* error window: the bias variable against recent (GPS - frozen position)
  discrepancies.

Each factor weight ``w`` scales its residual block by ``sqrt(w)``, so squared
norms carry the weights exactly. The default odometry convention is
"backward": the translation residual expresses the previous position in the
current frame (the rotation in the residual is the current pose's). The
"forward" convention is the usual relative-pose residual anchored in the
previous frame. Both share one algebraic form: with the "plus" pose b and
"anchor" pose a, the residual is ``R(theta_a)^T (t_b - t_a) - t_meas`` and
``delta = theta_b - theta_a - theta_meas``; backward uses (b, a) =
(previous, current), forward uses (b, a) = (current, previous).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .geometry import Pose2, RelativePose2, wrap_angle

_SQRT2 = math.sqrt(2.0)

ODOMETRY_CONVENTIONS = ("backward", "forward")


class SolverError(RuntimeError):
    """Raised when the normal equations stay unsolvable after damping."""


@dataclass
class TrajectoryState:
    """Estimated poses (one per frame) plus the 2D GNSS bias."""

    poses: list[Pose2] = field(default_factory=list)
    bias: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        self.bias = np.asarray(self.bias, dtype=float).reshape(2).copy()

    def copy(self) -> "TrajectoryState":
        return TrajectoryState(list(self.poses), self.bias.copy())

    def pose_array(self) -> np.ndarray:
        out = np.zeros((len(self.poses), 3))
        for k, p in enumerate(self.poses):
            out[k, 0], out[k, 1], out[k, 2] = p.t[0], p.t[1], p.theta
        return out


@dataclass(frozen=True)
class OdometryFactor:
    """Links poses ``i-1`` and ``i``; ``delta`` is the forward increment
    measured from frame ``i-1`` to frame ``i``."""

    i: int
    delta: RelativePose2
    weight: float


@dataclass(frozen=True)
class PriorFactor:
    i: int
    gps: np.ndarray
    sigma_xy: float
    bias_obs: np.ndarray   # frozen bias observation at factor creation
    weight: float

    def __post_init__(self):
        object.__setattr__(self, "gps", np.asarray(self.gps, dtype=float).reshape(2).copy())
        object.__setattr__(self, "bias_obs", np.asarray(self.bias_obs, dtype=float).reshape(2).copy())


@dataclass(frozen=True)
class AssociationFactor:
    i: int
    detections: np.ndarray  # (K, 2) vehicle frame
    landmarks: np.ndarray   # (K, 2) map frame
    weight: float

    def __post_init__(self):
        object.__setattr__(self, "detections", np.asarray(self.detections, dtype=float).reshape(-1, 2).copy())
        object.__setattr__(self, "landmarks", np.asarray(self.landmarks, dtype=float).reshape(-1, 2).copy())
        if self.detections.shape != self.landmarks.shape:
            raise ValueError("detections and landmarks must pair up one to one")


@dataclass(frozen=True)
class ErrorTerm:
    """One element of the sliding bias-error window."""

    j: int
    gps: np.ndarray
    t_bar: np.ndarray      # frozen position observation at term creation
    weight: float

    def __post_init__(self):
        object.__setattr__(self, "gps", np.asarray(self.gps, dtype=float).reshape(2).copy())
        object.__setattr__(self, "t_bar", np.asarray(self.t_bar, dtype=float).reshape(2).copy())


@dataclass
class FactorSet:
    odometry: list[OdometryFactor] = field(default_factory=list)
    priors: list[PriorFactor] = field(default_factory=list)
    associations: list[AssociationFactor] = field(default_factory=list)
    error_window: list[ErrorTerm] = field(default_factory=list)
    odometry_convention: str = "backward"

    def __post_init__(self):
        if self.odometry_convention not in ODOMETRY_CONVENTIONS:
            raise ValueError(f"unknown odometry convention {self.odometry_convention!r}")

    def count(self) -> int:
        return len(self.odometry) + len(self.priors) + len(self.associations) + len(self.error_window)

    def validate(self, n_poses: int) -> None:
        for f in self.odometry:
            if not (1 <= f.i < n_poses):
                raise ValueError(f"odometry factor references pose {f.i} outside [1, {n_poses})")
        for f in self.priors:
            if not (0 <= f.i < n_poses):
                raise ValueError(f"prior factor references pose {f.i} outside [0, {n_poses})")
        for f in self.associations:
            if not (0 <= f.i < n_poses):
                raise ValueError(f"association factor references pose {f.i} outside [0, {n_poses})")
        for group in (self.odometry, self.priors, self.associations, self.error_window):
            for f in group:
                if not f.weight > 0:
                    raise ValueError(f"factor weight must be positive, got {f.weight}")


@dataclass(frozen=True)
class SolverConfig:
    algorithm: str = "lm"            # "lm" or "gn"
    max_iterations: int = 50
    cost_tolerance: float = 1e-10    # relative cost change
    step_tolerance: float = 1e-12    # max-norm of accepted step
    lm_initial_damping: float = 1e-6
    window_frames: int = 100         # trailing poses kept free in online mode
    error_window_w: int = 50         # bias window keeps w+1 most recent terms

    def __post_init__(self):
        if self.algorithm not in ("lm", "gn"):
            raise ValueError(f"algorithm must be 'lm' or 'gn', got {self.algorithm!r}")
        if self.cost_tolerance <= 0 or self.step_tolerance <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class SolveReport:
    initial_cost: float
    final_cost: float
    iterations: int
    converged: bool
    cost_trace: list[float] = field(default_factory=list)
    message: str = ""

    def to_text(self) -> str:
        lines = [
            f"initial_cost={self.initial_cost:.12g}",
            f"final_cost={self.final_cost:.12g}",
            f"iterations={self.iterations}",
            f"converged={str(self.converged).lower()}",
        ]
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Residuals, one factor at a time. These are the semantic reference; the
# solver assembles the same quantities vectorized.

def _rot_residual(delta: float) -> float:
    return 2.0 * _SQRT2 * math.sin(0.5 * wrap_angle(delta))


def residual_odometry(x_i: Pose2, x_prev: Pose2, meas: RelativePose2) -> tuple[float, np.ndarray]:
    """Backward-convention odometry residual.

    ``meas`` expresses the previous pose in the current frame, so the
    translation part is ``R(theta_i)^T (t_prev - t_i) - meas.t``.
    Returns the unweighted scalar cost and the length-3 residual vector.
    """
    c, s = math.cos(x_i.theta), math.sin(x_i.theta)
    d = x_prev.t - x_i.t
    r = np.array([
        c * d[0] + s * d[1] - meas.t[0],
        -s * d[0] + c * d[1] - meas.t[1],
        _rot_residual(x_prev.theta - x_i.theta - meas.theta),
    ])
    return float(r @ r), r


def residual_odometry_forward(x_i: Pose2, x_prev: Pose2, meas: RelativePose2) -> tuple[float, np.ndarray]:
    """Forward-convention odometry residual anchored in the previous frame:
    ``R(theta_prev)^T (t_i - t_prev) - meas.t``."""
    c, s = math.cos(x_prev.theta), math.sin(x_prev.theta)
    d = x_i.t - x_prev.t
    r = np.array([
        c * d[0] + s * d[1] - meas.t[0],
        -s * d[0] + c * d[1] - meas.t[1],
        _rot_residual(x_i.theta - x_prev.theta - meas.theta),
    ])
    return float(r @ r), r


def residual_prior(x_i: Pose2, gps, bias_obs) -> np.ndarray:
    """Translation against the bias-corrected GPS fix: ``t_i - (gps - bias_obs)``."""
    gps = np.asarray(gps, dtype=float).reshape(2)
    bias_obs = np.asarray(bias_obs, dtype=float).reshape(2)
    return x_i.t - (gps - bias_obs)


def residual_association(x_i: Pose2, pairs) -> np.ndarray:
    """One 2-vector per (detection, landmark) pair: ``R_i d + t_i - l``."""
    det, lmk = _pairs_to_arrays(pairs)
    if det.shape[0] == 0:
        return np.zeros((0, 2))
    return x_i.transform(det) - lmk


def residual_error(bias, window) -> np.ndarray:
    """One 2-vector per window element: ``e - (gps - t_bar)``."""
    bias = np.asarray(bias, dtype=float).reshape(2)
    rows = []
    for item in window:
        if isinstance(item, ErrorTerm):
            gps, t_bar = item.gps, item.t_bar
        else:
            gps, t_bar = (np.asarray(v, dtype=float).reshape(2) for v in item)
        rows.append(bias - (gps - t_bar))
    if not rows:
        return np.zeros((0, 2))
    return np.array(rows)


def _pairs_to_arrays(pairs) -> tuple[np.ndarray, np.ndarray]:
    det, lmk = [], []
    for d, l in pairs:
        det.append(np.asarray(d, dtype=float).reshape(2))
        position = getattr(l, "position", l)
        lmk.append(np.asarray(position, dtype=float).reshape(2))
    if not det:
        return np.zeros((0, 2)), np.zeros((0, 2))
    return np.array(det), np.array(lmk)


# ---------------------------------------------------------------------------
# Vectorized problem assembly.

class LeastSquaresProblem:
    """Stacked residual/Jacobian assembly over the free variables.

    Free variables are the poses at indices >= ``fixed_before`` (3 each, in
    x, y, theta order) followed by the bias (2) when ``estimate_bias``.
    Factors touching only fixed poses contribute a constant and are excluded
    from the stack; entries of retained factors that hit fixed poses are
    dropped from the Jacobian but kept in the residual.
    """

    def __init__(self, state: TrajectoryState, factors: FactorSet, *,
                 fixed_before: int = 0, estimate_bias: bool = True):
        n = len(state.poses)
        factors.validate(n)
        self.n_poses = n
        self.fixed_before = max(0, min(fixed_before, n))
        self.estimate_bias = estimate_bias
        self.n_free_poses = n - self.fixed_before
        self.n_vars = 3 * self.n_free_poses + (2 if estimate_bias else 0)
        self._P0 = state.pose_array()
        self._bias0 = state.bias.copy()

        fb = self.fixed_before

        def cols_of(pose_idx: np.ndarray) -> np.ndarray:
            """(m, 3) columns for x, y, theta of each pose; -1 where fixed."""
            base = 3 * (pose_idx - fb)
            out = base[:, None] + np.array([0, 1, 2])[None, :]
            out[pose_idx < fb] = -1
            return out

        # Odometry: unified plus/anchor form, see module docstring.
        odo = [f for f in factors.odometry if f.i >= fb or f.i - 1 >= fb]
        idx_i = np.array([f.i for f in odo], dtype=int)
        idx_p = idx_i - 1
        backward = factors.odometry_convention == "backward"
        if backward:
            meas = [f.delta.inverse() for f in odo]
            self._odo_plus, self._odo_anchor = idx_p, idx_i
        else:
            meas = [f.delta for f in odo]
            self._odo_plus, self._odo_anchor = idx_i, idx_p
        self._odo_meas = np.array([[m.t[0], m.t[1], m.theta] for m in meas]).reshape(-1, 3)
        self._odo_sw = np.sqrt(np.array([f.weight for f in odo], dtype=float))

        priors = [f for f in factors.priors if f.i >= fb]
        self._pri_i = np.array([f.i for f in priors], dtype=int)
        self._pri_target = np.array([f.gps - f.bias_obs for f in priors]).reshape(-1, 2)
        self._pri_sw = np.sqrt(np.array([f.weight for f in priors], dtype=float))

        assoc = [f for f in factors.associations if f.i >= fb and f.detections.shape[0] > 0]
        if assoc:
            self._as_i = np.concatenate([np.full(f.detections.shape[0], f.i, dtype=int) for f in assoc])
            self._as_det = np.concatenate([f.detections for f in assoc])
            self._as_lmk = np.concatenate([f.landmarks for f in assoc])
            self._as_sw = np.concatenate([
                np.full(f.detections.shape[0], math.sqrt(f.weight)) for f in assoc
            ])
        else:
            self._as_i = np.zeros(0, dtype=int)
            self._as_det = np.zeros((0, 2))
            self._as_lmk = np.zeros((0, 2))
            self._as_sw = np.zeros(0)

        if estimate_bias:
            terms = factors.error_window
            self._err_target = np.array([t.gps - t.t_bar for t in terms]).reshape(-1, 2)
            self._err_sw = np.sqrt(np.array([t.weight for t in terms], dtype=float))
        else:
            self._err_target = np.zeros((0, 2))
            self._err_sw = np.zeros(0)

        n_odo, n_pri = idx_i.size, self._pri_i.size
        n_as, n_err = self._as_i.size, self._err_sw.size
        self._row_odo = 0
        self._row_pri = 3 * n_odo
        self._row_as = self._row_pri + 2 * n_pri
        self._row_err = self._row_as + 2 * n_as
        self.n_rows = self._row_err + 2 * n_err

        # Static sparsity pattern; only the values change between iterations.
        # Entry order here must match _values() exactly.
        rows, cols = [], []
        cp = cols_of(self._odo_plus)
        ca = cols_of(self._odo_anchor)
        r0 = self._row_odo + 3 * np.arange(n_odo)
        rows.extend([r0, r0, r0, r0, r0,
                     r0 + 1, r0 + 1, r0 + 1, r0 + 1, r0 + 1,
                     r0 + 2, r0 + 2])
        cols.extend([cp[:, 0], cp[:, 1], ca[:, 0], ca[:, 1], ca[:, 2],
                     cp[:, 0], cp[:, 1], ca[:, 0], ca[:, 1], ca[:, 2],
                     cp[:, 2], ca[:, 2]])

        pc = cols_of(self._pri_i)
        rp = self._row_pri + 2 * np.arange(n_pri)
        rows.extend([rp, rp + 1])
        cols.extend([pc[:, 0], pc[:, 1]])

        ac = cols_of(self._as_i)
        ra = self._row_as + 2 * np.arange(n_as)
        rows.extend([ra, ra, ra + 1, ra + 1])
        cols.extend([ac[:, 0], ac[:, 2], ac[:, 1], ac[:, 2]])

        if estimate_bias and n_err:
            re = self._row_err + 2 * np.arange(n_err)
            bx, by = self.n_vars - 2, self.n_vars - 1
            rows.extend([re, re + 1])
            cols.extend([np.full(n_err, bx), np.full(n_err, by)])

        if rows:
            rows = np.concatenate(rows)
            cols = np.concatenate(cols)
        else:
            rows = np.zeros(0, dtype=int)
            cols = np.zeros(0, dtype=int)
        self._keep = cols >= 0
        rows_kept = rows[self._keep]
        cols_kept = cols[self._keep]
        # Pre-sorted CSR structure: within a factor no (row, col) repeats, so
        # only the data vector changes between iterations.
        order = np.lexsort((cols_kept, rows_kept))
        self._csr_order = order
        self._csr_indices = cols_kept[order].astype(np.int32)
        counts = np.bincount(rows_kept, minlength=self.n_rows) if rows_kept.size else np.zeros(self.n_rows, dtype=int)
        self._csr_indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)

    # -- packing -------------------------------------------------------------

    def initial_vector(self) -> np.ndarray:
        x = self._P0[self.fixed_before:].ravel()
        if self.estimate_bias:
            x = np.concatenate([x, self._bias0])
        return x.copy()

    def expand(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Free vector -> full (n, 3) pose array and bias."""
        P = self._P0.copy()
        k = 3 * self.n_free_poses
        if self.n_free_poses:
            P[self.fixed_before:] = np.asarray(x[:k], dtype=float).reshape(-1, 3)
        bias = np.asarray(x[k:k + 2], dtype=float) if self.estimate_bias else self._bias0
        return P, bias

    def wrap(self, x: np.ndarray) -> np.ndarray:
        x = x.copy()
        k = 3 * self.n_free_poses
        if k:
            thetas = x[2:k:3]
            x[2:k:3] = np.arctan2(np.sin(thetas), np.cos(thetas))
        return x

    def to_state(self, x: np.ndarray) -> TrajectoryState:
        P, bias = self.expand(x)
        poses = [Pose2(P[k, 2], P[k, :2]) for k in range(self.n_poses)]
        return TrajectoryState(poses, bias.copy())

    # -- residuals and Jacobian ------------------------------------------------

    def _odo_geometry(self, P: np.ndarray):
        ang = P[self._odo_anchor, 2]
        d = P[self._odo_plus, :2] - P[self._odo_anchor, :2]
        delta = P[self._odo_plus, 2] - P[self._odo_anchor, 2] - self._odo_meas[:, 2]
        delta = np.arctan2(np.sin(delta), np.cos(delta))
        return np.cos(ang), np.sin(ang), d, delta

    def residuals(self, x: np.ndarray) -> np.ndarray:
        P, bias = self.expand(x)
        r = np.zeros(self.n_rows)
        if self._odo_plus.size:
            c, s, d, delta = self._odo_geometry(P)
            block = np.empty((self._odo_plus.size, 3))
            block[:, 0] = c * d[:, 0] + s * d[:, 1] - self._odo_meas[:, 0]
            block[:, 1] = -s * d[:, 0] + c * d[:, 1] - self._odo_meas[:, 1]
            block[:, 2] = 2.0 * _SQRT2 * np.sin(0.5 * delta)
            r[self._row_odo:self._row_pri] = (block * self._odo_sw[:, None]).ravel()
        if self._pri_i.size:
            block = P[self._pri_i, :2] - self._pri_target
            r[self._row_pri:self._row_as] = (block * self._pri_sw[:, None]).ravel()
        if self._as_i.size:
            ang = P[self._as_i, 2]
            c, s = np.cos(ang), np.sin(ang)
            block = np.empty((self._as_i.size, 2))
            block[:, 0] = c * self._as_det[:, 0] - s * self._as_det[:, 1] + P[self._as_i, 0] - self._as_lmk[:, 0]
            block[:, 1] = s * self._as_det[:, 0] + c * self._as_det[:, 1] + P[self._as_i, 1] - self._as_lmk[:, 1]
            r[self._row_as:self._row_err] = (block * self._as_sw[:, None]).ravel()
        if self._err_sw.size:
            block = bias[None, :] - self._err_target
            r[self._row_err:] = (block * self._err_sw[:, None]).ravel()
        return r

    def _values(self, x: np.ndarray) -> np.ndarray:
        P, _ = self.expand(x)
        parts = []
        if self._odo_plus.size:
            sw = self._odo_sw
            c, s, d, delta = self._odo_geometry(P)
            cd = _SQRT2 * np.cos(0.5 * delta)
            dth0 = -s * d[:, 0] + c * d[:, 1]
            dth1 = -c * d[:, 0] - s * d[:, 1]
            parts.extend([c * sw, s * sw, -c * sw, -s * sw, dth0 * sw,
                          -s * sw, c * sw, s * sw, -c * sw, dth1 * sw,
                          cd * sw, -cd * sw])
        if self._pri_i.size:
            parts.extend([self._pri_sw, self._pri_sw])
        if self._as_i.size:
            ang = P[self._as_i, 2]
            c, s = np.cos(ang), np.sin(ang)
            sw = self._as_sw
            parts.extend([
                sw,
                (-s * self._as_det[:, 0] - c * self._as_det[:, 1]) * sw,
                sw,
                (c * self._as_det[:, 0] - s * self._as_det[:, 1]) * sw,
            ])
        if self.estimate_bias and self._err_sw.size:
            parts.extend([self._err_sw, self._err_sw])
        if not parts:
            return np.zeros(0)
        return np.concatenate(parts)

    def jacobian(self, x: np.ndarray) -> sp.csr_matrix:
        vals = self._values(x)[self._keep][self._csr_order]
        return sp.csr_matrix((vals, self._csr_indices, self._csr_indptr),
                             shape=(self.n_rows, self.n_vars))

    def cost(self, x: np.ndarray) -> float:
        r = self.residuals(x)
        return float(r @ r)

    def variable_name(self, col: int) -> str:
        if self.estimate_bias and col >= 3 * self.n_free_poses:
            return "bias_x" if col == 3 * self.n_free_poses else "bias_y"
        pose = self.fixed_before + col // 3
        return f"pose[{pose}].{('x', 'y', 'theta')[col % 3]}"


def evaluate_cost(state: TrajectoryState, factors: FactorSet, *, estimate_bias: bool = True) -> float:
    """Total weighted squared-residual cost of the full factor set."""
    prob = LeastSquaresProblem(state, factors, fixed_before=0, estimate_bias=estimate_bias)
    return prob.cost(prob.initial_vector())


_LM_MAX_DAMPING = 1e12


def solve(
    state: TrajectoryState,
    factors: FactorSet,
    cfg: SolverConfig = SolverConfig(),
    *,
    fixed_before: int = 0,
    estimate_bias: bool = True,
) -> tuple[TrajectoryState, SolveReport]:
    """Minimize the weighted squared residual over the free variables.

    Iterates damped normal-equation steps (plain Gauss-Newton when
    ``algorithm='gn'`` and the step succeeds; Levenberg damping otherwise)
    until the relative cost change or the step falls under tolerance. Steps
    are only accepted when they do not increase the cost, so the returned
    cost trace is non-increasing. Singular normal equations are retried with
    increasing damping; if the system still cannot be factorized, a
    ``SolverError`` names the unconstrained variables.
    """
    if factors.count() == 0:
        raise ValueError("cannot solve an empty factor set")
    prob = LeastSquaresProblem(state, factors, fixed_before=fixed_before, estimate_bias=estimate_bias)
    x = prob.initial_vector()
    r = prob.residuals(x)
    if not np.all(np.isfinite(r)):
        raise SolverError("non-finite residuals at the initial state")
    cost = float(r @ r)
    trace = [cost]
    report = SolveReport(initial_cost=cost, final_cost=cost, iterations=0,
                         converged=False, cost_trace=trace)
    if prob.n_vars == 0 or cost == 0.0:
        report.converged = True
        report.message = "already optimal"
        return prob.to_state(x), report

    lm = cfg.algorithm == "lm"
    damping = cfg.lm_initial_damping if lm else 0.0
    eye = np.eye(prob.n_vars)

    for iteration in range(1, cfg.max_iterations + 1):
        J = prob.jacobian(x)
        g = J.T @ r
        if not np.all(np.isfinite(g)):
            raise SolverError("non-finite gradient during solve")
        H = (J.T @ J).toarray()
        accepted = False
        for _ in range(60):
            try:
                chol = scipy.linalg.cho_factor(H + damping * eye, lower=True, check_finite=False)
            except scipy.linalg.LinAlgError:
                damping = max(damping * 10.0, 1e-10)
                if damping > _LM_MAX_DAMPING:
                    _raise_singular(prob, H)
                continue
            step = scipy.linalg.cho_solve(chol, -g, check_finite=False)
            x_new = prob.wrap(x + step)
            r_new = prob.residuals(x_new)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                accepted = True
                break
            damping = max(damping * 10.0, 1e-10)
            if damping > _LM_MAX_DAMPING:
                break
        report.iterations = iteration
        if not accepted:
            # No descent step exists at any damping: we are at a minimum
            # (or the model is flat); stop with the best point so far.
            report.converged = True
            report.message = "no descent step found"
            break
        improvement = cost - cost_new
        step_norm = float(np.max(np.abs(step))) if step.size else 0.0
        x, r, cost = x_new, r_new, cost_new
        trace.append(cost)
        damping = max(damping / 3.0, 1e-12) if lm else 0.0
        if cost == 0.0 or improvement <= cfg.cost_tolerance * max(cost, 1e-300):
            report.converged = True
            break
        if step_norm <= cfg.step_tolerance:
            report.converged = True
            report.message = "step below tolerance"
            break

    report.final_cost = cost
    report.cost_trace = trace
    return prob.to_state(x), report


def _raise_singular(prob: LeastSquaresProblem, H: np.ndarray):
    diag = np.abs(np.diag(H))
    scale = diag.max() if diag.size else 0.0
    loose = [prob.variable_name(k) for k in np.nonzero(diag <= 1e-12 * max(scale, 1.0))[0]]
    detail = ", ".join(loose) if loose else "unknown"
    raise SolverError(f"normal equations singular even with damping; underconstrained variables: {detail}")
