import math

import numpy as np
import pytest
import scipy.optimize

from boundloc.factor_graph import (
    AssociationFactor,
    ErrorTerm,
    FactorSet,
    LeastSquaresProblem,
    OdometryFactor,
    PriorFactor,
    SolveReport,
    SolverConfig,
    SolverError,
    TrajectoryState,
    evaluate_cost,
    residual_association,
    residual_error,
    residual_odometry,
    residual_odometry_forward,
    residual_prior,
    solve,
)
from boundloc.geometry import Pose2, RelativePose2, between, compose, wrap_angle
from boundloc.landmark_map import Landmark


class TestResidualOdometry:
    def test_zero_at_identity(self):
        p = Pose2(0.3, (1.0, 2.0))
        cost, r = residual_odometry(p, p, RelativePose2())
        assert cost == pytest.approx(0.0, abs=1e-24)
        np.testing.assert_allclose(r, 0.0, atol=1e-12)

    def test_worked_example(self):
        cost, r = residual_odometry(
            Pose2.identity(), Pose2(0.0, (1.0, 0.0)), RelativePose2(0.0, (1.0, 0.0))
        )
        assert cost == pytest.approx(0.0, abs=1e-24)

    def test_quarter_turn_rotation_cost(self):
        # zero translation residual, angle delta of pi/2 costs 4(1 - cos) = 4
        cost, r = residual_odometry(
            Pose2.identity(), Pose2(math.pi / 2, (0.0, 0.0)), RelativePose2(0.0, (0.0, 0.0))
        )
        assert cost == pytest.approx(4.0, abs=1e-12)
        assert r[0] == r[1] == 0.0

    def test_cost_equals_translation_plus_frobenius(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            x_i = Pose2(rng.uniform(-3, 3), rng.normal(size=2) * 4)
            x_p = Pose2(rng.uniform(-3, 3), rng.normal(size=2) * 4)
            meas = RelativePose2(rng.uniform(-3, 3), rng.normal(size=2))
            cost, r = residual_odometry(x_i, x_p, meas)
            c, s = math.cos(x_i.theta), math.sin(x_i.theta)
            d = x_p.t - x_i.t
            rt = np.array([c * d[0] + s * d[1], -s * d[0] + c * d[1]]) - meas.t
            frob = 4.0 * (1.0 - math.cos(x_p.theta - x_i.theta - meas.theta))
            assert cost == pytest.approx(float(rt @ rt) + frob, rel=1e-12, abs=1e-12)
            assert cost == pytest.approx(float(r @ r), rel=1e-12, abs=1e-12)

    def test_forward_convention_consistency(self):
        # both conventions vanish exactly on a consistent pair
        rng = np.random.default_rng(3)
        for _ in range(50):
            a = Pose2(rng.uniform(-3, 3), rng.normal(size=2) * 4)
            delta = RelativePose2(rng.uniform(-2, 2), rng.normal(size=2))
            b = compose(a, delta)
            cost_f, _ = residual_odometry_forward(b, a, delta)
            cost_b, _ = residual_odometry(b, a, delta.inverse())
            assert cost_f == pytest.approx(0.0, abs=1e-20)
            assert cost_b == pytest.approx(0.0, abs=1e-20)


class TestResidualPrior:
    def test_exact_fix(self):
        assert np.allclose(residual_prior(Pose2(0.0, (2.0, 3.0)), (2.0, 3.0), (0.0, 0.0)), 0.0)

    def test_bias_cancels(self):
        r = residual_prior(Pose2(0.0, (0.0, 0.0)), (1.5, -0.8), (1.5, -0.8))
        np.testing.assert_allclose(r, 0.0, atol=1e-15)

    def test_worked_example(self):
        r = residual_prior(Pose2(0.0, (1.0, 0.0)), (2.0, 0.0), (0.5, 0.0))
        np.testing.assert_allclose(r, (-0.5, 0.0), atol=1e-15)


class TestResidualAssociation:
    def test_coincident_pair(self):
        pose = Pose2(0.7, (1.0, -1.0))
        d = np.array([2.0, 0.5])
        l = pose.transform(d)
        r = residual_association(pose, [(d, l)])
        np.testing.assert_allclose(r, 0.0, atol=1e-12)

    def test_direct_subtraction(self):
        r = residual_association(Pose2.identity(), [((1.0, 0.0), (1.0, 1.0))])
        np.testing.assert_allclose(r, [[0.0, -1.0]])

    def test_accepts_landmark_objects(self):
        lm = Landmark((1.0, 1.0), 0.3)
        r = residual_association(Pose2.identity(), [((1.0, 0.0), lm)])
        np.testing.assert_allclose(r, [[0.0, -1.0]])

    def test_sum_matches_independent_scalar(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            pose = Pose2(rng.uniform(-3, 3), rng.normal(size=2) * 3)
            pairs = [(rng.normal(size=2) * 2, rng.normal(size=2) * 2) for _ in range(6)]
            r = residual_association(pose, pairs)
            # independent evaluation with explicit trig
            c, s = math.cos(pose.theta), math.sin(pose.theta)
            total = 0.0
            for d, l in pairs:
                wx = c * d[0] - s * d[1] + pose.t[0]
                wy = s * d[0] + c * d[1] + pose.t[1]
                total += (wx - l[0]) ** 2 + (wy - l[1]) ** 2
            assert float(np.sum(r ** 2)) == pytest.approx(total, rel=1e-12)


class TestResidualError:
    def test_zero_offsets(self):
        r = residual_error((0.0, 0.0), [((1.0, 2.0), (1.0, 2.0)), ((3.0, 4.0), (3.0, 4.0))])
        np.testing.assert_allclose(r, 0.0)

    def test_constant_offset_minimized_at_offset(self):
        window = [((1.5, -0.8), (0.0, 0.0)), ((2.5, -0.8), (1.0, 0.0))]
        r = residual_error((1.5, -0.8), window)
        np.testing.assert_allclose(r, 0.0, atol=1e-15)

    def test_mixed_offsets_solved_to_mean(self):
        state = TrajectoryState([], (0.0, 0.0))
        factors = FactorSet(error_window=[
            ErrorTerm(0, (1.0, 0.0), (0.0, 0.0), 1.0),
            ErrorTerm(1, (2.0, 0.0), (0.0, 0.0), 1.0),
        ])
        out, report = solve(state, factors)
        np.testing.assert_allclose(out.bias, (1.5, 0.0), atol=1e-9)
        assert report.converged

    def test_empty_window_no_rows(self):
        assert residual_error((1.0, 1.0), []).shape == (0, 2)


# ---------------------------------------------------------------------------


def random_state_and_factors(rng, n_poses=3, weights_scale=1.0):
    poses = [Pose2(rng.uniform(-2.5, 2.5), rng.normal(size=2) * 4.0) for _ in range(n_poses)]
    state = TrajectoryState(poses, rng.normal(size=2))
    factors = FactorSet()
    for i in range(1, n_poses):
        delta = RelativePose2(rng.uniform(-1.0, 1.0), rng.normal(size=2))
        factors.odometry.append(OdometryFactor(i, delta, weights_scale * rng.uniform(0.3, 3.0)))
    for i in range(n_poses):
        factors.priors.append(PriorFactor(
            i, rng.normal(size=2) * 5.0, rng.uniform(0, 1),
            rng.normal(size=2) * 0.5, weights_scale * rng.uniform(0.3, 3.0)))
        k = int(rng.integers(1, 4))
        factors.associations.append(AssociationFactor(
            i, rng.normal(size=(k, 2)) * 3.0, rng.normal(size=(k, 2)) * 3.0,
            weights_scale * rng.uniform(0.3, 3.0)))
    for j in range(3):
        factors.error_window.append(ErrorTerm(
            j, rng.normal(size=2) * 5.0, rng.normal(size=2) * 5.0,
            weights_scale * rng.uniform(0.3, 3.0)))
    return state, factors


def fd_jacobian(prob, x, h=1e-6):
    J = np.zeros((prob.n_rows, prob.n_vars))
    for k in range(prob.n_vars):
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        J[:, k] = (prob.residuals(xp) - prob.residuals(xm)) / (2.0 * h)
    return J


class TestJacobians:
    @pytest.mark.parametrize("convention", ["backward", "forward"])
    def test_matches_central_differences(self, convention):
        rng = np.random.default_rng(101)
        for _ in range(120):
            state, factors = random_state_and_factors(rng)
            factors.odometry_convention = convention
            prob = LeastSquaresProblem(state, factors)
            x = prob.initial_vector()
            J = prob.jacobian(x).toarray()
            J_fd = fd_jacobian(prob, x)
            np.testing.assert_allclose(J, J_fd, rtol=1e-5, atol=1e-5)

    def test_fixed_poses_drop_columns(self):
        rng = np.random.default_rng(7)
        state, factors = random_state_and_factors(rng, n_poses=4)
        prob = LeastSquaresProblem(state, factors, fixed_before=2)
        assert prob.n_vars == 3 * 2 + 2
        x = prob.initial_vector()
        np.testing.assert_allclose(prob.jacobian(x).toarray(), fd_jacobian(prob, x), rtol=1e-5, atol=1e-5)

    def test_no_bias_variable(self):
        rng = np.random.default_rng(9)
        state, factors = random_state_and_factors(rng)
        prob = LeastSquaresProblem(state, factors, estimate_bias=False)
        assert prob.n_vars == 3 * 3
        x = prob.initial_vector()
        np.testing.assert_allclose(prob.jacobian(x).toarray(), fd_jacobian(prob, x), rtol=1e-5, atol=1e-5)


class TestCostAssembly:
    def test_vectorized_cost_matches_factor_by_factor(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            state, factors = random_state_and_factors(rng)
            total = 0.0
            for f in factors.odometry:
                cost, _ = residual_odometry(state.poses[f.i], state.poses[f.i - 1], f.delta.inverse())
                total += f.weight * cost
            for f in factors.priors:
                r = residual_prior(state.poses[f.i], f.gps, f.bias_obs)
                total += f.weight * float(r @ r)
            for f in factors.associations:
                r = residual_association(state.poses[f.i], list(zip(f.detections, f.landmarks)))
                total += f.weight * float(np.sum(r ** 2))
            r = residual_error(state.bias, factors.error_window)
            total += float(np.sum(np.array([t.weight for t in factors.error_window])[:, None] * r ** 2))
            assert evaluate_cost(state, factors) == pytest.approx(total, rel=1e-10)


def backward_measurement(delta):
    """Explicit-trig conversion of a forward increment to the backward form."""
    c, s = math.cos(-delta.theta), math.sin(-delta.theta)
    mtx = -(c * delta.t[0] - s * delta.t[1])
    mty = -(s * delta.t[0] + c * delta.t[1])
    return mtx, mty, -delta.theta


def scalar_cost_reference(xvec, factors, n_poses, with_bias=True):
    """Plain-python objective written directly from the four cost formulas."""
    poses = xvec[: 3 * n_poses].reshape(n_poses, 3)
    bias = xvec[3 * n_poses: 3 * n_poses + 2] if with_bias else np.zeros(2)
    total = 0.0
    for f in factors.odometry:
        xi, xp = poses[f.i], poses[f.i - 1]
        mtx, mty, mth = backward_measurement(f.delta)
        c, s = math.cos(xi[2]), math.sin(xi[2])
        dx, dy = xp[0] - xi[0], xp[1] - xi[1]
        rt0 = c * dx + s * dy - mtx
        rt1 = -s * dx + c * dy - mty
        total += f.weight * (rt0 ** 2 + rt1 ** 2)
        total += f.weight * 4.0 * (1.0 - math.cos(xp[2] - xi[2] - mth))
    for f in factors.priors:
        xi = poses[f.i]
        total += f.weight * ((xi[0] - (f.gps[0] - f.bias_obs[0])) ** 2
                             + (xi[1] - (f.gps[1] - f.bias_obs[1])) ** 2)
    for f in factors.associations:
        xi = poses[f.i]
        c, s = math.cos(xi[2]), math.sin(xi[2])
        for d, l in zip(f.detections, f.landmarks):
            wx = c * d[0] - s * d[1] + xi[0]
            wy = s * d[0] + c * d[1] + xi[1]
            total += f.weight * ((wx - l[0]) ** 2 + (wy - l[1]) ** 2)
    for t in factors.error_window:
        total += t.weight * ((bias[0] - (t.gps[0] - t.t_bar[0])) ** 2
                             + (bias[1] - (t.gps[1] - t.t_bar[1])) ** 2)
    return total


def toy_graph(rng, n_poses=3):
    """Toy chain: noisy odometry plus priors, modest weights, known init."""
    truth = [Pose2(0.0, (0.0, 0.0))]
    for _ in range(1, n_poses):
        truth.append(compose(truth[-1], RelativePose2(rng.uniform(-0.5, 0.5), (1.0, rng.uniform(-0.3, 0.3)))))
    factors = FactorSet()
    for i in range(1, n_poses):
        delta = between(truth[i - 1], truth[i])
        noisy = RelativePose2(delta.theta + rng.normal() * 0.05, delta.t + rng.normal(size=2) * 0.05)
        factors.odometry.append(OdometryFactor(i, noisy, rng.uniform(0.5, 2.0)))
    for i in range(n_poses):
        factors.priors.append(PriorFactor(
            i, truth[i].t + rng.normal(size=2) * 0.2, 0.3, np.zeros(2), rng.uniform(0.5, 2.0)))
    init = [truth[0]]
    for f in factors.odometry:
        init.append(compose(init[-1], f.delta))
    return TrajectoryState(init, np.zeros(2)), factors


class TestSolve:
    def test_already_optimal_zero_iterations(self):
        poses = [Pose2(0.0, (0.0, 0.0)), Pose2(0.0, (1.0, 0.0))]
        factors = FactorSet()
        factors.odometry.append(OdometryFactor(1, between(poses[0], poses[1]), 2.0))
        factors.priors.append(PriorFactor(0, (0.0, 0.0), 0.0, (0.0, 0.0), 1.0))
        factors.priors.append(PriorFactor(1, (1.0, 0.0), 0.0, (0.0, 0.0), 1.0))
        state = TrajectoryState(poses)
        out, report = solve(state, factors, estimate_bias=False)
        assert report.iterations == 0
        assert report.final_cost == 0.0
        assert report.converged

    def test_single_pose_prior_only(self):
        state = TrajectoryState([Pose2(0.2, (5.0, 5.0))])
        factors = FactorSet(priors=[PriorFactor(0, (1.0, -2.0), 0.0, (0.0, 0.0), 3.0)])
        out, report = solve(state, factors, estimate_bias=False)
        np.testing.assert_allclose(out.poses[0].t, (1.0, -2.0), atol=1e-9)
        assert report.converged

    @pytest.mark.parametrize("n_poses", [3, 4, 5])
    def test_matches_nelder_mead_oracle(self, n_poses):
        rng = np.random.default_rng(200 + n_poses)
        state, factors = toy_graph(rng, n_poses)
        cfg = SolverConfig(max_iterations=200, cost_tolerance=1e-14)
        out, report = solve(state, factors, cfg, estimate_bias=False)
        assert report.converged

        x0 = np.concatenate([[p.t[0], p.t[1], p.theta] for p in state.poses])
        fun = lambda x: scalar_cost_reference(x, factors, n_poses, with_bias=False)
        res = scipy.optimize.minimize(fun, x0, method="Nelder-Mead",
                                      options=dict(maxiter=60000, maxfev=60000,
                                                   xatol=1e-10, fatol=1e-14))
        res = scipy.optimize.minimize(fun, res.x, method="Nelder-Mead",
                                      options=dict(maxiter=60000, maxfev=60000,
                                                   xatol=1e-12, fatol=1e-15))
        ours = np.concatenate([[p.t[0], p.t[1], p.theta] for p in out.poses])
        assert report.final_cost <= fun(res.x) + 1e-10
        np.testing.assert_allclose(ours, res.x, atol=1e-4)

    def test_cost_trace_monotone(self):
        rng = np.random.default_rng(55)
        for algorithm in ("lm", "gn"):
            state, factors = random_state_and_factors(rng, n_poses=4)
            cfg = SolverConfig(algorithm=algorithm, max_iterations=60)
            _, report = solve(state, factors, cfg)
            trace = np.array(report.cost_trace)
            assert np.all(np.diff(trace) <= 0)
            assert report.final_cost == trace[-1]
            assert report.initial_cost == trace[0]

    def test_weight_scaling_leaves_argmin(self):
        rng = np.random.default_rng(77)
        state, factors = toy_graph(rng, 4)
        cfg = SolverConfig(max_iterations=200, cost_tolerance=1e-15)
        base, _ = solve(state, factors, cfg, estimate_bias=False)
        scaled = FactorSet(
            odometry=[OdometryFactor(f.i, f.delta, 17.0 * f.weight) for f in factors.odometry],
            priors=[PriorFactor(f.i, f.gps, f.sigma_xy, f.bias_obs, 17.0 * f.weight) for f in factors.priors],
        )
        out, _ = solve(state, scaled, cfg, estimate_bias=False)
        for a, b in zip(base.poses, out.poses):
            np.testing.assert_allclose(a.t, b.t, atol=1e-6)
            assert abs(wrap_angle(a.theta - b.theta)) <= 1e-6

    def test_zero_association_weight_equals_corrected_prior(self):
        # association weights forced to ~0 plus a true-bias observation must
        # reproduce the corrected-prior-only solution
        rng = np.random.default_rng(88)
        true_bias = np.array([1.5, -0.8])
        state, factors = toy_graph(rng, 4)
        prior_only = FactorSet(
            odometry=list(factors.odometry),
            priors=[PriorFactor(f.i, f.gps + true_bias, f.sigma_xy, true_bias, f.weight)
                    for f in factors.priors],
        )
        with_assoc = FactorSet(
            odometry=list(factors.odometry),
            priors=list(prior_only.priors),
            associations=[AssociationFactor(i, rng.normal(size=(3, 2)), rng.normal(size=(3, 2)), 1e-300)
                          for i in range(4)],
        )
        cfg = SolverConfig(max_iterations=300, cost_tolerance=1e-16)
        a, _ = solve(state, prior_only, cfg, estimate_bias=False)
        b, _ = solve(state, with_assoc, cfg, estimate_bias=False)
        for pa, pb in zip(a.poses, b.poses):
            np.testing.assert_allclose(pa.t, pb.t, atol=1e-8)
            assert abs(wrap_angle(pa.theta - pb.theta)) <= 1e-8

    def test_empty_factor_set_rejected(self):
        with pytest.raises(ValueError):
            solve(TrajectoryState([Pose2.identity()]), FactorSet())

    def test_non_finite_input_raises(self):
        state = TrajectoryState([Pose2.identity()])
        factors = FactorSet(priors=[PriorFactor(0, (np.nan, 0.0), 0.0, (0.0, 0.0), 1.0)])
        with pytest.raises(SolverError):
            solve(state, factors)

    def test_factor_validation(self):
        state = TrajectoryState([Pose2.identity()])
        bad = FactorSet(priors=[PriorFactor(3, (0.0, 0.0), 0.0, (0.0, 0.0), 1.0)])
        with pytest.raises(ValueError, match="outside"):
            solve(state, bad)
        bad = FactorSet(priors=[PriorFactor(0, (0.0, 0.0), 0.0, (0.0, 0.0), 0.0)])
        with pytest.raises(ValueError, match="positive"):
            solve(state, bad)

    def test_singular_diagnostic_names_variables(self):
        from boundloc.factor_graph import _raise_singular
        state = TrajectoryState([Pose2.identity()])
        factors = FactorSet(priors=[PriorFactor(0, (1.0, 0.0), 0.0, (0.0, 0.0), 1.0)])
        prob = LeastSquaresProblem(state, factors, estimate_bias=False)
        H = np.diag([1.0, 1.0, 0.0])   # theta unconstrained by a position prior
        with pytest.raises(SolverError, match=r"pose\[0\].theta"):
            _raise_singular(prob, H)

    def test_report_text_format(self):
        report = SolveReport(initial_cost=2.0, final_cost=0.5, iterations=3, converged=True)
        text = report.to_text()
        assert "initial_cost=2" in text
        assert "final_cost=0.5" in text
        assert "iterations=3" in text
        assert "converged=true" in text
