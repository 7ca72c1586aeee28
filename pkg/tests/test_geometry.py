import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trisdr.errors import (
    CoincidentCenters,
    ConfigInvalid,
    DegenerateConfiguration,
    DegenerateDepth,
)
from trisdr.geometry import (
    DEFAULT_INTRINSICS,
    CameraIntrinsics,
    CameraPose,
    CameraView,
    SimulationConfig,
    camera_matrix,
    fundamental_matrix,
    project,
    scale_problem,
    simulate_problem,
    skew,
    triangulate_linear,
)


def canonical_view(t=(0.0, 0.0, 0.0), fx=1.0, fy=1.0, cx=0.0, cy=0.0):
    intr = CameraIntrinsics(fx=fx, fy=fy, cx=cx, cy=cy, width=2.0, height=2.0)
    pose = CameraPose(R=np.eye(3), t=np.asarray(t, dtype=float))
    return CameraView(
        intrinsics=intr, pose=pose, observation=np.zeros(2), inlier_threshold_sq=1.0
    )


finite = st.floats(min_value=-10, max_value=10, allow_nan=False)


class TestSkew:
    def test_zero(self):
        assert np.array_equal(skew((0, 0, 0)), np.zeros((3, 3)))

    def test_unit_cross(self):
        out = skew((1, 0, 0)) @ np.array([0.0, 1.0, 0.0])
        assert np.allclose(out, [0, 0, 1], atol=0)

    @settings(deadline=None, max_examples=50)
    @given(st.tuples(finite, finite, finite), st.tuples(finite, finite, finite))
    def test_matches_componentwise_cross(self, t, s):
        t = np.array(t)
        s = np.array(s)
        assert np.abs(skew(t) @ s - np.cross(t, s)).max() < 1e-14

    def test_antisymmetric(self):
        rng = np.random.default_rng(0)
        A = skew(rng.normal(size=3))
        assert np.array_equal(A, -A.T)


class TestCameraMatrix:
    def test_canonical(self):
        P = camera_matrix(canonical_view())
        assert np.allclose(P, np.hstack([np.eye(3), np.zeros((3, 1))]), atol=0)

    def test_row_ratios_match_project(self):
        problem = simulate_problem(SimulationConfig(n_views=4, sigma=0.0), seed=3)
        X = problem.ground_truth.point
        Xh = np.append(X, 1.0)
        for view in problem.views:
            P = camera_matrix(view)
            ratios = np.array([P[0] @ Xh / (P[2] @ Xh), P[1] @ Xh / (P[2] @ Xh)])
            assert np.abs(ratios - project(view, X)).max() < 1e-12

    def test_depth_reading_on_principal_axis(self):
        rng = np.random.default_rng(1)
        q = rng.normal(size=3)
        q /= np.linalg.norm(q)
        theta = 0.3
        K_axis = skew(q)
        R = np.eye(3) + np.sin(theta) * K_axis + (1 - np.cos(theta)) * (K_axis @ K_axis)
        pose = CameraPose(R=R, t=rng.normal(size=3))
        view = CameraView(
            intrinsics=DEFAULT_INTRINSICS,
            pose=pose,
            observation=np.zeros(2),
            inlier_threshold_sq=1.0,
        )
        d = 2.7
        X = pose.t + d * R[:, 2]
        P = camera_matrix(view)
        assert abs(P[2] @ np.append(X, 1.0) - d) < 1e-12


class TestProject:
    def test_principal_ray(self):
        view = canonical_view(cx=0.5, cy=0.25)
        assert np.allclose(project(view, (0, 0, 1)), [0.5, 0.25], atol=0)

    def test_unit_offset_at_unit_depth(self):
        view = canonical_view(fx=2.0, cx=0.5)
        assert np.allclose(project(view, (1, 0, 1)), [2.5, 0.0], atol=1e-15)

    def test_degenerate_depth(self):
        with pytest.raises(DegenerateDepth):
            project(canonical_view(), (1.0, 0.0, 0.0))

    def test_generator_round_trip(self):
        problem = simulate_problem(SimulationConfig(n_views=5, sigma=0.0), seed=11)
        X = problem.ground_truth.point
        for view in problem.views:
            assert np.abs(project(view, X) - view.observation).max() == 0.0


class TestFundamentalMatrix:
    def test_translated_canonical_pair(self):
        vi = canonical_view(t=(0, 0, 0))
        vj = canonical_view(t=(1, 0, 0))
        F = fundamental_matrix(vi, vj)
        # identity intrinsics and rotations: F proportional to [e1]x
        Fn = F / np.abs(F).max()
        assert np.abs(np.abs(Fn) - np.abs(skew([1, 0, 0]))).max() < 1e-12
        rng = np.random.default_rng(5)
        worst = 0.0
        for _ in range(100):
            X = rng.uniform(-1, 1, size=3) + np.array([0, 0, 3.0])
            xi = np.append(project(vi, X), 1.0)
            xj = np.append(project(vj, X), 1.0)
            worst = max(worst, abs(xi @ F @ xj))
        assert worst < 1e-9

    def test_coincident_centers(self):
        with pytest.raises(CoincidentCenters):
            fundamental_matrix(canonical_view(), canonical_view())

    def test_rank_two(self):
        problem = simulate_problem(SimulationConfig(n_views=3, sigma=0.0), seed=2)
        F = fundamental_matrix(problem.views[0], problem.views[1])
        svals = np.linalg.svd(F, compute_uv=False)
        assert svals[2] < 1e-12 * svals[0]

    def test_noise_free_epipolar_residuals(self):
        problem = scale_problem(simulate_problem(SimulationConfig(n_views=6, sigma=0.0), seed=7))
        obs = [np.append(v.observation, 1.0) for v in problem.views]
        worst = 0.0
        for i in range(problem.n):
            for j in range(i + 1, problem.n):
                F = fundamental_matrix(problem.views[i], problem.views[j])
                worst = max(worst, abs(obs[i] @ F @ obs[j]))
        assert worst < 1e-9


class TestTriangulateLinear:
    def test_noise_free_round_trip(self):
        problem = scale_problem(simulate_problem(SimulationConfig(n_views=5, sigma=0.0), seed=13))
        X = triangulate_linear(problem.views, problem.observations())
        assert np.linalg.norm(X - problem.ground_truth.point) < 1e-8

    def test_identical_views_degenerate(self):
        view = canonical_view(t=(0, 0, -2))
        with pytest.raises(DegenerateConfiguration):
            triangulate_linear([view, view], np.zeros((2, 2)))

    def test_mild_perturbation(self):
        problem = scale_problem(simulate_problem(SimulationConfig(n_views=5, sigma=0.0), seed=17))
        rng = np.random.default_rng(0)
        reproj = problem.observations() + 1e-6 * rng.standard_normal((problem.n, 2))
        X = triangulate_linear(problem.views, reproj)
        assert np.linalg.norm(X - problem.ground_truth.point) < 1e-4

    def test_flag_does_not_change_point(self):
        problem = simulate_problem(SimulationConfig(n_views=4, sigma=1.0), seed=19)
        a = triangulate_linear(problem.views, problem.observations(), round_smallest_sv=True)
        b = triangulate_linear(problem.views, problem.observations(), round_smallest_sv=False)
        assert np.array_equal(a, b)


class TestSimulateProblem:
    def test_deterministic(self):
        cfg = SimulationConfig(n_views=6, sigma=3.0, n_outliers=2)
        a = simulate_problem(cfg, seed=42)
        b = simulate_problem(cfg, seed=42)
        assert np.array_equal(a.observations(), b.observations())
        assert a.ground_truth.outlier_mask == b.ground_truth.outlier_mask
        assert np.array_equal(a.ground_truth.point, b.ground_truth.point)
        for va, vb in zip(a.views, b.views):
            assert np.array_equal(va.pose.R, vb.pose.R)
            assert np.array_equal(va.pose.t, vb.pose.t)

    def test_paper_default_intrinsics(self):
        K = DEFAULT_INTRINSICS
        assert (K.width, K.height) == (2108.0, 1162.0)
        assert K.fx == K.fy == 1012.0027
        assert (K.cx, K.cy) == (1054.0, 581.0)

    def test_outlier_count_and_bounds(self):
        cfg = SimulationConfig(n_views=7, sigma=2.0, n_outliers=4)
        problem = simulate_problem(cfg, seed=23)
        mask = problem.ground_truth.outlier_mask
        assert sum(mask) == 4
        for flagged, view in zip(mask, problem.views):
            if flagged:
                x = view.observation
                assert 0 <= x[0] <= cfg.intrinsics.width
                assert 0 <= x[1] <= cfg.intrinsics.height

    def test_too_many_outliers_rejected(self):
        with pytest.raises(ConfigInvalid):
            SimulationConfig(n_views=4, n_outliers=3)

    def test_cameras_on_sphere_looking_at_origin(self):
        problem = simulate_problem(SimulationConfig(n_views=5, sigma=0.0), seed=29)
        for view in problem.views:
            assert abs(np.linalg.norm(view.pose.t) - 2.0) < 1e-12
            # principal axis points from the center toward the origin
            z_world = view.pose.R[:, 2]
            assert np.allclose(z_world, -view.pose.t / 2.0, atol=1e-12)


class TestScaleProblem:
    def test_unit_width_identity(self):
        problem = simulate_problem(SimulationConfig(n_views=3, sigma=0.0), seed=1)
        scaled = scale_problem(problem)
        assert scale_problem(scaled) is scale_problem(scaled)
        again = scale_problem(scaled)
        assert again.scale == scaled.scale
        assert np.array_equal(again.observations(), scaled.observations())

    def test_epipolar_invariance(self):
        problem = simulate_problem(SimulationConfig(n_views=5, sigma=0.0), seed=31)
        scaled = scale_problem(problem)
        assert scaled.scale == DEFAULT_INTRINSICS.width
        obs = [np.append(v.observation, 1.0) for v in scaled.views]
        worst = 0.0
        for i in range(scaled.n):
            for j in range(i + 1, scaled.n):
                F = fundamental_matrix(scaled.views[i], scaled.views[j])
                worst = max(worst, abs(obs[i] @ F @ obs[j]))
        assert worst < 1e-12

    def test_projection_consistency(self):
        problem = simulate_problem(SimulationConfig(n_views=4, sigma=0.0), seed=37)
        scaled = scale_problem(problem)
        X = problem.ground_truth.point
        W = problem.views[0].intrinsics.width
        for raw, view in zip(problem.views, scaled.views):
            assert np.abs(project(view, X) - project(raw, X) / W).max() < 1e-14

    def test_threshold_scaling(self):
        problem = simulate_problem(SimulationConfig(n_views=3, sigma=5.0), seed=41)
        scaled = scale_problem(problem)
        W = problem.views[0].intrinsics.width
        assert np.allclose(scaled.thresholds(), problem.thresholds() / W**2, atol=0)
