import numpy as np
import pytest

from trisdr.errors import ThresholdInvalid
from trisdr.geometry import SimulationConfig, scale_problem, simulate_problem
from trisdr.relaxations import (
    KINDS,
    build,
    cost_matrix_plain,
    cost_matrix_robust,
    count_law,
    lift_epipolar,
    lift_epipolar_robust,
    lift_fractional,
    lift_fractional_robust,
)


def noise_free(n, seed=0, sigma=0.0, outliers=0):
    return scale_problem(
        simulate_problem(SimulationConfig(n_views=n, sigma=sigma, n_outliers=outliers), seed)
    )


def point_h(problem):
    Xh = np.append(problem.ground_truth.point, 1.0)
    return Xh / np.linalg.norm(Xh)


def lifted_ground_truth(qcqp, problem):
    obs = problem.observations()
    theta = (~np.array(problem.ground_truth.outlier_mask)).astype(float)
    if qcqp.kind == "t":
        return lift_epipolar(obs)
    if qcqp.kind == "rt":
        return lift_epipolar_robust(obs, theta)
    if qcqp.kind == "tf":
        return lift_fractional(obs, point_h(problem))
    return lift_fractional_robust(obs, theta, point_h(problem))


class TestCostMatrixPlain:
    def test_zero_observation(self):
        M = cost_matrix_plain(np.zeros((1, 2)))
        assert np.array_equal(M, np.diag([1.0, 1.0, 0.0]))

    def test_analytic_expansion(self):
        M = cost_matrix_plain(np.array([[1.0, 2.0]]))
        assert np.array_equal(M, np.array([[1, 0, -1], [0, 1, -2], [-1, -2, 5]], dtype=float))

    def test_norm_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = rng.normal(size=(4, 2))
            y = rng.normal(size=8)
            M = cost_matrix_plain(x)
            yb = np.append(y, 1.0)
            assert abs(yb @ M @ yb - np.sum((y - x.reshape(-1)) ** 2)) < 1e-12


class TestCostMatrixRobust:
    def test_single_view_frozen(self):
        M = cost_matrix_robust(np.array([[1.0, 2.0]]), np.array([4.0]))
        expected = np.array(
            [
                [1, 0, -1, 0],
                [0, 1, -2, 0],
                [-1, -2, 5, -2],
                [0, 0, -2, 4],
            ],
            dtype=float,
        )
        assert np.array_equal(M, expected)

    def test_noise_free_inlier_is_zero(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(3, 2))
        c = rng.uniform(1.0, 2.0, size=3)
        M = cost_matrix_robust(x, c)
        z = np.concatenate([x.reshape(-1), np.ones(3), [1.0]])
        assert abs(z @ M @ z) < 1e-12

    def test_all_rejected_pays_thresholds(self):
        c = np.array([1.5, 2.5, 3.5])
        M = cost_matrix_robust(np.random.default_rng(2).normal(size=(3, 2)), c)
        z = np.concatenate([np.zeros(6), np.zeros(3), [1.0]])
        assert abs(z @ M @ z - c.sum()) < 1e-12

    def test_tls_identity_on_binary_thetas(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(4, 2))
        c = rng.uniform(0.5, 3.0, size=4)
        M = cost_matrix_robust(x, c)
        for _ in range(20):
            theta = rng.integers(0, 2, size=4).astype(float)
            y = rng.normal(size=(4, 2)) * theta[:, None]
            z = np.concatenate([y.reshape(-1), theta, [1.0]])
            direct = np.sum(theta[:, None] * (y - x) ** 2) + np.sum(c * (1 - theta))
            # theta binary and y = theta*y make both forms agree
            assert abs(z @ M @ z - direct) < 1e-10

    def test_invalid_threshold(self):
        with pytest.raises(ThresholdInvalid):
            cost_matrix_robust(np.zeros((2, 2)), np.array([1.0, 0.0]))


class TestCounts:
    @pytest.mark.parametrize(
        "kind,n,expected_d,expected_m",
        [
            ("t", 3, 7, 4),
            ("t", 10, 21, 46),
            ("rt", 3, 10, 13),
            ("rt", 30, 91, 526),
            ("tf", 3, 28, 295),
            ("tf", 7, 60, 1471),
            ("rtf", 3, 40, 655),
            ("rtf", 7, 88, 2955),
        ],
    )
    def test_reference_examples(self, kind, n, expected_d, expected_m):
        qcqp = build(noise_free(n, seed=n), kind)
        assert qcqp.d == expected_d
        assert len(qcqp.constraints) == expected_m
        assert count_law(kind, n) == (expected_d, expected_m)

    @pytest.mark.parametrize("kind", KINDS)
    def test_count_law_small_range(self, kind):
        for n in range(2, 9):
            qcqp = build(noise_free(n, seed=n), kind)
            d, m = count_law(kind, n)
            assert (qcqp.d, len(qcqp.constraints)) == (d, m)


class TestSymmetryAndStructure:
    @pytest.mark.parametrize("kind", KINDS)
    def test_exact_symmetry(self, kind):
        qcqp = build(noise_free(3, seed=5), kind)
        assert np.array_equal(qcqp.M, qcqp.M.T)
        assert np.array_equal(qcqp.E, qcqp.E.T)
        for c in qcqp.constraints[:200]:
            A = c.to_dense(qcqp.d)
            assert np.array_equal(A, A.T)

    @pytest.mark.parametrize("kind", KINDS)
    def test_norm_constraint_is_last_and_matches_E(self, kind):
        qcqp = build(noise_free(4, seed=6), kind)
        norm = qcqp.constraints[-1]
        assert norm.label == "norm"
        assert norm.rhs == 1.0
        assert np.array_equal(norm.to_dense(qcqp.d), qcqp.E)
        assert all(c.rhs == 0.0 for c in qcqp.homogeneous_constraints)
        evals = np.linalg.eigvalsh(qcqp.E)
        assert evals.min() >= 0.0

    def test_basis_labels_unique(self):
        for kind in KINDS:
            qcqp = build(noise_free(3, seed=7), kind)
            labels = [m.label() for m in qcqp.basis]
            assert len(set(labels)) == len(labels)
            assert len(labels) == qcqp.d


class TestLiftingIdentities:
    def test_epipolar_lifting_matches_bilinear_form(self):
        problem = noise_free(4, seed=8)
        qcqp = build(problem, "t")
        from trisdr.geometry import fundamental_matrix

        rng = np.random.default_rng(9)
        pairs = [(i, j) for i in range(4) for j in range(i + 1, 4)]
        for _ in range(1000):
            z = rng.normal(size=qcqp.d)
            idx = rng.integers(0, len(pairs))
            i, j = pairs[idx]
            con = qcqp.constraints[idx]
            assert con.label == f"epipolar({i + 1},{j + 1})"
            F = fundamental_matrix(problem.views[i], problem.views[j])
            xi = np.append(z[2 * i : 2 * i + 2], z[-1])
            xj = np.append(z[2 * j : 2 * j + 2], z[-1])
            assert abs(con.quad(z) - xi @ F @ xj) < 1e-12

    def test_reprojection_lifting_matches_row_product(self):
        problem = noise_free(3, seed=10)
        qcqp = build(problem, "tf")
        from trisdr.geometry import camera_matrix

        rng = np.random.default_rng(11)
        d = qcqp.d
        n = problem.n
        for _ in range(300):
            z = rng.normal(size=d)
            i = rng.integers(0, n)
            k = rng.integers(0, 2)
            j = rng.integers(0, d)
            con = qcqp.constraints[(2 * i + k) * d + j]
            assert con.label == f"reproj({i + 1},{k + 1},{j + 1})"
            P = camera_matrix(problem.views[i])
            r = np.zeros(d)
            r[4 * (2 * i + k) : 4 * (2 * i + k) + 4] = P[2]
            r[4 * (2 * n) : 4 * (2 * n) + 4] = -P[k]
            assert abs(con.quad(z) - (r @ z) * z[j]) < 1e-12

    def test_tf_cost_equivalence(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(3, 2))
        M = cost_matrix_plain(x)
        big = np.kron(M, np.eye(4))
        for _ in range(50):
            xb = np.append(rng.normal(size=6), 1.0)
            Xb = rng.normal(size=4)
            z = np.kron(xb, Xb)
            assert abs(z @ big @ z - (xb @ M @ xb) * (Xb @ Xb)) < 1e-10

    def test_rtf_cost_equals_tls_objective_on_lift(self):
        problem = noise_free(4, seed=13, sigma=5.0, outliers=2)
        qcqp = build(problem, "rtf")
        obs = problem.observations()
        c = problem.thresholds()
        theta = (~np.array(problem.ground_truth.outlier_mask)).astype(float)
        z = lift_fractional_robust(obs, theta, point_h(problem))
        # y_i = theta_i * x~_i makes residuals vanish; objective is the
        # threshold sum over rejected views
        expected = np.sum(c * (1.0 - theta))
        assert abs(z @ qcqp.M @ z - expected) < 1e-10


class TestGroundTruthFeasibility:
    @pytest.mark.parametrize("kind", KINDS)
    def test_noise_free_lift_is_feasible(self, kind):
        for seed in range(4):
            problem = noise_free(5, seed=seed)
            qcqp = build(problem, kind)
            z = lifted_ground_truth(qcqp, problem)
            vals = qcqp.constraint_values(z)
            rhs = np.array([c.rhs for c in qcqp.constraints])
            assert np.abs(vals - rhs).max() < 1e-9
            assert abs(z @ qcqp.M @ z) < 1e-9

    @pytest.mark.parametrize("kind", ["rt", "rtf"])
    def test_outlier_lift_remains_feasible_for_robust_kinds(self, kind):
        # theta = 0 zeroes out the outlier view in every gated constraint
        problem = noise_free(5, seed=3, sigma=0.0, outliers=2)
        qcqp = build(problem, kind)
        z = lifted_ground_truth(qcqp, problem)
        vals = qcqp.constraint_values(z)
        rhs = np.array([c.rhs for c in qcqp.constraints])
        assert np.abs(vals - rhs).max() < 1e-9

    def test_diagnostic_json_round_trips_labels(self):
        qcqp = build(noise_free(2, seed=1), "rt")
        blob = qcqp.to_diagnostic_json()
        assert blob["kind"] == "rt"
        assert len(blob["basis"]) == qcqp.d
        assert len(blob["constraints"]) == len(qcqp.constraints)
