"""Camera models, epipolar geometry, linear triangulation, and the synthetic generator.

Conventions: a pose (R, t) stores the camera-to-world rotation and the camera
center in world units, so the world-to-image map is K (R^T | -R^T t).  Relative
quantities between views i and j are R_ij = R_i^T R_j and t_ij = R_i^T (t_j - t_i);
the sign convention is pinned by the epipolar-consistency tests, not by argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    CoincidentCenters,
    ConfigInvalid,
    DegenerateConfiguration,
    DegenerateDepth,
    DehomogenizationFailure,
)

_ORTHO_TOL = 1e-12


def _as_array(x, shape, name):
    a = np.asarray(x, dtype=float)
    if a.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {a.shape}")
    return a


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixel units."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: float
    height: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")

    def matrix(self) -> np.ndarray:
        """3x3 calibration matrix K (upper triangular, K[2,2] = 1)."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


# Paper-reported simulation defaults: 2108x1162 image, f = 1012.0027, centered
# principal point.
DEFAULT_INTRINSICS = CameraIntrinsics(
    fx=1012.0027, fy=1012.0027, cx=1054.0, cy=581.0, width=2108.0, height=1162.0
)


@dataclass(frozen=True)
class CameraPose:
    """Camera-to-world rotation R and camera center t (world units)."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = _as_array(self.R, (3, 3), "R")
        t = _as_array(self.t, (3,), "t")
        if np.abs(R.T @ R - np.eye(3)).max() > _ORTHO_TOL:
            raise ValueError("R is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
            raise ValueError("R must be a proper rotation (det = 1)")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)


@dataclass(frozen=True)
class CameraView:
    """One calibrated view: intrinsics, pose, 2D observation, TLS threshold."""

    intrinsics: CameraIntrinsics
    pose: CameraPose
    observation: np.ndarray
    inlier_threshold_sq: float

    def __post_init__(self):
        obs = _as_array(self.observation, (2,), "observation")
        object.__setattr__(self, "observation", obs)
        if self.inlier_threshold_sq <= 0:
            raise ValueError("inlier_threshold_sq must be positive")


@dataclass(frozen=True)
class GroundTruth:
    point: np.ndarray
    outlier_mask: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "point", _as_array(self.point, (3,), "point"))
        object.__setattr__(self, "outlier_mask", tuple(bool(b) for b in self.outlier_mask))


@dataclass(frozen=True)
class TriangulationProblem:
    """n >= 2 views of one point, optionally with simulation ground truth.

    ``scale`` records the pixel-coordinate divisor already applied (1 = raw pixels).
    """

    views: tuple[CameraView, ...]
    ground_truth: GroundTruth | None = None
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "views", tuple(self.views))
        if len(self.views) < 2:
            raise ValueError("a triangulation problem needs at least two views")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.ground_truth is not None and len(self.ground_truth.outlier_mask) != len(self.views):
            raise ValueError("outlier mask length must match view count")

    @property
    def n(self) -> int:
        return len(self.views)

    def observations(self) -> np.ndarray:
        """(n, 2) stacked observation array."""
        return np.array([v.observation for v in self.views])

    def thresholds(self) -> np.ndarray:
        """(n,) squared inlier thresholds."""
        return np.array([v.inlier_threshold_sq for v in self.views])


@dataclass(frozen=True)
class SimulationConfig:
    """Synthetic benchmark cell: cameras on a sphere observe a cube point.

    ``inlier_threshold`` is in pixels; when None it defaults to max(4*sigma, 50):
    wide enough that Gaussian inliers essentially never cross it, and far below
    the typical displacement of a uniform outlier.  The floor keeps the TLS
    cost terms on a sane scale relative to image coordinates.
    """

    n_views: int
    sigma: float = 0.0
    n_outliers: int = 0
    sphere_radius: float = 2.0
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS
    inlier_threshold: float | None = None

    def __post_init__(self):
        if self.n_views < 2:
            raise ConfigInvalid("need at least two views")
        if self.sigma < 0:
            raise ConfigInvalid("sigma must be nonnegative")
        if self.n_outliers < 0 or self.n_outliers > self.n_views - 2:
            raise ConfigInvalid(
                f"n_outliers = {self.n_outliers} exceeds n - 2 = {self.n_views - 2}"
            )
        if self.sphere_radius <= 0:
            raise ConfigInvalid("sphere_radius must be positive")

    def threshold_sq(self) -> float:
        thr = self.inlier_threshold
        if thr is None:
            thr = max(4.0 * self.sigma, 50.0)
        if thr <= 0:
            raise ConfigInvalid("inlier_threshold must be positive")
        return thr * thr


def skew(t) -> np.ndarray:
    """3x3 antisymmetric matrix with skew(t) @ s == cross(t, s)."""
    t = _as_array(t, (3,), "t")
    return np.array(
        [[0.0, -t[2], t[1]], [t[2], 0.0, -t[0]], [-t[1], t[0], 0.0]]
    )


def camera_matrix(view: CameraView) -> np.ndarray:
    """3x4 projection matrix K (R^T | -R^T t); rows are (a_1; a_2; b)."""
    R, t = view.pose.R, view.pose.t
    P = np.empty((3, 4))
    P[:, :3] = R.T
    P[:, 3] = -R.T @ t
    return view.intrinsics.matrix() @ P


def project(view: CameraView, X) -> np.ndarray:
    """Pinhole projection of a world point into the view, in pixel units."""
    X = _as_array(X, (3,), "X")
    p = camera_matrix(view) @ np.append(X, 1.0)
    if abs(p[2]) < 1e-12:
        raise DegenerateDepth("point lies on the camera's principal plane")
    return p[:2] / p[2]


def fundamental_matrix(view_i: CameraView, view_j: CameraView) -> np.ndarray:
    """F_ij with x_i^T F_ij x_j = 0 for corresponding homogeneous pixels."""
    ti, tj = view_i.pose.t, view_j.pose.t
    if np.linalg.norm(tj - ti) < 1e-12:
        raise CoincidentCenters("views share a camera center")
    Ri, Rj = view_i.pose.R, view_j.pose.R
    R_ij = Ri.T @ Rj
    t_ij = Ri.T @ (tj - ti)
    Ki_inv = np.linalg.inv(view_i.intrinsics.matrix())
    Kj_inv = np.linalg.inv(view_j.intrinsics.matrix())
    return Ki_inv.T @ skew(t_ij) @ R_ij @ Kj_inv


def epipolar_residual(view_i: CameraView, view_j: CameraView, x_i, x_j) -> float:
    """Algebraic epipolar residual x_i^T F_ij x_j for pixel points."""
    F = fundamental_matrix(view_i, view_j)
    return float(np.append(x_i, 1.0) @ F @ np.append(x_j, 1.0))


def dlt_rows(views, reprojections) -> np.ndarray:
    """The 2n x 4 stacked data matrix with rows x_i^k b_i^T - a_ik^T."""
    n = len(views)
    x = np.asarray(reprojections, dtype=float).reshape(n, 2)
    D = np.empty((2 * n, 4))
    for i, view in enumerate(views):
        P = camera_matrix(view)
        D[2 * i] = x[i, 0] * P[2] - P[0]
        D[2 * i + 1] = x[i, 1] * P[2] - P[1]
    return D


def triangulate_linear(views, reprojections, round_smallest_sv: bool = True) -> np.ndarray:
    """DLT: null vector of the stacked reprojection rows, dehomogenized.

    ``round_smallest_sv`` treats the smallest singular value as exactly zero;
    the returned point is identical either way, the flag only governs how the
    residual of the data matrix is accounted (as in the rounding procedure).
    """
    if len(views) < 2:
        raise DegenerateConfiguration("need at least two views")
    D = dlt_rows(views, reprojections)
    _, svals, Vt = np.linalg.svd(D)
    gap_ref = max(1.0, svals[0])
    if len(svals) >= 2 and svals[-2] - svals[-1] < 1e-10 * gap_ref:
        raise DegenerateConfiguration(
            f"ambiguous null space: two smallest singular values {svals[-2]:.3e}, {svals[-1]:.3e}"
        )
    X_h = Vt[-1]
    if abs(X_h[3]) < 1e-12:
        raise DehomogenizationFailure("triangulated point is at infinity")
    del round_smallest_sv  # return value is the same; residual accounting only
    return X_h[:3] / X_h[3]


def refine_point(views, observations, X0, iterations: int = 50, tol: float = 1e-14) -> np.ndarray:
    """Levenberg-damped Gauss-Newton on the stacked reprojection residuals.

    Minimizes sum_i ||obs_i - project(view_i, X)||^2 over X from X0.  Steps
    that would cross a camera plane or increase the cost are rejected by
    raising the damping.
    """
    obs = np.asarray(observations, dtype=float).reshape(len(views), 2)
    P = np.array([camera_matrix(v) for v in views])

    def residuals(X):
        Xh = np.append(X, 1.0)
        p = P @ Xh
        depth = p[:, 2]
        if np.any(np.abs(depth) < 1e-12):
            raise DegenerateDepth("point on a camera plane during refinement")
        proj = p[:, :2] / depth[:, None]
        return (proj - obs).reshape(-1), p

    X = np.asarray(X0, dtype=float).copy()
    r, p = residuals(X)
    cost = r @ r
    lam = 1e-6
    for _ in range(iterations):
        depth = p[:, 2]
        J = np.empty((2 * len(views), 3))
        J[0::2] = (P[:, 0, :3] - (p[:, 0] / depth)[:, None] * P[:, 2, :3]) / depth[:, None]
        J[1::2] = (P[:, 1, :3] - (p[:, 1] / depth)[:, None] * P[:, 2, :3]) / depth[:, None]
        g = J.T @ r
        H = J.T @ J
        if np.linalg.norm(g) < tol * (1.0 + cost):
            break
        stepped = False
        for _ in range(12):
            try:
                step = np.linalg.solve(H + lam * np.eye(3), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            try:
                r_new, p_new = residuals(X + step)
            except DegenerateDepth:
                lam *= 10.0
                continue
            cost_new = r_new @ r_new
            if cost_new <= cost:
                X = X + step
                improve = cost - cost_new
                r, p, cost = r_new, p_new, cost_new
                lam = max(lam * 0.3, 1e-12)
                stepped = True
                if improve < tol * (1.0 + cost):
                    return X
                break
            lam *= 10.0
        if not stepped:
            break
    return X


def _look_at_rotation(center: np.ndarray, up: np.ndarray) -> np.ndarray:
    """Camera-to-world rotation for a camera at ``center`` looking at the origin."""
    z = -center / np.linalg.norm(center)
    if abs(up @ z) > 0.999:
        up = np.array([0.0, 1.0, 0.0]) if abs(z[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    x = np.cross(up, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


def _camera_centers_coplanar(centers: np.ndarray, tol: float) -> bool:
    centered = centers - centers.mean(axis=0)
    svals = np.linalg.svd(centered, compute_uv=False)
    # sigma_min >= sqrt(n)*tol guarantees at least one center sits more than
    # tol away from every plane
    return svals[-1] < tol * math.sqrt(len(centers))


def simulate_problem(config: SimulationConfig, seed: int) -> TriangulationProblem:
    """Draw one synthetic triangulation problem; pure function of (config, seed).

    Cameras are uniform on a sphere of ``sphere_radius`` looking at the origin,
    the point is uniform in the unit cube, observations get i.i.d. Gaussian
    pixel noise, and ``n_outliers`` distinct views are replaced by uniform
    points in the image.  Nearly coplanar camera configurations (n >= 4) are
    resampled.
    """
    rng = np.random.default_rng(seed)
    n = config.n_views
    K = config.intrinsics
    c_sq = config.threshold_sq()

    up = rng.normal(size=3)
    up /= np.linalg.norm(up)

    for _ in range(1000):
        dirs = rng.normal(size=(n, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        centers = config.sphere_radius * dirs
        if n < 4 or not _camera_centers_coplanar(centers, 1e-3):
            break
    else:
        raise DegenerateConfiguration("could not sample a non-coplanar camera set")

    X = rng.uniform(0.0, 1.0, size=3)

    views = []
    clean = []
    for i in range(n):
        pose = CameraPose(R=_look_at_rotation(centers[i], up), t=centers[i])
        view = CameraView(
            intrinsics=K, pose=pose, observation=np.zeros(2), inlier_threshold_sq=c_sq
        )
        x_true = project(view, X)
        clean.append(x_true)
        obs = x_true + config.sigma * rng.standard_normal(2)
        views.append(replace(view, observation=obs))

    outlier_mask = [False] * n
    if config.n_outliers > 0:
        chosen = rng.choice(n, size=config.n_outliers, replace=False)
        for i in chosen:
            obs = np.array([rng.uniform(0.0, K.width), rng.uniform(0.0, K.height)])
            views[i] = replace(views[i], observation=obs)
            outlier_mask[i] = True

    return TriangulationProblem(
        views=tuple(views),
        ground_truth=GroundTruth(point=X, outlier_mask=tuple(outlier_mask)),
        scale=1.0,
    )


def scale_problem(problem: TriangulationProblem) -> TriangulationProblem:
    """Divide all pixel quantities by the image width of the first view.

    Observations, focal lengths, principal point and image size are divided by
    W; squared thresholds by W^2.  The feasible set of 3D points is unchanged,
    but the lifted SDPs become far better conditioned than in raw pixel units.
    """
    W = problem.views[0].intrinsics.width
    if W == 1.0:
        return problem
    views = []
    for v in problem.views:
        K = v.intrinsics
        views.append(
            CameraView(
                intrinsics=CameraIntrinsics(
                    fx=K.fx / W,
                    fy=K.fy / W,
                    cx=K.cx / W,
                    cy=K.cy / W,
                    width=K.width / W,
                    height=K.height / W,
                ),
                pose=v.pose,
                observation=v.observation / W,
                inlier_threshold_sq=v.inlier_threshold_sq / W**2,
            )
        )
    return TriangulationProblem(
        views=tuple(views),
        ground_truth=problem.ground_truth,
        scale=problem.scale * W,
    )
