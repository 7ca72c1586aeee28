"""Warm-start construction for the conic solver.

A cheap local TLS estimate (DLT + threshold test + Gauss-Newton on the
inliers, iterated) is lifted to a rank-1 primal candidate, and the
noise-free multiplier pattern provides the dual guess.  Warm starts only
accelerate the solver; they cannot bias it: a non-tight instance walks away
from the rank-1 candidate toward the true SDP optimum regardless.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateConfiguration, DegenerateDepth, DehomogenizationFailure
from .geometry import TriangulationProblem, project, refine_point, triangulate_linear
from .relaxations import (
    QcqpProblem,
    lift_epipolar,
    lift_epipolar_robust,
    lift_fractional,
    lift_fractional_robust,
)


def local_tls_estimate(problem: TriangulationProblem, rounds: int = 4):
    """Heuristic TLS minimizer: (X, theta, reprojections, objective).

    Alternates Gauss-Newton refinement on the currently accepted views with
    re-thresholding of squared residuals against each view's c_i.  Falls back
    to the all-view estimate when fewer than two views pass the threshold.
    """
    obs = problem.observations()
    c = problem.thresholds()
    views = problem.views
    X = triangulate_linear(views, obs)
    X = refine_point(views, obs, X)
    theta = np.ones(problem.n, dtype=bool)
    best = None
    for _ in range(rounds):
        reproj = np.array([project(v, X) for v in views])
        r2 = np.sum((obs - reproj) ** 2, axis=1)
        theta = r2 <= c
        objective = float(np.sum(np.minimum(r2, c)))
        if best is None or objective < best[3] - 1e-15:
            best = (X, theta.copy(), reproj, objective)
        else:
            break
        if theta.sum() < 2 or theta.all():
            break
        idx = np.flatnonzero(theta)
        sub_views = [views[i] for i in idx]
        try:
            X_new = triangulate_linear(sub_views, obs[idx])
        except (DegenerateConfiguration, DehomogenizationFailure):
            X_new = X
        try:
            X = refine_point(sub_views, obs[idx], X_new)
        except DegenerateDepth:
            break
    return best


def warm_start(qcqp: QcqpProblem, problem: TriangulationProblem):
    """(Z0, lambda0, xi0) for ``sdp.solve``; None when no candidate exists."""
    try:
        X, theta, reproj, _ = local_tls_estimate(problem)
    except (DegenerateConfiguration, DegenerateDepth, DehomogenizationFailure):
        return None
    c = problem.thresholds()
    theta_f = theta.astype(float)
    Xh = np.append(X, 1.0)
    Xh /= np.linalg.norm(Xh)
    kind = qcqp.kind
    if kind == "t":
        z = lift_epipolar(reproj)
    elif kind == "rt":
        z = lift_epipolar_robust(reproj, theta_f)
    elif kind == "tf":
        z = lift_fractional(reproj, Xh)
    else:
        z = lift_fractional_robust(reproj, theta_f, Xh)
    norm_sq = float(z @ qcqp.E @ z)
    if norm_sq <= 1e-12:
        return None
    Z0 = np.outer(z, z) / norm_sq

    # noise-free multiplier pattern: c_i on the theta idempotence constraints
    # (and their Xbar_s^2 lifts), zero elsewhere
    xi0 = np.zeros(len(qcqp.homogeneous_constraints))
    if kind in ("rt", "rtf"):
        for idx, con in enumerate(qcqp.homogeneous_constraints):
            label = con.label
            if not label.startswith("theta_idem("):
                continue
            parts = label[label.index("(") + 1 : -1].split(",")
            if len(parts) == 1 or parts[1] == parts[2]:
                xi0[idx] = c[int(parts[0]) - 1]
    return Z0, 0.0, xi0
