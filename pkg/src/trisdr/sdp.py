"""Self-contained dense conic solver for the lifted relaxations.

Solves  min tr(C Z)  s.t.  tr(A_i Z) = b_i,  Z >= 0  by alternating-direction
operator splitting over the symmetric-vectorized (svec) variable:

* affine step: project onto {A svec(Z) = b} through a cached factorization of
  the constraint Gram matrix A A^T (pseudo-inverse semantics, so linearly
  dependent constraint sets are fine);
* cone step: eigenvalue clamping onto the PSD cone;
* over-relaxation and residual-balancing rho adaptation.

A polishing step detects the numerical rank of Z, restricts to that face and
solves the reduced primal/dual KKT systems by least squares, which recovers
interior-point-level accuracy on tight instances that plain splitting cannot
reach.  Dual multipliers are reported so that S = C + sum(xi_i A_i) - lambda E
is the (PSD) dual slack matrix.

Scaling: per-row normalization of the constraint operator plus a Ruiz-style
diagonal congruence on the matrix coordinates (cone-safe) and a scalar cost
normalization.  All reported residuals are measured on the unscaled problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
import scipy.sparse

from .errors import EigenFailure, NumericalBreakdown
from .relaxations import QcqpProblem, SymmetricConstraint

_SQRT2 = math.sqrt(2.0)


@dataclass
class SolverSettings:
    """Tolerances and knobs; defaults target certificate-grade accuracy."""

    eps_primal: float = 1e-9
    eps_dual: float = 1e-9
    eps_gap: float = 1e-9
    max_iterations: int = 200_000
    polish: bool = True
    scaling: bool = True
    rho: float = 0.1
    over_relaxation: float = 1.6
    check_every: int = 25
    stall_iterations: int = 20_000
    ruiz_iterations: int = 10
    rho_schedule: tuple[float, ...] = (0.1, 0.01, 1.0, 0.03, 0.3)
    rho_switch_iterations: int = 4_000

    def __post_init__(self):
        if min(self.eps_primal, self.eps_dual, self.eps_gap) <= 0:
            raise ValueError("tolerances must be positive")

    def with_tolerance(self, eps: float) -> "SolverSettings":
        return replace(self, eps_primal=eps, eps_dual=eps, eps_gap=eps)


@dataclass
class SdpStandardForm:
    """min tr(C Z) s.t. tr(A_i Z) = b_i, Z >= 0."""

    C: np.ndarray
    constraints: list[tuple[SymmetricConstraint, float]]
    d: int


@dataclass
class SdpSolution:
    Z: np.ndarray
    lambda_: float
    xi: np.ndarray
    objective: float
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    status: str  # "Solved" | "MaxIter" | "Infeasible"
    polished: bool = False

    @property
    def max_residual(self) -> float:
        return max(self.primal_residual, self.dual_residual, self.gap)


def to_standard_form(qcqp: QcqpProblem) -> SdpStandardForm:
    """All homogeneous constraints at rhs 0 plus the normalization at rhs 1."""
    return SdpStandardForm(
        C=qcqp.M,
        constraints=[(c, c.rhs) for c in qcqp.constraints],
        d=qcqp.d,
    )


def psd_project(S: np.ndarray) -> np.ndarray:
    """Nearest PSD matrix: eigendecompose and clamp negative eigenvalues."""
    H = 0.5 * (S + S.T)
    try:
        w, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError as e:  # pragma: no cover - LAPACK failure
        raise EigenFailure(str(e)) from e
    if w[0] >= 0.0:
        return H
    np.maximum(w, 0.0, out=w)
    return (V * w) @ V.T


# ---------------------------------------------------------------------------
# compiled problem data
# ---------------------------------------------------------------------------


def _svec_index(rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    # upper-triangular column-major packing: (r, c) -> c(c+1)/2 + r, r <= c
    return cols * (cols + 1) // 2 + rows


class _Compiled:
    """Concatenated triplet view of a standard form, plus svec machinery."""

    def __init__(self, form: SdpStandardForm):
        self.d = form.d
        self.m = len(form.constraints)
        self.C = np.asarray(form.C, dtype=float)
        self.b = np.array([rhs for _, rhs in form.constraints], dtype=float)
        rows, cols, vals, cidx = [], [], [], []
        for i, (con, _) in enumerate(form.constraints):
            rows.append(con.rows)
            cols.append(con.cols)
            vals.append(con.vals)
            cidx.append(np.full(len(con.vals), i, dtype=np.int64))
        self.rows = np.concatenate(rows)
        self.cols = np.concatenate(cols)
        self.vals = np.concatenate(vals)
        self.cidx = np.concatenate(cidx)
        self.off = self.rows < self.cols

        iu_r, iu_c = np.triu_indices(self.d)
        self._iu = (iu_r, iu_c)
        self._svec_scale = np.where(iu_r == iu_c, 1.0, _SQRT2)
        self.nvec = len(iu_r)
        # svec storage is column-major upper packing; build a permutation from
        # triu_indices order (row-major) to packed order
        self._pack_perm = _svec_index(iu_r, iu_c)

        data = self.vals * np.where(self.off, _SQRT2, 1.0)
        colidx = _svec_index(self.rows, self.cols)
        self.A = scipy.sparse.csr_matrix(
            (data, (self.cidx, colidx)), shape=(self.m, self.nvec)
        )

    def svec(self, Z: np.ndarray) -> np.ndarray:
        v = np.empty(self.nvec)
        v[self._pack_perm] = Z[self._iu] * self._svec_scale
        return v

    def smat(self, v: np.ndarray) -> np.ndarray:
        Z = np.zeros((self.d, self.d))
        vals = v[self._pack_perm] / self._svec_scale
        Z[self._iu] = vals
        Z.T[self._iu] = vals
        return Z

    def dual_slack(self, eta: np.ndarray) -> np.ndarray:
        """S = C + sum_i eta_i A_i."""
        S = self.C.copy()
        w = self.vals * eta[self.cidx]
        np.add.at(S, (self.rows, self.cols), w)
        off = self.off
        np.add.at(S, (self.cols[off], self.rows[off]), w[off])
        return S

    def constraint_traces(self, Z: np.ndarray) -> np.ndarray:
        return self.A @ self.svec(Z)


def _spec_residuals(comp: _Compiled, Z: np.ndarray, eta: np.ndarray):
    """(primal, dual, gap) in the certificate's unscaled metrics."""
    tr = comp.constraint_traces(Z)
    primal = np.max(np.abs(tr - comp.b) / (1.0 + np.abs(comp.b)))
    S = comp.dual_slack(eta)
    try:
        smin = np.linalg.eigvalsh(S)[0]
    except np.linalg.LinAlgError as e:  # pragma: no cover
        raise EigenFailure(str(e)) from e
    dual = max(0.0, -smin) / (1.0 + np.linalg.norm(comp.C))
    obj = float(np.sum(comp.C * Z))
    dual_obj = float(-comp.b @ eta)
    gap = abs(obj - dual_obj) / (1.0 + abs(obj))
    return float(primal), float(dual), float(gap), obj


def residuals(form: SdpStandardForm, Z: np.ndarray, lambda_: float, xi: np.ndarray):
    """KKT residuals of a primal-dual pair in the Fact-1 sign convention.

    primal = max_i |tr(A_i Z) - b_i| / (1 + |b_i|)
    dual   = max(0, -lambda_min(M + sum xi_i A_i - lambda E)) / (1 + ||M||)
    gap    = |tr(M Z) - lambda| / (1 + |tr(M Z)|)
    """
    comp = _Compiled(form)
    eta = _eta_from_duals(comp, lambda_, xi)
    primal, dual, gap, _ = _spec_residuals(comp, Z, eta)
    return primal, dual, gap


def _norm_row(comp: _Compiled) -> int:
    nz = np.flatnonzero(comp.b)
    if len(nz) != 1:
        raise ValueError("expected exactly one normalization constraint (rhs != 0)")
    return int(nz[0])


def _eta_from_duals(comp: _Compiled, lambda_: float, xi: np.ndarray) -> np.ndarray:
    pos = _norm_row(comp)
    xi = np.asarray(xi, dtype=float)
    if len(xi) != comp.m - 1:
        raise ValueError(f"expected {comp.m - 1} homogeneous multipliers, got {len(xi)}")
    eta = np.insert(xi, pos, -lambda_ / comp.b[pos])
    return eta


def _duals_from_eta(comp: _Compiled, eta: np.ndarray):
    pos = _norm_row(comp)
    lambda_ = -eta[pos] * comp.b[pos]
    xi = np.delete(eta, pos)
    return float(lambda_), xi


# ---------------------------------------------------------------------------
# equilibration
# ---------------------------------------------------------------------------


class _Scaling:
    """Cone-safe equilibration: Abar_i = delta_i D A_i D, Cbar = sigma D C D."""

    def __init__(self, comp: _Compiled, settings: SolverSettings):
        d, m = comp.d, comp.m
        self.D = np.ones(d)
        self.delta = np.ones(m)
        self.sigma = 1.0
        if not settings.scaling:
            self._bake(comp)
            return
        vals = comp.vals
        rows, cols, cidx = comp.rows, comp.cols, comp.cidx
        for _ in range(settings.ruiz_iterations):
            scaled = np.abs(vals) * self.delta[cidx] * self.D[rows] * self.D[cols]
            row_inf = np.zeros(m)
            np.maximum.at(row_inf, cidx, scaled)
            row_inf[row_inf == 0] = 1.0
            self.delta /= np.sqrt(row_inf)

            scaled = np.abs(vals) * self.delta[cidx] * self.D[rows] * self.D[cols]
            coord_inf = np.zeros(d)
            np.maximum.at(coord_inf, rows, scaled)
            np.maximum.at(coord_inf, cols, scaled)
            coord_inf[coord_inf == 0] = 1.0
            self.D /= coord_inf**0.25
        Cbar = self.D[:, None] * comp.C * self.D[None, :]
        cmax = np.abs(Cbar).max()
        self.sigma = 1.0 / max(cmax, 1e-6)
        self._bake(comp)

    def _bake(self, comp: _Compiled):
        self.vals_s = comp.vals * self.delta[comp.cidx] * self.D[comp.rows] * self.D[comp.cols]
        data = self.vals_s * np.where(comp.off, _SQRT2, 1.0)
        colidx = _svec_index(comp.rows, comp.cols)
        self.A = scipy.sparse.csr_matrix(
            (data, (comp.cidx, colidx)), shape=(comp.m, comp.nvec)
        )
        self.b = comp.b * self.delta
        self.C = self.sigma * (self.D[:, None] * comp.C * self.D[None, :])

    def unscale_Z(self, Zbar: np.ndarray) -> np.ndarray:
        return self.D[:, None] * Zbar * self.D[None, :]

    def unscale_eta(self, eta_bar: np.ndarray) -> np.ndarray:
        return eta_bar * self.delta / self.sigma


# ---------------------------------------------------------------------------
# Gram-matrix solver (affine projection backbone)
# ---------------------------------------------------------------------------

_EIGH_PINV_LIMIT = 400


class _GramSolver:
    """Applies (A A^T)^+ with either an exact eigen pseudo-inverse (small m)
    or a ridged Cholesky factor plus iterative refinement (large m)."""

    def __init__(self, A: scipy.sparse.csr_matrix):
        m = A.shape[0]
        self.G = (A @ A.T).tocsr()
        Gd = self.G.toarray()
        if m <= _EIGH_PINV_LIMIT:
            w, U = np.linalg.eigh(Gd)
            tol = max(1e-12 * max(w[-1], 0.0), 1e-300)
            inv = np.where(w > tol, 1.0 / np.maximum(w, tol), 0.0)
            self._U = U
            self._inv = inv
            self._chol = None
        else:
            ridge = 1e-11 * max(Gd.diagonal().mean(), 1e-12)
            self._chol = scipy.linalg.cho_factor(
                Gd + ridge * np.eye(m), lower=True, check_finite=False
            )
            self._U = None

    def solve(self, r: np.ndarray) -> np.ndarray:
        if self._U is not None:
            return self._U @ (self._inv * (self._U.T @ r))
        x = scipy.linalg.cho_solve(self._chol, r, check_finite=False)
        # one refinement step absorbs the ridge bias
        res = r - self.G @ x
        x += scipy.linalg.cho_solve(self._chol, res, check_finite=False)
        return x


# ---------------------------------------------------------------------------
# rank-1 face completion
# ---------------------------------------------------------------------------


class _FaceCompletion:
    """Reduced-KKT finisher for a fixed rank-1 primal face.

    Given a unit face vector zbar (scaled coordinates), runs Douglas-Rachford
    between the PSD cone and the affine set of dual slacks that annihilate the
    face: {S = Cbar + sum eta_i Abar_i : S zbar = 0}.  The bordered projection
    reuses the cached Gram factorization.  Converges in tens of iterations
    when the face is optimal (strict complementarity); detectably fails to
    improve otherwise.
    """

    def __init__(self, comp: _Compiled, scaling: _Scaling, gram: _GramSolver, zbar: np.ndarray):
        self.comp = comp
        self.scaling = scaling
        self.gram = gram
        d, m = comp.d, comp.m
        vs = scaling.vals_s
        Mz = np.zeros((d, m))
        np.add.at(Mz, (comp.rows, comp.cidx), vs * zbar[comp.cols])
        off = comp.off
        np.add.at(Mz, (comp.cols[off], comp.cidx[off]), vs[off] * zbar[comp.rows[off]])
        self.Mz = Mz
        self.rhs = -(scaling.C @ zbar)
        self.Yz = np.column_stack([gram.solve(Mz[p]) for p in range(d)])
        H = Mz @ self.Yz
        wH, VH = np.linalg.eigh(0.5 * (H + H.T))
        inv = np.where(wH > 1e-12 * max(wH[-1], 1e-300), 1.0 / np.maximum(wH, 1e-300), 0.0)
        self.Hpinv = (VH * inv) @ VH.T
        self.cbar = comp.svec(scaling.C)

    def project_affine(self, t: np.ndarray):
        A = self.scaling.A
        eta = self.gram.solve(A @ (t - self.cbar))
        mu = self.Hpinv @ (self.Mz @ eta - self.rhs)
        eta = eta - self.Yz @ mu
        return self.cbar + A.T @ eta, eta

    def run(self, x0: np.ndarray, max_iterations: int, callback) -> bool:
        """DR loop; ``callback(eta_bar)`` is invoked every 25 iterations and
        returns True to stop (converged)."""
        x = x0
        for it in range(1, max_iterations + 1):
            pa, eta = self.project_affine(x)
            T = self.comp.smat(2.0 * pa - x)
            w, V = np.linalg.eigh(T)
            pc = self.comp.svec((V * np.maximum(w, 0.0)) @ V.T)
            x = x + pc - pa
            if it % 25 == 0 or it == max_iterations:
                if not np.isfinite(x).all():
                    return False
                if callback(eta):
                    return True
        return False


# ---------------------------------------------------------------------------
# polishing
# ---------------------------------------------------------------------------


def _polish(comp, scaling, Zbar, eta_bar, rank_candidates):
    """Face-restricted KKT refinement; yields unscaled (Z, eta) candidates."""
    try:
        w, V = np.linalg.eigh(0.5 * (Zbar + Zbar.T))
    except np.linalg.LinAlgError:
        return
    w = w[::-1]
    V = V[:, ::-1]
    m = comp.m
    rows, cols, vals, cidx, off = comp.rows, comp.cols, scaling.vals_s, comp.cidx, comp.off
    for r in rank_candidates:
        if r < 1 or r > comp.d:
            continue
        Vr = V[:, :r]
        # reduced constraint operator: svec_r(Vr^T A_i Vr) for every i
        left = Vr[rows]
        right = Vr[cols]
        outer = left[:, :, None] * right[:, None, :]
        outer = outer + outer.transpose(0, 2, 1)
        outer[~off] *= 0.5  # diagonal cells enter once
        contrib = vals[:, None, None] * outer
        red = np.zeros((m, r, r))
        np.add.at(red, cidx, contrib)
        iu = np.triu_indices(r)
        scale = np.where(iu[0] == iu[1], 1.0, _SQRT2)
        Ared = red[:, iu[0], iu[1]] * scale[None, :]
        try:
            wvec, *_ = np.linalg.lstsq(Ared, scaling.b, rcond=None)
        except np.linalg.LinAlgError:
            continue
        W = np.zeros((r, r))
        W[iu] = wvec / scale
        W = W + W.T - np.diag(np.diag(W))
        try:
            ww, WV = np.linalg.eigh(W)
        except np.linalg.LinAlgError:
            continue
        W = (WV * np.maximum(ww, 0.0)) @ WV.T
        Zp = (Vr @ W) @ Vr.T

        # dual: minimal-norm correction with (C + sum eta A) Vr ~ 0
        AV = np.zeros((m, comp.d, r))
        np.add.at(AV, (cidx, rows), vals[:, None] * right)
        od = off
        np.add.at(AV, (cidx[od], cols[od]), vals[od, None] * left[od])
        R0 = scaling.C @ Vr + np.tensordot(eta_bar, AV, axes=(0, 0))
        J = AV.reshape(m, comp.d * r).T
        try:
            delta, *_ = np.linalg.lstsq(J, -R0.reshape(-1), rcond=None)
        except np.linalg.LinAlgError:
            continue
        yield scaling.unscale_Z(Zp), scaling.unscale_eta(eta_bar + delta), r


# ---------------------------------------------------------------------------
# main solve loop
# ---------------------------------------------------------------------------


def solve(
    form: SdpStandardForm,
    settings: SolverSettings | None = None,
    warm_start=None,
    log=None,
) -> SdpSolution:
    """Run the operator-splitting solver; deterministic given inputs.

    ``warm_start`` is an optional (Z0, lambda0, xi0) initial primal-dual
    guess (e.g. the lift of a local estimate); it accelerates but never
    changes the answer.  ``log`` may be a writable text stream receiving CSV
    lines ``iteration,primal_res,dual_res,gap`` at every residual check.
    """
    settings = settings or SolverSettings()
    comp = _Compiled(form)
    if not np.isfinite(comp.C).all() or not np.isfinite(comp.vals).all():
        raise ValueError("standard form contains non-finite entries")
    scaling = _Scaling(comp, settings)
    gram = _GramSolver(scaling.A)
    A = scaling.A
    b = scaling.b
    c = comp.svec(scaling.C)

    # affine-set feasibility check (b in range(A))
    g0 = gram.solve(b)
    if np.max(np.abs(A @ (A.T @ g0) - b)) > 1e-8 * (1.0 + np.abs(b).max()):
        Z0 = np.zeros((comp.d, comp.d))
        return SdpSolution(
            Z=Z0, lambda_=0.0, xi=np.zeros(comp.m - 1), objective=0.0,
            primal_residual=np.inf, dual_residual=np.inf, gap=np.inf,
            iterations=0, status="Infeasible",
        )

    rho_schedule = [settings.rho] + [r for r in settings.rho_schedule if r != settings.rho]
    rho_idx = 0
    rho = rho_schedule[0]
    alpha = settings.over_relaxation
    y = np.zeros(comp.nvec)
    u = np.zeros(comp.nvec)
    eta_bar = np.zeros(comp.m)
    g = None

    best = None  # (max_res, Z, eta, primal, dual, gap, obj, polished)
    last_improve_iter = 0
    last_switch_iter = 0
    last_best = np.inf
    eps = (settings.eps_primal, settings.eps_dual, settings.eps_gap)

    def evaluate(Zc, etac, it, polished):
        nonlocal best, last_improve_iter, last_best
        pr, du, gp, obj = _spec_residuals(comp, Zc, etac)
        mx = max(pr, du, gp)
        if best is None or mx < best[0]:
            best = (mx, Zc, etac, pr, du, gp, obj, polished)
            if mx < 0.5 * last_best:
                last_best = mx
                last_improve_iter = it
        if log is not None:
            log.write(f"{it},{pr:.3e},{du:.3e},{gp:.3e}\n")
        return pr <= eps[0] and du <= eps[1] and gp <= eps[2]

    def complete_face(Z_cand, zbar, x0, budget, it):
        """Fix the rank-1 face of Z_cand and finish the dual by reduced-KKT
        Douglas-Rachford; returns True when the pair meets the tolerances."""
        try:
            fc = _FaceCompletion(comp, scaling, gram, zbar)
        except np.linalg.LinAlgError:
            return False
        return fc.run(
            x0, budget, lambda eta_b: evaluate(Z_cand, scaling.unscale_eta(eta_b), it, True)
        )

    it = 0
    converged = False
    polish_due = 0
    completion_due = 0

    if warm_start is not None:
        Z0, lam0, xi0 = warm_start
        Z0 = np.asarray(Z0, dtype=float)
        eta0 = _eta_from_duals(comp, lam0, xi0)
        Dinv = 1.0 / scaling.D
        Zbar0 = Dinv[:, None] * Z0 * Dinv[None, :]
        y = comp.svec(Zbar0)
        Sbar0 = scaling.sigma * (scaling.D[:, None] * comp.dual_slack(eta0) * scaling.D[None, :])
        u = -comp.svec(Sbar0) / rho
        # fast path: if the warm candidate's face is optimal, the reduced-KKT
        # completion certifies it in tens of iterations
        w0, V0 = np.linalg.eigh(Zbar0)
        if w0[-1] > 0:
            zbar0 = V0[:, -1]
            converged = complete_face(Z0, zbar0, comp.svec(Sbar0), 300, 0)

    while not converged and it < settings.max_iterations:
        it += 1
        w = y - u - c / rho
        g = gram.solve(A @ w - b)
        z = w - A.T @ g
        z_rel = alpha * z + (1.0 - alpha) * y
        Ybar = psd_project(comp.smat(z_rel + u))
        y_new = comp.svec(Ybar)
        u = u + z_rel - y_new

        if it % settings.check_every == 0 or it == settings.max_iterations:
            if not np.isfinite(y_new).all() or not np.isfinite(u).all():
                raise NumericalBreakdown(f"non-finite iterates at iteration {it}")
            eta_bar = rho * g
            Z = scaling.unscale_Z(Ybar)
            eta = scaling.unscale_eta(eta_bar)
            if evaluate(Z, eta, it, False):
                converged = True
                y = y_new
                break
            if settings.polish and best[0] < 1e-3 and it >= polish_due:
                polish_due = it + settings.check_every * 8
                done = False
                for Zp, etap, r in _polish(comp, scaling, Ybar, eta_bar, _rank_candidates(Ybar)):
                    if evaluate(Zp, etap, it, True):
                        done = True
                        break
                    if r == 1 and it >= completion_due:
                        # LS alone rarely yields a PSD dual; finish it with the
                        # reduced-KKT completion on the same face
                        completion_due = it + settings.check_every * 40
                        Dinv = 1.0 / scaling.D
                        Zbar_p = Dinv[:, None] * Zp * Dinv[None, :]
                        wp, Vp = np.linalg.eigh(Zbar_p)
                        if wp[-1] > 0 and complete_face(
                            Zp, Vp[:, -1], comp.svec(comp.smat(y_new) * 0.0) + comp.svec(
                                scaling.sigma * np.zeros((comp.d, comp.d))
                            ) - comp.svec(np.zeros((comp.d, comp.d))) + (-rho) * u,
                            200,
                            it,
                        ):
                            done = True
                            break
                if done:
                    converged = True
                    y = y_new
                    break
            # deterministic rho schedule: move on when progress dries up
            if (
                it - last_improve_iter >= settings.rho_switch_iterations
                and it - last_switch_iter >= settings.rho_switch_iterations
                and rho_idx + 1 < len(rho_schedule)
            ):
                rho_idx += 1
                new_rho = rho_schedule[rho_idx]
                u *= rho / new_rho
                rho = new_rho
                last_switch_iter = it
            if it - last_improve_iter >= settings.stall_iterations:
                y = y_new
                break
        y = y_new

    if best is None:
        eta_bar = rho * g if g is not None else np.zeros(comp.m)
        Z = scaling.unscale_Z(psd_project(comp.smat(y)))
        evaluate(Z, scaling.unscale_eta(eta_bar), it, False)

    mx, Z, eta, pr, du, gp, obj, polished = best
    lam, xi = _duals_from_eta(comp, eta)
    status = "Solved" if converged or (pr <= eps[0] and du <= eps[1] and gp <= eps[2]) else "MaxIter"
    return SdpSolution(
        Z=Z,
        lambda_=lam,
        xi=xi,
        objective=obj,
        primal_residual=pr,
        dual_residual=du,
        gap=gp,
        iterations=it,
        status=status,
        polished=polished,
    )


_POLISH_RANK_CAP = 8


def _rank_candidates(Zbar: np.ndarray) -> list[int]:
    w = np.linalg.eigvalsh(Zbar)[::-1]
    top = max(w[0], 1e-300)
    r = max(int(np.sum(w > 1e-6 * top)), 1)
    cands = [r] if r <= _POLISH_RANK_CAP else []
    # a rank-1 attempt is cheap and rescues tight instances whose iterate has
    # not yet shed its secondary eigenvalues
    if 1 not in cands:
        cands.append(1)
    return cands
