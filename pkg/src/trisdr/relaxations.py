"""Lifted QCQP construction for the four triangulation relaxations.

Kinds and their monomial bases (0-based coordinate layout):

* ``t``   basis (x_1..x_n, 1), d = 2n+1; view i owns coords 2i, 2i+1, the
          homogeneous coordinate is last.
* ``rt``  basis (y_1..y_n, theta_1..theta_n, 1), d = 3n+1; theta_i sits at
          2n+i, homogeneous last.
* ``tf``  basis xbar (x) Xbar, d = 8n+4; block p in {x_11, .., x_n2, 1} holds
          coords 4p..4p+3 over the homogeneous point Xbar.
* ``rtf`` basis ybar_theta (x) Xbar, d = 12n+4; block order (y, theta, 1).

Constraint matrices are stored as upper-triangular triplets of the (exact)
symmetric matrix; ``quad`` and ``to_dense`` expand them on demand.  The
emitted constraint counts reproduce the reference count law for every kind
(see ``count_law``), including linearly dependent rows, which are kept.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import repeat as _repeat

import numpy as np

from .errors import ThresholdInvalid
from .geometry import TriangulationProblem, camera_matrix, fundamental_matrix

KINDS = ("t", "rt", "tf", "rtf")
ROBUST_KINDS = ("rt", "rtf")
FRACTIONAL_KINDS = ("tf", "rtf")


def normalize_kind(kind: str) -> str:
    k = kind.lower()
    if k not in KINDS:
        raise ValueError(f"unknown relaxation kind {kind!r}; expected one of {KINDS}")
    return k


@dataclass(frozen=True)
class Monomial:
    """One basis element; ``product`` composes a view monomial with Xbar_s."""

    kind: str  # "x" | "y" | "theta" | "one" | "Xbar" | "product"
    i: int = 0  # view index, 1-based
    k: int = 0  # image coordinate, 1 or 2
    s: int = 0  # homogeneous point coordinate, 1..4
    factors: tuple["Monomial", "Monomial"] | None = None

    def label(self) -> str:
        if self.kind == "one":
            return "1"
        if self.kind == "Xbar":
            return f"Xbar_{self.s}"
        if self.kind == "theta":
            return f"theta_{self.i}"
        if self.kind in ("x", "y"):
            return f"{self.kind}_{self.i}^{self.k}"
        if self.kind == "product":
            return f"{self.factors[0].label()}*{self.factors[1].label()}"
        raise ValueError(f"bad monomial kind {self.kind!r}")


class SymmetricConstraint:
    """tr(A Z) = rhs with A stored as upper-triangular triplets (rows <= cols).

    The provenance label is rendered lazily: builders may pass a tuple of
    parts instead of a string to keep construction of large constraint sets
    cheap.
    """

    __slots__ = ("_label", "rows", "cols", "vals", "rhs")

    def __init__(self, label, rows, cols, vals, rhs=0.0):
        self._label = label
        self.rows = rows
        self.cols = cols
        self.vals = vals
        self.rhs = rhs

    @property
    def label(self) -> str:
        if not isinstance(self._label, str):
            head, *idx = self._label
            self._label = f"{head}({','.join(str(i) for i in idx)})"
        return self._label

    def __repr__(self):
        return f"SymmetricConstraint({self.label!r}, nnz={len(self.vals)}, rhs={self.rhs})"

    def quad(self, z: np.ndarray) -> float:
        """z^T A z."""
        prod = self.vals * z[self.rows] * z[self.cols]
        off = self.rows < self.cols
        return float(prod.sum() + prod[off].sum())

    def to_dense(self, d: int) -> np.ndarray:
        A = np.zeros((d, d))
        np.add.at(A, (self.rows, self.cols), self.vals)
        off = self.rows < self.cols
        np.add.at(A, (self.cols[off], self.rows[off]), self.vals[off])
        return A


@dataclass
class QcqpProblem:
    """Lifted problem min z^T M z s.t. z^T E z = 1, z^T A_i z = 0.

    ``constraints`` lists every homogeneous constraint followed by the
    normalization constraint (label ``norm``, rhs 1, matrix E).
    """

    kind: str
    n: int
    basis: list[Monomial]
    M: np.ndarray
    E: np.ndarray
    constraints: list[SymmetricConstraint] = field(repr=False)

    @property
    def d(self) -> int:
        return len(self.basis)

    @property
    def homogeneous_constraints(self) -> list[SymmetricConstraint]:
        return self.constraints[:-1]

    # ---- coordinate layout helpers (0-based) ----

    @property
    def block_count(self) -> int:
        """Kronecker block count p for fractional kinds (z = v (x) Xbar)."""
        if self.kind == "tf":
            return 2 * self.n + 1
        if self.kind == "rtf":
            return 3 * self.n + 1
        raise ValueError(f"kind {self.kind!r} has no Kronecker structure")

    def hom_index(self) -> int:
        if self.kind == "t":
            return 2 * self.n
        if self.kind == "rt":
            return 3 * self.n
        raise ValueError("fractional kinds carry a homogeneous block, not one index")

    def theta_indices(self) -> np.ndarray:
        if self.kind != "rt":
            raise ValueError("direct theta coordinates exist only for kind 'rt'")
        return np.arange(2 * self.n, 3 * self.n)

    def constraint_values(self, z: np.ndarray) -> np.ndarray:
        """z^T A_i z for every constraint (normalization included, rhs not subtracted)."""
        return np.array([c.quad(z) for c in self.constraints])

    def to_diagnostic_json(self) -> dict:
        """Debug-oriented dump; not a stability-guaranteed format."""
        return {
            "kind": self.kind,
            "n": self.n,
            "basis": [m.label() for m in self.basis],
            "M": _dense_triplets(self.M),
            "E": _dense_triplets(self.E),
            "constraints": [
                {
                    "label": c.label,
                    "rows": c.rows.tolist(),
                    "cols": c.cols.tolist(),
                    "vals": c.vals.tolist(),
                    "rhs": c.rhs,
                }
                for c in self.constraints
            ],
        }


def _dense_triplets(A: np.ndarray) -> dict:
    r, c = np.nonzero(np.triu(A))
    return {"rows": r.tolist(), "cols": c.tolist(), "vals": A[r, c].tolist()}


def count_law(kind: str, n: int) -> tuple[int, int]:
    """(variables, constraints) of the reference count law."""
    kind = normalize_kind(kind)
    if kind == "t":
        return 2 * n + 1, n * (n - 1) // 2 + 1
    if kind == "rt":
        return 3 * n + 1, n * (n - 1) // 2 + 3 * n + 1
    if kind == "tf":
        return 8 * n + 4, 28 * n * n + 14 * n + 1
    return 12 * n + 4, 51 * n * n + 65 * n + 1


# ---------------------------------------------------------------------------
# cost matrices
# ---------------------------------------------------------------------------


def cost_matrix_plain(observations: np.ndarray) -> np.ndarray:
    """(2n+1)^2 matrix with ybar^T M ybar = ||y - x~||^2 for stacked y."""
    x = np.asarray(observations, dtype=float).reshape(-1)
    m = x.size
    M = np.zeros((m + 1, m + 1))
    M[:m, :m] = np.eye(m)
    M[:m, m] = -x
    M[m, :m] = -x
    M[m, m] = x @ x
    return M


def cost_matrix_robust(observations: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """(3n+1)^2 robust cost; on theta_i^2 = theta_i, alpha = 1 its quadratic
    form equals sum ||y_i - theta_i x~_i||^2 + sum c_i (1 - theta_i).

    The (theta_i, 1) entries are -c_i/2 so that the identity above holds
    exactly; the homogeneous corner is sum c_i.
    """
    x = np.asarray(observations, dtype=float).reshape(-1, 2)
    c = np.asarray(thresholds, dtype=float).reshape(-1)
    n = x.shape[0]
    if c.shape != (n,):
        raise ThresholdInvalid("one threshold per view required")
    if np.any(c <= 0):
        raise ThresholdInvalid("all thresholds must be positive")
    d = 3 * n + 1
    M = np.zeros((d, d))
    M[: 2 * n, : 2 * n] = np.eye(2 * n)
    for i in range(n):
        M[2 * i : 2 * i + 2, 2 * n + i] = -x[i]
        M[2 * n + i, 2 * i : 2 * i + 2] = -x[i]
        M[2 * n + i, 2 * n + i] = x[i] @ x[i]
        M[2 * n + i, 3 * n] = -c[i] / 2.0
        M[3 * n, 2 * n + i] = -c[i] / 2.0
    M[3 * n, 3 * n] = c.sum()
    return M


# ---------------------------------------------------------------------------
# lifted feasible points (used by certificates and tests)
# ---------------------------------------------------------------------------


def lift_epipolar(observations: np.ndarray) -> np.ndarray:
    """z = (x; 1)."""
    return np.append(np.asarray(observations, dtype=float).reshape(-1), 1.0)


def lift_epipolar_robust(observations: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """z = (y; theta; 1) with y_i = theta_i x_i."""
    x = np.asarray(observations, dtype=float).reshape(-1, 2)
    theta = np.asarray(theta, dtype=float).reshape(-1)
    y = (theta[:, None] * x).reshape(-1)
    return np.concatenate([y, theta, [1.0]])


def lift_fractional(observations: np.ndarray, point_h: np.ndarray) -> np.ndarray:
    """z = xbar (x) Xbar; ``point_h`` should be unit-norm homogeneous."""
    return np.kron(lift_epipolar(observations), np.asarray(point_h, dtype=float))


def lift_fractional_robust(
    observations: np.ndarray, theta: np.ndarray, point_h: np.ndarray
) -> np.ndarray:
    """z = (y; theta; 1) (x) Xbar with y_i = theta_i x_i."""
    return np.kron(
        lift_epipolar_robust(observations, theta), np.asarray(point_h, dtype=float)
    )


# ---------------------------------------------------------------------------
# constraint emission
# ---------------------------------------------------------------------------


def _embedded_bilinear(F: np.ndarray, idx_i, idx_j, label) -> SymmetricConstraint:
    """Symmetrized embedding of u^T F v with u = z[idx_i], v = z[idx_j].

    The index sets are each distinct and overlap at most in the homogeneous
    coordinate, so the 9 bilinear cells map to 9 distinct unordered pairs.
    """
    pi = np.asarray(idx_i, dtype=np.int64)
    pj = np.asarray(idx_j, dtype=np.int64)
    r = np.repeat(pi, 3)
    c = np.tile(pj, 3)
    rows = np.minimum(r, c)
    cols = np.maximum(r, c)
    vals = F.reshape(-1) / 2.0
    diag = r == c
    if diag.any():
        vals = vals.copy()
        vals[diag] *= 2.0
    return SymmetricConstraint(label, rows, cols, vals)


def _pairwise_fundamentals(problem: TriangulationProblem) -> dict[tuple[int, int], np.ndarray]:
    """All F_ij for i < j, with per-view inverses computed once."""
    from .errors import CoincidentCenters
    from .geometry import skew

    n = problem.n
    K_inv = [np.linalg.inv(v.intrinsics.matrix()) for v in problem.views]
    R = [v.pose.R for v in problem.views]
    t = [v.pose.t for v in problem.views]
    out = {}
    for i in range(n):
        RiT = R[i].T
        for j in range(i + 1, n):
            dt = t[j] - t[i]
            if dt @ dt < 1e-24:
                raise CoincidentCenters("views share a camera center")
            out[(i, j)] = K_inv[i].T @ (skew(RiT @ dt) @ (RiT @ R[j])) @ K_inv[j]
    return out


def _norm_constraint(diag_indices, rhs: float = 1.0) -> SymmetricConstraint:
    idx = np.asarray(diag_indices, dtype=np.int64)
    return SymmetricConstraint(
        label="norm", rows=idx, cols=idx.copy(), vals=np.ones(len(idx)), rhs=rhs
    )


def _normalization_matrix(d: int, diag_indices) -> np.ndarray:
    E = np.zeros((d, d))
    for j in diag_indices:
        E[j, j] = 1.0
    return E


def _row_times_basis_constraints(
    support: np.ndarray, coeffs: np.ndarray, d: int, i: int, k: int
) -> list[SymmetricConstraint]:
    """Constraints sym(r e_j^T) for j = 0..d-1, r sparse on ``support``."""
    js = np.arange(d, dtype=np.int64)[:, None]
    rows = np.minimum(support[None, :], js)
    cols = np.maximum(support[None, :], js)
    vals = np.where(support[None, :] == js, coeffs[None, :], coeffs[None, :] / 2.0)
    i1, k1 = i + 1, k + 1
    labels = [("reproj", i1, k1, j) for j in range(1, d + 1)]
    return list(map(SymmetricConstraint, labels, list(rows), list(cols), list(vals)))


def _kron_block_constraints(p: int) -> list[SymmetricConstraint]:
    """Block symmetry of Z for z = v (x) Xbar: 6 constraints per strict-upper block."""
    bp, bq = np.triu_indices(p, k=1)
    st = np.array([(s, t) for s in range(4) for t in range(s + 1, 4)], dtype=np.int64)
    # one row per (block pair, s<t): cells (4P+s, 4Q+t) = 1/2 and (4P+t, 4Q+s) = -1/2
    rows = list((4 * bp[:, None, None] + st[None, :, :]).reshape(-1, 2))
    cols = list((4 * bq[:, None, None] + st[None, :, ::-1]).reshape(-1, 2))
    st1 = [(s + 1, t + 1) for s, t in st.tolist()]
    labels = [
        ("kron", P, Q, s, t)
        for P, Q in zip((bp + 1).tolist(), (bq + 1).tolist())
        for s, t in st1
    ]
    return list(map(SymmetricConstraint, labels, rows, cols, _repeat(np.array([0.5, -0.5]), len(labels))))


def _check_counts(qcqp: QcqpProblem) -> QcqpProblem:
    d, m = count_law(qcqp.kind, qcqp.n)
    if qcqp.d != d or len(qcqp.constraints) != m:
        raise AssertionError(
            f"{qcqp.kind}: built ({qcqp.d}, {len(qcqp.constraints)}), expected ({d}, {m})"
        )
    return qcqp


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def build_epipolar(problem: TriangulationProblem) -> QcqpProblem:
    """Relaxation over reprojections tied by pairwise epipolar constraints."""
    n = problem.n
    hom = 2 * n
    basis = [
        Monomial("x", i=i + 1, k=k + 1) for i in range(n) for k in range(2)
    ] + [Monomial("one")]
    constraints = [
        _embedded_bilinear(F, (2 * i, 2 * i + 1, hom), (2 * j, 2 * j + 1, hom), ("epipolar", i + 1, j + 1))
        for (i, j), F in _pairwise_fundamentals(problem).items()
    ]
    constraints.append(_norm_constraint([hom]))
    return _check_counts(
        QcqpProblem(
            kind="t",
            n=n,
            basis=basis,
            M=cost_matrix_plain(problem.observations()),
            E=_normalization_matrix(2 * n + 1, [hom]),
            constraints=constraints,
        )
    )


def build_epipolar_robust(problem: TriangulationProblem) -> QcqpProblem:
    """TLS extension of the epipolar relaxation with binary inlier variables."""
    n = problem.n
    hom = 3 * n
    basis = (
        [Monomial("y", i=i + 1, k=k + 1) for i in range(n) for k in range(2)]
        + [Monomial("theta", i=i + 1) for i in range(n)]
        + [Monomial("one")]
    )
    constraints = [
        _embedded_bilinear(
            F, (2 * i, 2 * i + 1, 2 * n + i), (2 * j, 2 * j + 1, 2 * n + j), ("epipolar", i + 1, j + 1)
        )
        for (i, j), F in _pairwise_fundamentals(problem).items()
    ]
    for i in range(n):
        th = 2 * n + i
        constraints.append(
            SymmetricConstraint(
                label=f"theta_idem({i + 1})",
                rows=np.array([th, th], dtype=np.int64),
                cols=np.array([th, hom], dtype=np.int64),
                vals=np.array([1.0, -0.5]),
                rhs=0.0,
            )
        )
    # theta_i y_i = y_i, kept although redundant: required for tightness under noise
    for i in range(n):
        th = 2 * n + i
        for k in range(2):
            yk = 2 * i + k
            constraints.append(
                SymmetricConstraint(
                    label=f"theta_y({i + 1},{k + 1})",
                    rows=np.array([yk, yk], dtype=np.int64),
                    cols=np.array([th, hom], dtype=np.int64),
                    vals=np.array([0.5, -0.5]),
                    rhs=0.0,
                )
            )
    constraints.append(_norm_constraint([hom]))
    return _check_counts(
        QcqpProblem(
            kind="rt",
            n=n,
            basis=basis,
            M=cost_matrix_robust(problem.observations(), problem.thresholds()),
            E=_normalization_matrix(3 * n + 1, [hom]),
            constraints=constraints,
        )
    )


def _camera_rows(problem: TriangulationProblem) -> tuple[np.ndarray, np.ndarray]:
    """(n,2,4) rows a_ik and (n,4) rows b_i of the camera matrices."""
    n = problem.n
    a = np.empty((n, 2, 4))
    b = np.empty((n, 4))
    for i, view in enumerate(problem.views):
        P = camera_matrix(view)
        a[i] = P[:2]
        b[i] = P[2]
    return a, b


def build_fractional(problem: TriangulationProblem) -> QcqpProblem:
    """Relaxation of the multiplied-out reprojection equations, z = xbar (x) Xbar."""
    n = problem.n
    p = 2 * n + 1
    d = 4 * p
    hom_block = 2 * n
    xbar_monos = [
        Monomial("x", i=i + 1, k=k + 1) for i in range(n) for k in range(2)
    ] + [Monomial("one")]
    basis = []
    for pm in xbar_monos:
        for s in range(4):
            xb = Monomial("Xbar", s=s + 1)
            basis.append(xb if pm.kind == "one" else Monomial("product", factors=(pm, xb)))
    a, b = _camera_rows(problem)
    constraints = []
    for i in range(n):
        for k in range(2):
            support = np.concatenate(
                [4 * (2 * i + k) + np.arange(4), 4 * hom_block + np.arange(4)]
            ).astype(np.int64)
            coeffs = np.concatenate([b[i], -a[i, k]])
            constraints.extend(_row_times_basis_constraints(support, coeffs, d, i, k))
    constraints.extend(_kron_block_constraints(p))
    norm_diag = 4 * hom_block + np.arange(4)
    constraints.append(_norm_constraint(norm_diag))
    return _check_counts(
        QcqpProblem(
            kind="tf",
            n=n,
            basis=basis,
            M=np.kron(cost_matrix_plain(problem.observations()), np.eye(4)),
            E=_normalization_matrix(d, norm_diag),
            constraints=constraints,
        )
    )


def build_fractional_robust(problem: TriangulationProblem) -> QcqpProblem:
    """TLS extension of the fractional relaxation, z = (y; theta; 1) (x) Xbar.

    The reprojection rows are theta-gated (y_i^k b_i - theta_i a_ik), and the
    binary constraints are lifted against every product Xbar_s Xbar_t.
    """
    n = problem.n
    p = 3 * n + 1
    d = 4 * p
    hom_block = 3 * n
    v_monos = (
        [Monomial("y", i=i + 1, k=k + 1) for i in range(n) for k in range(2)]
        + [Monomial("theta", i=i + 1) for i in range(n)]
        + [Monomial("one")]
    )
    basis = []
    for pm in v_monos:
        for s in range(4):
            xb = Monomial("Xbar", s=s + 1)
            basis.append(xb if pm.kind == "one" else Monomial("product", factors=(pm, xb)))
    a, b = _camera_rows(problem)
    constraints = []
    for i in range(n):
        theta_block = 2 * n + i
        for k in range(2):
            support = np.concatenate(
                [4 * (2 * i + k) + np.arange(4), 4 * theta_block + np.arange(4)]
            ).astype(np.int64)
            coeffs = np.concatenate([b[i], -a[i, k]])
            constraints.extend(_row_times_basis_constraints(support, coeffs, d, i, k))
    constraints.extend(_kron_block_constraints(p))
    hm = 4 * hom_block
    half = np.array([0.5, -0.5])
    diag_vals = np.array([1.0, -0.5])
    st_all = [(s, t) for s in range(4) for t in range(4)]
    th_base = 4 * (2 * n + np.arange(n, dtype=np.int64))

    # theta_idem(i,s,t): cells (th+min(s,t), th+max(s,t)) and (th+t, hm+s)
    r_off = np.array([[min(s, t), t] for s, t in st_all], dtype=np.int64)
    c_th = np.array([max(s, t) for s, t in st_all], dtype=np.int64)
    c_hm = hm + np.array([s for s, _ in st_all], dtype=np.int64)
    rows_idem = list((th_base[:, None, None] + r_off[None, :, :]).reshape(-1, 2))
    cols_idem = list(
        np.stack(
            [th_base[:, None] + c_th[None, :], np.broadcast_to(c_hm, (n, 16))], axis=2
        ).reshape(-1, 2)
    )
    vals_idem = [diag_vals if s == t else half for s, t in st_all] * n
    labels_idem = [
        ("theta_idem", i, s + 1, t + 1) for i in range(1, n + 1) for s, t in st_all
    ]
    constraints.extend(map(SymmetricConstraint, labels_idem, rows_idem, cols_idem, vals_idem))

    # theta_y(i,k,s,t): cells (yk+t, th+s) and (yk+t, hm+s)
    yk_base = 4 * np.arange(2 * n, dtype=np.int64)  # (i,k) flattened
    t_off = np.array([t for _, t in st_all], dtype=np.int64)
    s_off = np.array([s for s, _ in st_all], dtype=np.int64)
    rows_ty = list(
        np.repeat((yk_base[:, None] + t_off[None, :]).reshape(-1), 2).reshape(-1, 2)
    )
    th_per_yk = np.repeat(th_base, 2)
    cols_ty = list(
        np.stack(
            [
                th_per_yk[:, None] + s_off[None, :],
                np.broadcast_to(hm + s_off, (2 * n, 16)),
            ],
            axis=2,
        ).reshape(-1, 2)
    )
    labels_ty = [
        ("theta_y", i, k, s + 1, t + 1)
        for i in range(1, n + 1)
        for k in (1, 2)
        for s, t in st_all
    ]
    constraints.extend(
        map(SymmetricConstraint, labels_ty, rows_ty, cols_ty, _repeat(half, len(labels_ty)))
    )
    norm_diag = 4 * hom_block + np.arange(4)
    constraints.append(_norm_constraint(norm_diag))
    return _check_counts(
        QcqpProblem(
            kind="rtf",
            n=n,
            basis=basis,
            M=np.kron(
                cost_matrix_robust(problem.observations(), problem.thresholds()), np.eye(4)
            ),
            E=_normalization_matrix(d, norm_diag),
            constraints=constraints,
        )
    )


_BUILDERS = {
    "t": build_epipolar,
    "rt": build_epipolar_robust,
    "tf": build_fractional,
    "rtf": build_fractional_robust,
}


def build(problem: TriangulationProblem, kind: str) -> QcqpProblem:
    """Construct the lifted QCQP of the requested kind."""
    return _BUILDERS[normalize_kind(kind)](problem)
