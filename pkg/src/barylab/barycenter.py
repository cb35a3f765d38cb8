"""Barycenter functional, straightening map, and the Q1/Q2 forms.

All tangent data is expressed in frame coordinates of the canonical chart at
the evaluation point (see :mod:`barylab.spd`), so the Riemannian metric is the
identity matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space, qr

from .errors import (
    ConditioningError,
    ConvergenceError,
    DegeneracyError,
    DegenerateMeasureError,
    PreconditionError,
)
from .liecore import build_cartan_frame
from .spd import (
    WeightedBoundaryMeasure,
    act,
    busemann_data,
    exp_at,
    hessian_spectrum,
    mixture,
    normalize_det,
    push_measure,
    sample_boundary_measure,
)

HESS_MIN = 1e-8
GRAD_TOL = 1e-10
MAX_ITER = 100
ARMIJO = 1e-4
MAX_HALVINGS = 30
DET_FLOOR = 1e-300


def _sym(a):
    return 0.5 * (a + a.T)


# ---------------------------------------------------------------------------
# Quadratic forms
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuadraticForm:
    """Symmetric ``n x n`` matrix over the frame basis at a chart point."""

    matrix: np.ndarray
    label: str = "other"

    def __call__(self, u, v=None) -> float:
        v = u if v is None else v
        return float(np.asarray(u) @ self.matrix @ np.asarray(v))

    def restrict(self, S: np.ndarray) -> np.ndarray:
        return _sym(S.T @ self.matrix @ S)

    def eigvals(self) -> np.ndarray:
        return np.linalg.eigvalsh(_sym(self.matrix))


def _weighted_forms(x, nu: WeightedBoundaryMeasure):
    vals, grads, ad = busemann_data(x, nu.ks)
    return vals, grads, ad


def _hessian_sum(ad, w, lam):
    """``sum_j w_j ad_j diag(lam) ad_j^T`` as one matrix product."""
    n = ad.shape[1]
    X = ad * np.sqrt(lam)[None, None, :] * np.sqrt(w)[:, None, None]
    X = np.transpose(X, (1, 0, 2)).reshape(n, -1)
    return _sym(X @ X.T)


def q1_form(x, nu: WeightedBoundaryMeasure) -> QuadraticForm:
    """``Q1 = sum_j w_j g_j g_j^T`` with unit Busemann gradients ``g_j``."""
    _, grads, _ = _weighted_forms(x, nu)
    return QuadraticForm(_sym(np.einsum("j,jk,jl->kl", nu.weights, grads, grads)), "Q1")


def q2_form(x, nu: WeightedBoundaryMeasure) -> QuadraticForm:
    """``Q2 = sum_j w_j Hess B_j``."""
    _, _, ad = _weighted_forms(x, nu)
    return QuadraticForm(_hessian_sum(ad, nu.weights, hessian_spectrum(np.shape(x)[0])), "Q2")


def q2bar_form(x, nu: WeightedBoundaryMeasure) -> QuadraticForm:
    """Weighted sum of projectors onto the complements of the atom flats."""
    _, _, ad = _weighted_forms(x, nu)
    lam = hessian_spectrum(np.shape(x)[0], projector=True)
    return QuadraticForm(_hessian_sum(ad, nu.weights, lam), "Q2bar")


def all_forms(x, nu: WeightedBoundaryMeasure):
    """``(Q1, Q2, Q2bar)`` from one pass over the atoms."""
    m = np.shape(x)[0]
    _, grads, ad = _weighted_forms(x, nu)
    w = nu.weights
    q1 = QuadraticForm(_sym(np.einsum("j,jk,jl->kl", w, grads, grads)), "Q1")
    q2 = QuadraticForm(_hessian_sum(ad, w, hessian_spectrum(m)), "Q2")
    q2b = QuadraticForm(_hessian_sum(ad, w, hessian_spectrum(m, projector=True)), "Q2bar")
    return q1, q2, q2b


# ---------------------------------------------------------------------------
# Functional and barycenter
# ---------------------------------------------------------------------------


def functional(x, nu: WeightedBoundaryMeasure, check: bool = True):
    """Value, gradient, and Hessian of ``x -> sum_j w_j B(x, theta_j)``.

    Raises
    ------
    DegenerateMeasureError
        If ``check`` and the Hessian has an eigenvalue below ``1e-8``.
    """
    x = np.asarray(x, dtype=float)
    vals, grads, ad = busemann_data(x, nu.ks)
    w = nu.weights
    value = float(w @ vals)
    grad = w @ grads
    hess = _hessian_sum(ad, w, hessian_spectrum(x.shape[0]))
    if check:
        lo = np.linalg.eigvalsh(hess)[0]
        if lo < HESS_MIN:
            raise DegenerateMeasureError(f"Hessian min eigenvalue {lo:.3e} < {HESS_MIN}")
    return value, grad, hess


def _value(x, nu):
    vals, _, _ = busemann_data(x, nu.ks)
    return float(nu.weights @ vals)


@dataclass
class BarycenterResult:
    point: np.ndarray
    grad_norm: float
    iterations: int
    trace: list = field(default_factory=list)


def solve_barycenter(nu: WeightedBoundaryMeasure, x0=None, tol: float = GRAD_TOL,
                     max_iter: int = MAX_ITER) -> BarycenterResult:
    """Damped Newton iteration for the minimizer of the Busemann functional.

    Newton steps solve ``H s = -g`` in the canonical chart, are retracted with
    :func:`exp_at`, and are halved (at most 30 times) until the Armijo
    condition with constant ``1e-4`` holds.  Near the minimizer the value
    decrease drops under rounding level, so a step that does not increase
    the value beyond rounding and reduces the gradient norm is accepted too.

    Raises
    ------
    ConvergenceError
        After ``max_iter`` iterations without ``|g| <= tol``.
    DegenerateMeasureError
        If the Hessian becomes numerically singular.
    """
    m = nu.m
    frame = build_cartan_frame(m)
    x = np.eye(m) if x0 is None else normalize_det(np.asarray(x0, dtype=float))
    trace = []
    for it in range(max_iter + 1):
        F, g, H = functional(x, nu)
        gn = float(np.linalg.norm(g))
        if gn <= tol:
            trace.append((it, F, gn, 0.0))
            return BarycenterResult(x, gn, it, trace)
        if it == max_iter:
            break
        s = -np.linalg.solve(H, g)
        slope = float(g @ s)
        step = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            try:
                xn = exp_at(x, frame.matrix(step * s))
                Fn = _value(xn, nu)
            except (DegeneracyError, ConditioningError):
                # trial point overflowed; treat as a rejected step
                step *= 0.5
                continue
            if Fn <= F + ARMIJO * step * slope:
                accepted = True
                break
            if Fn <= F + 1e-13 * (1.0 + abs(F)):
                _, gn_new, _ = functional(xn, nu, check=False)
                if np.linalg.norm(gn_new) < gn:
                    accepted = True
                    break
            step *= 0.5
        trace.append((it, F, gn, step))
        if not accepted:
            raise ConvergenceError("line search failed", trace)
        x = xn
    raise ConvergenceError(f"no convergence after {max_iter} Newton steps", trace)


def barycenter(nu: WeightedBoundaryMeasure, x0=None) -> np.ndarray:
    """Minimizer of ``x -> sum_j w_j B(x, theta_j)``."""
    return solve_barycenter(nu, x0).point


# ---------------------------------------------------------------------------
# Straightening
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SimplexConfig:
    """Ordered vertices with common-random-number boundary measures.

    Build with :meth:`from_vertices`; every vertex measure is the same Haar
    sample at ``o`` pushed forward by ``x_i^{1/2}``.
    """

    vertices: tuple
    measures: tuple
    seed: object = None

    @classmethod
    def from_vertices(cls, vertices, N: int, seed) -> "SimplexConfig":
        vertices = tuple(np.asarray(v, dtype=float) for v in vertices)
        measures = tuple(sample_boundary_measure(v, N, seed) for v in vertices)
        return cls(vertices, measures, seed)

    @property
    def k(self) -> int:
        return len(self.vertices) - 1

    @property
    def m(self) -> int:
        return self.vertices[0].shape[0]

    def transported(self, g) -> "SimplexConfig":
        """Apply ``g`` to every vertex and every atom."""
        g = np.asarray(g, dtype=float)
        return SimplexConfig(
            tuple(act(g, v) for v in self.vertices),
            tuple(push_measure(g, mu) for mu in self.measures),
            self.seed,
        )


def spherical_point(a) -> np.ndarray:
    """Validate a point of the spherical simplex."""
    a = np.asarray(a, dtype=float)
    if np.any(a < 0) or abs(np.linalg.norm(a) - 1.0) > 1e-12:
        raise PreconditionError("spherical point needs a_i >= 0 and sum a_i^2 = 1")
    return a


def _measure_at(config: SimplexConfig, delta) -> WeightedBoundaryMeasure:
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (config.k + 1,):
        raise PreconditionError("delta length must be k + 1")
    return mixture(config.measures, delta**2)


def straighten(config: SimplexConfig, delta, x0=None) -> np.ndarray:
    """Barycenter of ``sum_i a_i^2 mu(x_i)``.

    The default initial guess is the vertex with the largest weight.
    """
    return solve_straighten(config, delta, x0).point


def solve_straighten(config: SimplexConfig, delta, x0=None) -> BarycenterResult:
    nu = _measure_at(config, delta)
    if x0 is None:
        x0 = config.vertices[int(np.argmax(np.asarray(delta) ** 2))]
    return solve_barycenter(nu, x0)


def tangent_basis(delta) -> np.ndarray:
    """Orthonormal basis of the tangent space of the sphere at ``delta``."""
    return null_space(np.asarray(delta, dtype=float)[None, :])


def straighten_derivative(config: SimplexConfig, delta, x=None, basis=None) -> np.ndarray:
    """Matrix of the derivative of the straightening map at ``delta``.

    Implicit differentiation of the first-order condition gives
    ``H D(u) = -sum_i 2 a_i u_i gbar_i`` with ``gbar_i`` the mean gradient of
    vertex ``i``'s atoms at the straightened point.

    Returns
    -------
    ndarray, shape (n, k)
        Columns are images of ``basis`` (default :func:`tangent_basis`).
    """
    delta = np.asarray(delta, dtype=float)
    if x is None:
        x = straighten(config, delta)
    nu = _measure_at(config, delta)
    _, _, H = functional(x, nu)
    U = tangent_basis(delta) if basis is None else basis
    rhs = np.zeros((H.shape[0], U.shape[1]))
    for i, mu in enumerate(config.measures):
        if delta[i] == 0.0:
            continue
        _, grads, _ = busemann_data(x, mu.ks)
        gbar = mu.weights @ grads
        rhs += np.outer(gbar, 2.0 * delta[i] * U[i])
    return -np.linalg.solve(H, rhs)


# ---------------------------------------------------------------------------
# Ratios and Jacobians
# ---------------------------------------------------------------------------


def ratio_from_forms(Q1: np.ndarray, Q2: np.ndarray, S: np.ndarray) -> float:
    """``det(Q1|S)^{1/2} / det(Q2|S)``; ``inf`` when ``det(Q2|S) < 1e-300``."""
    if S.shape[1] == 0:
        return 1.0
    A = _sym(S.T @ Q1 @ S)
    B = _sym(S.T @ Q2 @ S)
    sb, lb = np.linalg.slogdet(B)
    if sb <= 0 or lb < np.log(DET_FLOOR):
        return float("inf")
    sa, la = np.linalg.slogdet(A)
    if sa <= 0:
        return 0.0
    return float(np.exp(0.5 * la - lb))


def ratio(x, nu: WeightedBoundaryMeasure, S: np.ndarray) -> float:
    """``det(Q1|S)^{1/2} / det(Q2|S)`` at ``x`` for the measure ``nu``."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[1] < 1:
        raise PreconditionError("S must have at least one column")
    if np.max(np.abs(S.T @ S - np.eye(S.shape[1]))) > 1e-8:
        raise PreconditionError("S must have orthonormal columns")
    q1, q2, _ = all_forms(x, nu)
    return ratio_from_forms(q1.matrix, q2.matrix, S)


def column_span(M: np.ndarray, rtol: float = 1e-10):
    """Orthonormal basis of the column span via pivoted QR; returns ``(S, rank)``."""
    Q, R, _ = qr(M, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    if d.size == 0 or d[0] == 0.0:
        return Q[:, :0], 0
    rank = int(np.sum(d > rtol * d[0]))
    return Q[:, :rank], rank


@dataclass
class JacobianRecord:
    jac: float
    bound: float
    ratio: float
    ok: bool
    degenerate: bool
    point: np.ndarray
    S: np.ndarray
    Q1S: np.ndarray
    Q2S: np.ndarray
    iterations: int
    grad_norm: float


def jacobian(config: SimplexConfig, delta, rank_rtol: float = 1e-10) -> JacobianRecord:
    """Jacobian of the straightening map and its determinant-ratio bound.

    ``jac = sqrt(det(M^T M))`` for the derivative matrix ``M`` in orthonormal
    bases, and ``bound = 2^k det(Q1|S)^{1/2} / det(Q2|S)`` with ``S`` the
    column span of ``M``.  A rank-deficient ``M`` gives ``jac = 0`` and sets
    ``degenerate``.
    """
    delta = np.asarray(delta, dtype=float)
    res = solve_straighten(config, delta)
    x = res.point
    M = straighten_derivative(config, delta, x)
    k = M.shape[1]
    sv = np.linalg.svd(M, compute_uv=False)
    S, rank = column_span(M, rank_rtol)
    degenerate = rank < k
    jac = 0.0 if degenerate else float(np.prod(sv))
    nu = _measure_at(config, delta)
    q1, q2, _ = all_forms(x, nu)
    rt = ratio_from_forms(q1.matrix, q2.matrix, S)
    bound = (2.0**k) * rt
    ok = bool(jac <= bound * (1.0 + 1e-6))
    return JacobianRecord(
        jac, bound, rt, ok, degenerate, x, S, q1.restrict(S), q2.restrict(S), res.iterations, res.grad_norm
    )


def cauchy_schwarz_slack(q1: np.ndarray, q2: np.ndarray, M: np.ndarray, U: np.ndarray,
                         V: np.ndarray) -> float:
    """Minimum of ``2 Q1(v,v)^{1/2} |u| - |Q2(D u, v)|`` over paired samples.

    ``U`` holds tangent-coordinate columns ``u`` (images ``D u = M u``) and
    ``V`` holds chart-coordinate columns ``v``.
    """
    DU = M @ U
    lhs = np.abs(np.einsum("ij,ik,kj->j", DU, q2, V))
    rhs = 2.0 * np.sqrt(np.maximum(np.einsum("ij,ik,kj->j", V, q1, V), 0.0)) * np.linalg.norm(U, axis=0)
    return float(np.min(rhs - lhs))


# ---------------------------------------------------------------------------
# Determinant-ratio certificate from a matched frame
# ---------------------------------------------------------------------------


@dataclass
class ChainCertificate:
    """Numerical replay of the small-eigenvalue argument bounding the ratio.

    ``steps`` maps each inequality of the chain to ``(holds, worst_slack)``.
    """

    applicable: bool
    k: int
    small_eigenvalues: np.ndarray
    C: float
    bound: float
    ratio: float
    holds: bool
    steps: dict = field(default_factory=dict)
    note: str = ""


def _as_matrix(Q):
    return np.asarray(Q.matrix if isinstance(Q, QuadraticForm) else Q, dtype=float)


def _rank_from_n(n: int) -> int:
    m = int(round((-1 + np.sqrt(9 + 8 * n)) / 2))
    return m - 1


def determinant_chain_check(Q1, Q2, S, matched_frame, eps0: float, r: int | None = None,
                          owners=None) -> ChainCertificate:
    """Replay the chain bounding ``det(Q1|S)^{1/2} / det(Q2|S)``.

    Parameters
    ----------
    Q1, Q2 : QuadraticForm or ndarray, shape (n, n)
    S : ndarray, shape (n, s)
        Orthonormal basis of the subspace.
    matched_frame : ndarray, shape (n, 2k + r - 2), or object with
        ``vectors`` and ``owners``, or None when no small eigenvalue exists.
        Column ``j`` must serve small eigenvalue ``owners[j]`` (0-based,
        eigenvalue 0 receives ``r`` columns, the others two).
    eps0 : float
        Small-eigenvalue threshold, at most ``1/(r+1)``.

    Steps checked: ``Q1(v') <= C L_owner`` (defines the empirical ``C``),
    Gram-Schmidt doubling, ``lam_j(Q1) <= n Q1(u_j)`` on the sorted frame,
    interlacing ``mu_i(Q1|S) <= lam_{i+l}(Q1)``, eigenvalues of ``Q1|S`` at
    most one, and finally ``ratio <= (2 n C)^k / eps0^(s - k)``.

    Raises
    ------
    PreconditionError
        If the frame is not ``tau0(n)``-orthonormal or has the wrong shape.
    """
    from .forms import frame_values, perturbed_gram_schmidt, sort_frame, tau0

    A1, A2 = _sym(_as_matrix(Q1)), _sym(_as_matrix(Q2))
    n = A1.shape[0]
    r = _rank_from_n(n) if r is None else r
    S = np.asarray(S, dtype=float)
    s = S.shape[1]
    if eps0 > 1.0 / (r + 1) + 1e-15:
        raise PreconditionError("eps0 must be at most 1/(r+1)")
    actual = ratio_from_forms(A1, A2, S)
    mu2, Y = np.linalg.eigh(_sym(S.T @ A2 @ S))
    small = mu2[mu2 < eps0]
    k = len(small)
    steps = {}
    if k > r:
        return ChainCertificate(False, k, small, np.nan, np.inf, actual, True, steps,
                                "more than r small eigenvalues")
    if k == 0:
        bound = eps0 ** (-s)
        q1s = np.linalg.eigvalsh(_sym(S.T @ A1 @ S))
        steps["q1_restricted_le_1"] = (bool(q1s.max() <= 1 + 1e-10), float(1 - q1s.max()))
        holds = bool(actual <= bound * (1 + 1e-9))
        return ChainCertificate(True, 0, small, 0.0, bound, actual, holds, steps)
    if matched_frame is None:
        raise PreconditionError("a matched frame is required when small eigenvalues exist")
    if hasattr(matched_frame, "vectors"):
        V = np.asarray(matched_frame.vectors, dtype=float)
        owners = matched_frame.owners
    else:
        V = np.asarray(matched_frame, dtype=float)
        if owners is None:
            owners = (0,) * r + tuple(i for i in range(1, k) for _ in range(2))
    owners = tuple(int(o) for o in owners)
    expected = sorted((0,) * r + tuple(i for i in range(1, k) for _ in range(2)))
    if sorted(owners) != expected or V.shape != (n, len(owners)):
        raise PreconditionError("matched frame must hold r vectors for L_1 and two for each other L_i")
    l = n - s
    if l > r - 2:
        raise PreconditionError("subspace codimension must be at most r - 2")
    # matched directions
    L = np.array([small[o] for o in owners])
    q1v = frame_values(A1, V)
    C = float(np.max(q1v / L))
    steps["matched_q1_le_C_L"] = (True, float(np.min(C * L - q1v)))
    # Gram-Schmidt on the Q1-sorted frame
    order = np.argsort(q1v, kind="stable")
    Vs = V[:, order]
    gs = perturbed_gram_schmidt(A1, Vs, tau0(n))
    steps["gram_schmidt_doubling"] = (gs.ok, float(np.min(2 * frame_values(A1, Vs) - frame_values(A1, gs.U))))
    U = sort_frame(A1, gs.U)
    uvals = frame_values(A1, U)
    lam = np.linalg.eigvalsh(A1)
    M = U.shape[1]
    slack = n * uvals - lam[:M]
    steps["eigen_vs_frame"] = (bool(np.all(slack >= -1e-10)), float(slack.min()))
    bounds = np.sort(2 * n * C * L)
    steps["frame_vs_bounds"] = (bool(np.all(n * uvals <= bounds * (1 + 1e-9))), float(np.min(bounds - n * uvals)))
    mu1 = np.linalg.eigvalsh(_sym(S.T @ A1 @ S))
    il = lam[l : l + 2 * k] - mu1[: 2 * k]
    steps["interlacing"] = (bool(np.all(il >= -1e-10)), float(il.min()))
    steps["q1_restricted_le_1"] = (bool(mu1.max() <= 1 + 1e-10), float(1 - mu1.max()))
    prod_bound = np.prod([2 * n * C * small[j // 2] for j in range(2 * k)])
    det1 = float(np.prod(np.clip(mu1, 0.0, None)))
    steps["det_q1_le_product"] = (bool(det1 <= prod_bound * (1 + 1e-9)), float(prod_bound - det1))
    bound = float((2 * n * C) ** k / eps0 ** (s - k))
    holds = bool(actual <= bound * (1 + 1e-9)) and all(v[0] for v in steps.values())
    return ChainCertificate(True, k, small, C, bound, actual, holds, steps)


def matched_frame_for_forms(frame, Q2, S, eps0: float, rho: float = 0.2,
                            delta: float = 0.05, c_prime: float = 20.0):
    """Matched frame for the small eigenvectors of ``Q2|S``.

    The eigenvectors are first rotated toward the flat by the orthogonal
    matrix diagonalizing a generic combination of them; if they then lie
    within ``delta`` of the flat, weak eigenvalue matching produces the frame,
    which is rotated back.  Returns ``None`` when the rotated eigenvectors
    are too far from the flat or the matching is infeasible.
    """
    from .errors import BaryLabError
    from .matching import angle_to_flat, weak_eigenvalue_matching

    A2 = _sym(_as_matrix(Q2))
    mu2, Y = np.linalg.eigh(_sym(S.T @ A2 @ S))
    sel = np.flatnonzero(mu2 < eps0)
    if sel.size == 0 or sel.size > frame.r:
        return None
    Vc = S @ Y[:, sel]
    coeffs = 1.0 / np.sqrt(np.array([2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31][: sel.size], float))
    Z = frame.matrix(Vc @ coeffs)
    _, E = np.linalg.eigh(Z)
    k0 = E.T
    if np.linalg.det(k0) < 0:
        k0[0] *= -1
    Vr = np.array([frame.coords(k0 @ frame.matrix(c) @ k0.T) for c in Vc.T]).T
    eps = float(np.max(angle_to_flat(frame, Vr)))
    if eps * (1 + 1e-6) + 1e-15 >= delta:
        return None
    try:
        res = weak_eigenvalue_matching(frame, Vr, eps * (1 + 1e-6) + 1e-15, rho, c_prime, delta)
    except BaryLabError:
        return None
    back = np.array([frame.coords(k0.T @ frame.matrix(c) @ k0) for c in res.vectors.T]).T
    res.vectors = back
    return res
