"""Quadratic-form utilities: restriction, interlacing, frame bounds, and
Gram-Schmidt on nearly orthonormal frames.

Frames are passed as matrices whose columns are the frame vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError

ORTHO_TOL = 1e-10
SLACK = 1e-10


def symmetrize(Q) -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    return 0.5 * (Q + Q.T)


def _check_orthonormal(S: np.ndarray, tol: float = ORTHO_TOL) -> None:
    if S.ndim != 2:
        raise PreconditionError("frame must be a 2-d array of column vectors")
    err = np.max(np.abs(S.T @ S - np.eye(S.shape[1]))) if S.shape[1] else 0.0
    if err > tol:
        raise PreconditionError(f"columns are not orthonormal (error {err:.2e})")


def restrict(Q, S) -> np.ndarray:
    """``S^T Q S`` for a matrix ``S`` with orthonormal columns."""
    S = np.asarray(S, dtype=float)
    _check_orthonormal(S)
    return symmetrize(S.T @ symmetrize(Q) @ S)


def frame_values(Q, V) -> np.ndarray:
    """``Q(v_i, v_i)`` for every column of ``V``."""
    V = np.asarray(V, dtype=float)
    return np.einsum("ij,ik,kj->j", V, symmetrize(Q), V)


# ---------------------------------------------------------------------------
# Interlacing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InterlacingResult:
    ok: bool
    lam: np.ndarray
    mu: np.ndarray
    codim: int
    worst_slack: float


def interlacing_check(Q, W, slack: float = SLACK) -> InterlacingResult:
    """Check ``lam_i <= mu_i <= lam_{i+l}`` for the restriction to ``span W``.

    Parameters
    ----------
    Q : array_like, shape (n, n)
        Positive-definite form.
    W : array_like, shape (n, n - l)
        Orthonormal basis of a codimension-``l`` subspace.
    """
    Q = symmetrize(Q)
    lam = np.linalg.eigvalsh(Q)
    mu = np.linalg.eigvalsh(restrict(Q, W))
    l = Q.shape[0] - mu.shape[0]
    lower = mu - lam[: mu.shape[0]]
    upper = lam[l : l + mu.shape[0]] - mu
    worst = float(min(lower.min(initial=np.inf), upper.min(initial=np.inf)))
    if mu.shape[0] == 0:
        worst = 0.0
    return InterlacingResult(bool(worst >= -slack), lam, mu, l, worst)


# ---------------------------------------------------------------------------
# Orthonormal frames versus eigenvalues
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FrameBoundResult:
    ok: bool
    values: np.ndarray
    lam: np.ndarray
    worst_slack: float


def frame_eigen_bound(Q, V, slack: float = SLACK) -> FrameBoundResult:
    """Check ``Q(v_i, v_i) >= lam_i / n`` for a sorted orthonormal basis.

    Raises
    ------
    PreconditionError
        If ``V`` is not orthonormal or not sorted by increasing ``Q``-value.
    """
    Q = symmetrize(Q)
    V = np.asarray(V, dtype=float)
    _check_orthonormal(V)
    vals = frame_values(Q, V)
    if np.any(np.diff(vals) < -1e-12 * max(1.0, np.max(np.abs(vals)))):
        raise PreconditionError("frame must be sorted by increasing Q-value")
    n = Q.shape[0]
    lam = np.linalg.eigvalsh(Q)[: V.shape[1]]
    diff = vals - lam / n
    worst = float(diff.min()) if diff.size else 0.0
    return FrameBoundResult(bool(worst >= -slack * max(1.0, lam.max(initial=0.0))), vals, lam, worst)


def sort_frame(Q, V) -> np.ndarray:
    """Columns of ``V`` reordered by increasing ``Q``-value (stable)."""
    V = np.asarray(V, dtype=float)
    order = np.argsort(frame_values(Q, V), kind="stable")
    return V[:, order]


# ---------------------------------------------------------------------------
# Nearly orthonormal frames
# ---------------------------------------------------------------------------


def frame_deviation(V) -> float:
    """Largest ``|<v_i, v_j>|`` over distinct pairs of unit columns."""
    V = np.asarray(V, dtype=float)
    k = V.shape[1]
    if k < 2:
        return 0.0
    G = V.T @ V
    return float(np.max(np.abs(G[~np.eye(k, dtype=bool)])))


def is_delta_orthonormal(V, delta: float, unit_tol: float = 1e-10) -> bool:
    """Unit columns with pairwise ``|<v_i, v_j>| < delta``.

    The absolute value makes the notion symmetric under sign changes of the
    frame vectors.
    """
    V = np.asarray(V, dtype=float)
    norms = np.linalg.norm(V, axis=0)
    if np.any(np.abs(norms - 1.0) > unit_tol):
        return False
    return frame_deviation(V) < delta


def tau0(n: int) -> float:
    """Threshold below which :func:`perturbed_gram_schmidt` is guaranteed.

    For a ``tau``-orthonormal frame of ``k <= n`` vectors with
    ``s = (k - 1) tau <= 1/4``, the Gram-Schmidt coefficients satisfy
    ``(sum_s |c_s|)^2 <= 1 / ((1 - s)^2 (1 - s tau / (1 - s))) < 2``;
    ``tau = 1 / (4 n)`` meets this for every ``k <= n``.
    """
    return 1.0 / (4.0 * n)


@dataclass(frozen=True)
class GramSchmidtResult:
    U: np.ndarray
    ok: bool
    factors: np.ndarray
    tau: float


def perturbed_gram_schmidt(Q, V, threshold: float | None = None) -> GramSchmidtResult:
    """Gram-Schmidt on a nearly orthonormal frame sorted by ``Q``-value.

    Returns the orthonormal frame ``U`` and checks
    ``Q(u_i, u_i) <= 2 Q(v_i, v_i)``.

    Raises
    ------
    PreconditionError
        If the frame is not ``threshold``-orthonormal (default :func:`tau0`
        of the ambient dimension) or is not sorted.
    """
    Q = symmetrize(Q)
    V = np.asarray(V, dtype=float)
    n = Q.shape[0]
    threshold = tau0(n) if threshold is None else threshold
    tau = frame_deviation(V)
    if not is_delta_orthonormal(V, threshold):
        raise PreconditionError(f"frame deviation {tau:.3e} is not below {threshold:.3e}")
    vals = frame_values(Q, V)
    if np.any(np.diff(vals) < -1e-12 * max(1.0, np.max(np.abs(vals)))):
        raise PreconditionError("frame must be sorted by increasing Q-value")
    U, R = np.linalg.qr(V)
    U = U * np.sign(np.diag(R))[None, :]
    uvals = frame_values(Q, U)
    factors = uvals / np.where(vals > 0, vals, np.inf)
    ok = bool(np.all(uvals <= 2.0 * vals * (1.0 + 1e-12) + 1e-300))
    return GramSchmidtResult(U, ok, factors, tau)


def random_delta_frame(n: int, k: int, tau: float, rng: np.random.Generator) -> np.ndarray:
    """Random unit frame of ``k`` vectors with pairwise ``|<v_i, v_j>| < tau``.

    Built by perturbing a random orthonormal frame and rescaling the
    perturbation until the deviation is just below ``tau``.
    """
    O, _ = np.linalg.qr(rng.standard_normal((n, n)))
    base = O[:, :k]
    E = rng.standard_normal((n, k))
    lo, hi = 0.0, 1.0
    for _ in range(60):
        V = base + hi * E
        V = V / np.linalg.norm(V, axis=0)
        if frame_deviation(V) >= tau:
            break
        hi *= 2.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        V = base + mid * E
        V = V / np.linalg.norm(V, axis=0)
        if frame_deviation(V) < tau:
            lo = mid
        else:
            hi = mid
    V = base + lo * E
    return V / np.linalg.norm(V, axis=0)


def random_spd(n: int, rng: np.random.Generator, spread: float = 3.0) -> np.ndarray:
    """Random positive-definite matrix with log-uniform spectrum."""
    O, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = np.exp(rng.uniform(-spread, spread, n))
    return symmetrize((O * lam) @ O.T)


def calibrate_tau0(n: int, trials: int = 200, seed=0, k: int | None = None) -> float:
    """Largest deviation on a geometric grid for which every random trial keeps
    the Gram-Schmidt factors at most 2.

    An empirical companion to :func:`tau0`; frames use ``k = n`` vectors
    unless given, forms have log-uniform spectra.
    """
    k = n if k is None else k
    rng = np.random.default_rng(seed)
    cases = [(random_spd(n, rng), rng.integers(2**32)) for _ in range(trials)]
    best = 0.0
    for tau in tau0(n) * 2.0 ** np.arange(0, 8, 0.25):
        ok = True
        for Q, s in cases:
            V = random_delta_frame(n, k, tau, np.random.default_rng(s))
            res = perturbed_gram_schmidt(Q, sort_frame(Q, V), threshold=1.0)
            if not res.ok:
                ok = False
                break
        if not ok:
            break
        best = float(tau)
    return best
