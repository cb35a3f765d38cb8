"""SPD-matrix model of ``SL(m, R)/SO(m)``.

Points are symmetric positive-definite matrices with determinant one and the
group acts by ``g . p = g p g^T``; the base point is the identity ``o``.

Metric normalization
--------------------
Tangent vectors are traceless symmetric matrices ``Y`` carried to the base
point, with ``|Y|^2 = trace(Y Y)``.  The unit-speed geodesic from ``o`` with
velocity ``Y`` is ``t -> expm(2 t Y)``, i.e. the orbit of the one-parameter
group ``exp(tY)``.  Hence::

    exp_at(p, Y)  = p^{1/2} expm(2 Y) p^{1/2}
    log_at(p, q)  = logm(p^{-1/2} q p^{-1/2}) / 2
    distance(p,q) = |logm(p^{-1/2} q p^{-1/2})|_F / 2

With this scaling the Busemann Hessian toward a Weyl-chamber direction ``b``
has eigenvalue ``alpha(b)`` on the root space ``p_alpha``.

Boundary points
---------------
The chamber barycenter ``b`` is a decreasing diagonal matrix, so the
stabilizer of ``b(inf)`` is the group of upper-triangular matrices.  The
boundary point ``gamma . b(inf)`` therefore only depends on the orthogonal
factor of ``gamma = k a n``; atoms store that factor in a canonical sign form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import mpmath
import numpy as np

from .errors import ConditioningError, DegeneracyError, PreconditionError
from .liecore import CartanFrame, build_cartan_frame, chamber_barycenter

COND_LIMIT = 1e12


# ---------------------------------------------------------------------------
# Symmetric matrix functions
# ---------------------------------------------------------------------------


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _eigh_spd(p: np.ndarray):
    w, v = np.linalg.eigh(_sym(p))
    if not np.all(np.isfinite(w)) or np.min(w) <= 0.0:
        raise DegeneracyError("matrix is not positive definite")
    return w, v


def spd_power(p: np.ndarray, s: float) -> np.ndarray:
    """``p**s`` for a symmetric positive-definite matrix."""
    w, v = _eigh_spd(p)
    return (v * w**s) @ v.T


def spd_sqrt(p: np.ndarray) -> np.ndarray:
    return spd_power(p, 0.5)


def spd_invsqrt(p: np.ndarray) -> np.ndarray:
    return spd_power(p, -0.5)


def sym_expm(U: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(_sym(U))
    return (v * np.exp(w)) @ v.T


def spd_logm(p: np.ndarray) -> np.ndarray:
    w, v = _eigh_spd(p)
    return (v * np.log(w)) @ v.T


def normalize_det(p: np.ndarray) -> np.ndarray:
    """Symmetrize and rescale to determinant one."""
    p = _sym(p)
    sign, logdet = np.linalg.slogdet(p)
    if sign <= 0:
        raise DegeneracyError("matrix is not positive definite")
    return p * np.exp(-logdet / p.shape[0])


# ---------------------------------------------------------------------------
# Exponential, logarithm, distance
# ---------------------------------------------------------------------------


def base_point(m: int) -> np.ndarray:
    return np.eye(m)


def exp_at(p: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Point at time one along the geodesic from ``p`` with velocity ``U``.

    ``U`` lives in the canonical chart at the base point and is carried to
    ``p`` by ``p^{1/2}``.
    """
    h = spd_sqrt(p)
    return normalize_det(h @ sym_expm(2.0 * np.asarray(U, dtype=float)) @ h)


def log_at(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Inverse of :func:`exp_at` in the canonical chart at ``p``."""
    hi = spd_invsqrt(p)
    return 0.5 * spd_logm(hi @ q @ hi)


def distance(p: np.ndarray, q: np.ndarray) -> float:
    hi = spd_invsqrt(p)
    w = np.linalg.eigvalsh(_sym(hi @ q @ hi))
    if np.min(w) <= 0.0:
        raise DegeneracyError("matrix is not positive definite")
    return float(0.5 * np.sqrt(np.sum(np.log(w) ** 2)))


def geodesic(p: np.ndarray, q: np.ndarray, t: float) -> np.ndarray:
    """Point at fraction ``t`` of the geodesic from ``p`` to ``q``."""
    return exp_at(p, t * log_at(p, q))


def act(g: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Group action ``g . p = g p g^T``."""
    return _sym(g @ p @ g.T)


# ---------------------------------------------------------------------------
# Iwasawa decomposition
# ---------------------------------------------------------------------------


def _qr_positive(G: np.ndarray):
    """Batched QR with positive diagonal in ``R``."""
    Q, R = np.linalg.qr(G)
    d = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    d = np.where(d == 0, 1.0, d)
    Q = Q * d[..., None, :]
    R = R * d[..., :, None]
    return Q, R


def iwasawa_kan(g: np.ndarray):
    """Decompose ``g = k expm(H) n``.

    Parameters
    ----------
    g : ndarray, shape (m, m)
        Group element with unit determinant.

    Returns
    -------
    k : ndarray
        Orthogonal factor with determinant one.
    H : ndarray
        Traceless diagonal matrix.
    n : ndarray
        Upper unitriangular factor.

    Raises
    ------
    ConditioningError
        If the condition number of ``g`` exceeds ``1e12``.
    """
    g = np.asarray(g, dtype=float)
    det = np.linalg.det(g)
    if abs(det - 1.0) > 1e-8:
        raise PreconditionError(f"det g = {det} is not 1")
    if np.linalg.cond(g) > COND_LIMIT:
        raise ConditioningError("group element is too ill-conditioned")
    k, R = _qr_positive(g)
    d = np.diagonal(R).copy()
    H = np.diag(np.log(d))
    H -= np.eye(len(d)) * np.trace(H) / len(d)
    n = R / d[:, None]
    return k, H, n


# ---------------------------------------------------------------------------
# Boundary atoms and measures
# ---------------------------------------------------------------------------


def canonical_k(k: np.ndarray) -> np.ndarray:
    """Canonical representative of ``k M`` for diagonal sign matrices ``M``.

    For each of the first ``m - 1`` columns the entry of largest magnitude is
    made positive by flipping that column together with the last one, which
    keeps the determinant.  Works on stacks of matrices.
    """
    k = np.array(k, dtype=float, copy=True)
    m = k.shape[-1]
    for c in range(m - 1):
        col = k[..., :, c]
        idx = np.argmax(np.abs(col), axis=-1)
        lead = np.take_along_axis(col, idx[..., None], axis=-1)[..., 0]
        flip = np.where(lead < 0, -1.0, 1.0)
        k[..., :, c] *= flip[..., None]
        k[..., :, m - 1] *= flip[..., None]
    return k


def _k_factor(G: np.ndarray) -> np.ndarray:
    Q, _ = _qr_positive(G)
    det = np.linalg.det(Q)
    if np.any(det < 0):
        raise PreconditionError("representative must have positive determinant")
    return canonical_k(Q)


@dataclass(frozen=True, eq=False)
class BoundaryAtom:
    """Boundary point ``k . b(inf)`` stored by its canonical orthogonal factor."""

    k: np.ndarray

    @classmethod
    def from_group(cls, gamma) -> "BoundaryAtom":
        gamma = np.asarray(gamma, dtype=float)
        det = np.linalg.det(gamma)
        if abs(det - 1.0) > 1e-9 * max(1.0, np.linalg.norm(gamma) ** gamma.shape[0]):
            raise PreconditionError(f"det gamma = {det} is not 1")
        return cls(_k_factor(gamma))

    @property
    def m(self) -> int:
        return self.k.shape[0]


@dataclass(frozen=True, eq=False)
class WeightedBoundaryMeasure:
    """Finite boundary measure with atoms stacked as ``ks[j]`` and weights ``w[j]``."""

    ks: np.ndarray
    weights: np.ndarray
    seed: object = None
    n_samples: int | None = None

    def __post_init__(self):
        if self.ks.ndim != 3 or self.ks.shape[0] < 1:
            raise PreconditionError("measure needs at least one atom")
        if self.weights.shape != (self.ks.shape[0],) or np.any(self.weights <= 0):
            raise PreconditionError("weights must be positive, one per atom")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise PreconditionError("weights must sum to 1")

    @property
    def m(self) -> int:
        return self.ks.shape[1]

    def __len__(self) -> int:
        return self.ks.shape[0]

    @property
    def atoms(self) -> list:
        return [BoundaryAtom(k) for k in self.ks]

    def to_json(self) -> str:
        def mat(a):
            return [[float(format(x, ".17g")) for x in row] for row in a]

        doc = {
            "m": self.m,
            "N": len(self),
            "seed": self.seed,
            "n_samples": self.n_samples,
            "weights": [float(format(w, ".17g")) for w in self.weights],
            "atoms": [mat(k) for k in self.ks],
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "WeightedBoundaryMeasure":
        doc = json.loads(text)
        return cls(
            np.array(doc["atoms"], dtype=float),
            np.array(doc["weights"], dtype=float),
            doc.get("seed"),
            doc.get("n_samples"),
        )


def haar_so(m: int, N: int, rng: np.random.Generator) -> np.ndarray:
    """``N`` Haar-distributed elements of ``SO(m)``."""
    Q, _ = _qr_positive(rng.standard_normal((N, m, m)))
    neg = np.linalg.det(Q) < 0
    Q[neg, :, 0] *= -1.0
    return Q


def push_measure(g: np.ndarray, nu: WeightedBoundaryMeasure) -> WeightedBoundaryMeasure:
    """Push every atom forward by ``g``; weights are unchanged."""
    g = np.asarray(g, dtype=float)
    return WeightedBoundaryMeasure(_k_factor(g @ nu.ks), nu.weights.copy(), nu.seed, nu.n_samples)


def sample_boundary_measure(x: np.ndarray, N: int, seed) -> WeightedBoundaryMeasure:
    """Equal-weight surrogate of the equivariant measure at ``x``.

    Haar samples ``k_j`` on ``SO(m)`` from ``seed`` are transported by
    ``x^{1/2}``; so the result equals ``push_measure(x^{1/2}, sample at o)``.
    """
    if N < 1:
        raise PreconditionError("N must be >= 1")
    x = np.asarray(x, dtype=float)
    m = x.shape[0]
    ks = canonical_k(haar_so(m, N, np.random.default_rng(seed)))
    nu0 = WeightedBoundaryMeasure(ks, np.full(N, 1.0 / N), seed, N)
    if np.array_equal(x, np.eye(m)):
        return nu0
    return push_measure(spd_sqrt(x), nu0)


def mixture(measures, coefficients) -> WeightedBoundaryMeasure:
    """``sum_i c_i nu_i`` for nonnegative ``c_i`` summing to one.

    Measures with zero coefficient are dropped.
    """
    ks, ws = [], []
    for nu, c in zip(measures, coefficients):
        if c > 0:
            ks.append(nu.ks)
            ws.append(c * nu.weights)
    w = np.concatenate(ws)
    return WeightedBoundaryMeasure(np.concatenate(ks), w / w.sum())


# ---------------------------------------------------------------------------
# Busemann functions
# ---------------------------------------------------------------------------


def _bdiag(m: int) -> np.ndarray:
    frame = build_cartan_frame(m)
    return np.diagonal(chamber_barycenter(frame).matrix(frame)).copy()


def _busemann_factors(x: np.ndarray, ks: np.ndarray):
    """Orthogonal factors and log-diagonals of ``x^{-1/2} k_j``."""
    G = spd_invsqrt(x) @ ks
    Q, R = _qr_positive(G)
    d = np.abs(np.diagonal(R, axis1=-2, axis2=-1))
    if np.any(d <= 0) or np.min(d) < np.max(d) / COND_LIMIT:
        raise ConditioningError("Iwasawa factor too ill-conditioned")
    return Q, np.log(d)


def busemann_values(x: np.ndarray, ks: np.ndarray) -> np.ndarray:
    """Closed-form Busemann values for a stack of atoms."""
    x = np.asarray(x, dtype=float)
    _, logd = _busemann_factors(x, ks)
    return logd @ _bdiag(x.shape[0])


def busemann(x: np.ndarray, theta: BoundaryAtom) -> float:
    """``B(x, theta)`` normalized by ``B(o, theta) = 0``.

    If ``x^{-1/2} k = Q R`` (positive-diagonal QR) then
    ``B(x, k b(inf)) = <log diag R, b>``.  Along the ray
    ``k expm(2 t b) k^T`` this gives ``-t``.
    """
    return float(busemann_values(x, theta.k[None])[0])


def busemann_oracle(x: np.ndarray, theta: BoundaryAtom, t: float) -> float:
    """``d(x, gamma(t)) - t`` with ``gamma(t) = k expm(2 t b) k^T``.

    Evaluated in arbitrary precision, with enough digits to resolve the
    eigenvalues of the ill-conditioned matrix ``x^{-1} gamma(t)``.
    """
    if t < 1:
        raise PreconditionError("t must be >= 1")
    x = np.asarray(x, dtype=float)
    m = x.shape[0]
    b = _bdiag(m)
    spread = 2.0 * t * (b[0] - b[-1])
    dps = int(spread / np.log(10.0)) + 40
    with mpmath.workdps(dps):
        X = mpmath.matrix(x.tolist())
        K = mpmath.matrix(theta.k.tolist())
        A = K.T * mpmath.inverse(X) * K
        e = [mpmath.exp(mpmath.mpf(t) * mpmath.mpf(float(bi))) for bi in b]
        M = mpmath.matrix(m, m)
        for i in range(m):
            for j in range(m):
                M[i, j] = e[i] * A[i, j] * e[j]
        M = (M + M.T) / 2
        w = mpmath.eigsy(M, eigvals_only=True)
        d = mpmath.sqrt(sum(mpmath.log(wi) ** 2 for wi in w)) / 2
        return float(d - t)


def _adjoint_coords(frame: CartanFrame, Q: np.ndarray) -> np.ndarray:
    """Matrices of ``Ad(Q_j)`` on the frame basis, shape ``(N, n, n)``.

    Column ``l`` holds the coordinates of ``Q B_l Q^T``; computed as
    ``B (Q kron Q) B^T`` with the basis flattened row-major.
    """
    m = frame.m
    Bf = frame.basis.reshape(frame.n, m * m)
    N = Q.shape[0]
    kron = (Q[:, :, None, :, None] * Q[:, None, :, None, :]).reshape(N, m * m, m * m)
    return Bf @ kron @ Bf.T


def busemann_data(x: np.ndarray, ks: np.ndarray):
    """Values, gradients, and adjoint frames for a stack of atoms.

    Returns
    -------
    values : ndarray, shape (N,)
    grads : ndarray, shape (N, n)
        Frame coordinates of the gradients in the canonical chart at ``x``.
    ad : ndarray, shape (N, n, n)
        ``Ad(Q_j)`` on the frame basis; the Hessian of atom ``j`` is
        ``ad[j] diag(spectrum) ad[j]^T`` with :func:`hessian_spectrum`.
    """
    x = np.asarray(x, dtype=float)
    m = x.shape[0]
    frame = build_cartan_frame(m)
    Q, logd = _busemann_factors(x, ks)
    b = _bdiag(m)
    ad = _adjoint_coords(frame, Q)
    bc = frame.coords(np.diag(b))
    grads = -ad @ bc
    return logd @ b, grads, ad


def hessian_spectrum(m: int, projector: bool = False) -> np.ndarray:
    """Diagonal of the Busemann Hessian at ``o`` toward ``b(inf)`` in the frame.

    Zero on ``a`` and ``alpha(b)`` on each ``p_alpha``; with
    ``projector=True`` the root values are replaced by one.
    """
    frame = build_cartan_frame(m)
    b = chamber_barycenter(frame)
    vals = np.ones(len(frame.roots)) if projector else frame.root_values(b.matrix(frame))
    return np.concatenate([np.zeros(frame.r), vals])


def busemann_gradient(x: np.ndarray, theta: BoundaryAtom) -> np.ndarray:
    """Unit gradient of ``B(., theta)`` at ``x`` in the canonical chart (matrix).

    Equals ``-Q diag(b) Q^T`` where ``Q`` is the orthogonal factor of
    ``x^{-1/2} k``.
    """
    x = np.asarray(x, dtype=float)
    Q, _ = _busemann_factors(x, theta.k[None])
    return -(Q[0] * _bdiag(x.shape[0])) @ Q[0].T


def busemann_hessian(x: np.ndarray, theta: BoundaryAtom) -> np.ndarray:
    """Hessian of ``B(., theta)`` at ``x`` as an ``n x n`` frame matrix."""
    x = np.asarray(x, dtype=float)
    _, _, ad = busemann_data(x, theta.k[None])
    lam = hessian_spectrum(x.shape[0])
    return _sym((ad[0] * lam) @ ad[0].T)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def point_to_json(p: np.ndarray) -> str:
    return json.dumps([[float(format(x, ".17g")) for x in row] for row in np.asarray(p)])


def point_from_json(text: str) -> np.ndarray:
    return np.array(json.loads(text), dtype=float)
