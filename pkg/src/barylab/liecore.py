"""Lie-theoretic data for sl(m, R) and abstract root systems of types A-D.

Conventions
-----------
The tangent space at the base point is the space of traceless symmetric
matrices with inner product ``<U, V> = trace(U V)``.  The maximal abelian
subalgebra ``a`` is the traceless diagonal matrices; abstract coordinates on
``a`` are taken with respect to the Helmert basis ``a_basis`` so that type
``A_{m-1}`` from :func:`root_system` and the roots of :func:`build_cartan_frame`
share one coordinate system.  Positive roots are ``alpha_ij(diag h) = h_i - h_j``
for ``i < j`` in lexicographic order.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConstructionError, SizeError

SINGULAR_TOL = 1e-9
MAX_M = 12


# ---------------------------------------------------------------------------
# Root systems
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RootSystem:
    """Crystallographic root system realized in Euclidean ``R^rank``.

    Attributes
    ----------
    family : str
        One of ``"A"``, ``"B"``, ``"C"``, ``"D"``.
    rank : int
        Dimension of the ambient space.
    positive : ndarray, shape (P, rank)
        Positive roots ``H_alpha``; ``alpha(v) = <H_alpha, v>``.
    multiplicities : tuple of int
        ``dim g_alpha`` per positive root (always 1 here).
    """

    family: str
    rank: int
    positive: np.ndarray
    multiplicities: tuple

    @property
    def roots(self) -> np.ndarray:
        """All roots: positive ones followed by their negatives."""
        return np.vstack([self.positive, -self.positive])

    @property
    def n_positive(self) -> int:
        return self.positive.shape[0]

    def values(self, v) -> np.ndarray:
        """Positive-root values ``alpha(v)`` at a vector of ``a``."""
        return self.positive @ np.asarray(v, dtype=float)

    def simple_roots(self) -> np.ndarray:
        """Indices of the simple roots of the stored positive system."""
        return np.array(_simple_indices(self.positive), dtype=int)

    def crystallographic_residual(self) -> float:
        """Largest distance from a reflected root to the nearest root.

        Also folds in the integrality of the Cartan integers
        ``2<a,b>/<a,a>``.  Zero for a valid root system.
        """
        R = self.roots
        worst = 0.0
        for a in R:
            aa = a @ a
            for b in R:
                c = 2.0 * (a @ b) / aa
                worst = max(worst, abs(c - round(c)))
                refl = b - c * a
                worst = max(worst, float(np.min(np.linalg.norm(R - refl, axis=1))))
        return worst


def _helmert(m: int) -> np.ndarray:
    """Orthonormal basis of the sum-zero hyperplane of ``R^m`` (rows)."""
    rows = []
    for k in range(1, m):
        row = np.zeros(m)
        row[:k] = 1.0
        row[k] = -float(k)
        rows.append(row / np.sqrt(k * (k + 1)))
    return np.array(rows).reshape(m - 1, m)


def _simple_indices(positive: np.ndarray) -> list:
    """Positive roots that are not sums of two other positive roots."""
    P = positive.shape[0]
    simple = []
    for i in range(P):
        decomposable = False
        for j in range(P):
            if j == i:
                continue
            rest = positive[i] - positive[j]
            if np.min(np.linalg.norm(positive - rest, axis=1)) < 1e-9:
                decomposable = True
                break
        if not decomposable:
            simple.append(i)
    return simple


@lru_cache(maxsize=None)
def root_system(family: str, rank: int) -> RootSystem:
    """Standard realization of a classical root system.

    Parameters
    ----------
    family : {"A", "B", "C", "D"}
    rank : int
        ``rank >= 1``; type D needs ``rank >= 2`` (``D_2 = A_1 x A_1`` is
        accepted as the reducible convention).

    Returns
    -------
    RootSystem
        Type A is expressed in Helmert coordinates and its positive roots are
        ``e_i - e_j`` (``i < j``, lexicographic), matching
        :func:`build_cartan_frame`.  Types B, C, D use the coordinates of
        ``R^rank`` with positive system selected by the functional
        ``(rank, rank-1, ..., 1)``.
    """
    if not isinstance(rank, (int, np.integer)) or rank < 1:
        raise ConstructionError(f"rank must be a positive integer, got {rank!r}")
    family = str(family).upper()
    rank = int(rank)
    if family == "A":
        m = rank + 1
        hb = _helmert(m)
        pos = []
        for i, j in itertools.combinations(range(m), 2):
            e = np.zeros(m)
            e[i], e[j] = 1.0, -1.0
            pos.append(hb @ e)
        positive = np.array(pos)
    elif family in ("B", "C", "D"):
        if family == "D" and rank < 2:
            raise ConstructionError("type D requires rank >= 2")
        eye = np.eye(rank)
        pos = []
        for i, j in itertools.combinations(range(rank), 2):
            pos.append(eye[i] - eye[j])
            pos.append(eye[i] + eye[j])
        if family == "B":
            pos.extend(eye[i] for i in range(rank))
        elif family == "C":
            pos.extend(2.0 * eye[i] for i in range(rank))
        positive = np.array(pos).reshape(-1, rank)
        func = np.arange(rank, 0, -1, dtype=float)
        assert np.all(positive @ func > 0)
    else:
        raise ConstructionError(f"unknown family {family!r}")
    positive.setflags(write=False)
    return RootSystem(family, rank, positive, (1,) * positive.shape[0])


# ---------------------------------------------------------------------------
# Cartan frame of sl(m, R)
# ---------------------------------------------------------------------------


def _sym_unit(m: int, i: int, j: int) -> np.ndarray:
    out = np.zeros((m, m))
    out[i, j] = out[j, i] = 1.0 / np.sqrt(2.0)
    return out


def _skew_unit(m: int, i: int, j: int) -> np.ndarray:
    out = np.zeros((m, m))
    out[i, j] = 1.0 / np.sqrt(2.0)
    out[j, i] = -1.0 / np.sqrt(2.0)
    return out


@dataclass(frozen=True, eq=False)
class CartanFrame:
    """Adapted orthonormal basis ``a + sum p_alpha`` of traceless symmetric matrices.

    Attributes
    ----------
    m : int
        Matrix size.
    a_basis : ndarray, shape (r, m, m)
        Orthonormal traceless diagonal matrices (Helmert basis).
    roots : tuple of (int, int)
        Index pairs ``(i, j)``, ``i < j``, labeling the positive roots.
    p_blocks : tuple of ndarray, each shape (1, m, m)
        Orthonormal basis of ``p_alpha`` per positive root.
    k_blocks : tuple of ndarray, each shape (1, m, m)
        Basis of ``k_alpha`` per positive root.
    """

    m: int
    a_basis: np.ndarray
    roots: tuple
    p_blocks: tuple
    k_blocks: tuple
    _basis: np.ndarray = field(repr=False)

    @property
    def r(self) -> int:
        return self.m - 1

    @property
    def n(self) -> int:
        return self.m * (self.m + 1) // 2 - 1

    @property
    def basis(self) -> np.ndarray:
        """All ``n`` basis matrices: ``a_basis`` then the ``p`` blocks."""
        return self._basis

    @property
    def root_system(self) -> RootSystem:
        return root_system("A", self.r)

    def block_slices(self) -> list:
        """Index ranges into :attr:`basis` of each ``p_alpha`` block."""
        out, start = [], self.r
        for blk in self.p_blocks:
            out.append(slice(start, start + blk.shape[0]))
            start += blk.shape[0]
        return out

    def coords(self, U) -> np.ndarray:
        """Coordinates of a symmetric matrix (or a stack) in :attr:`basis`."""
        U = np.asarray(U, dtype=float)
        return np.einsum("lij,...ij->...l", self._basis, U)

    def matrix(self, c) -> np.ndarray:
        """Inverse of :meth:`coords`."""
        return np.einsum("...l,lij->...ij", np.asarray(c, dtype=float), self._basis)

    def a_coords(self, H) -> np.ndarray:
        """Abstract coordinates of a traceless diagonal matrix."""
        H = np.asarray(H, dtype=float)
        return np.einsum("lij,...ij->...l", self.a_basis, H)

    def a_matrix(self, h) -> np.ndarray:
        return np.einsum("...l,lij->...ij", np.asarray(h, dtype=float), self.a_basis)

    def root_values(self, H) -> np.ndarray:
        """``alpha_ij(H) = H_ii - H_jj`` for every positive root."""
        d = np.diagonal(np.asarray(H, dtype=float))
        return np.array([d[i] - d[j] for i, j in self.roots])

    def to_json(self) -> str:
        return frame_to_json(self)


@lru_cache(maxsize=None)
def build_cartan_frame(m: int) -> CartanFrame:
    """Build the adapted frame of ``sl(m, R)``.

    Parameters
    ----------
    m : int
        Matrix size, ``2 <= m <= 12``.

    Raises
    ------
    SizeError
        If ``m`` is outside the supported range.
    """
    if not isinstance(m, (int, np.integer)) or not 2 <= m <= MAX_M:
        raise SizeError(f"m must be an integer in [2, {MAX_M}], got {m!r}")
    m = int(m)
    hb = _helmert(m)
    a_basis = np.array([np.diag(row) for row in hb])
    roots = tuple(itertools.combinations(range(m), 2))
    p_blocks = tuple(_sym_unit(m, i, j)[None] for i, j in roots)
    k_blocks = tuple(_skew_unit(m, i, j)[None] for i, j in roots)
    basis = np.concatenate([a_basis] + list(p_blocks), axis=0)
    for arr in (a_basis, basis, *p_blocks, *k_blocks):
        arr.setflags(write=False)
    return CartanFrame(m, a_basis, roots, p_blocks, k_blocks, basis)


def frame_to_json(frame: CartanFrame) -> str:
    """Serialize a frame; matrices row-major with 17 significant digits."""

    def mat(a):
        return [[float(format(x, ".17g")) for x in row] for row in a]

    doc = {
        "m": frame.m,
        "n": frame.n,
        "r": frame.r,
        "roots": [list(ij) for ij in frame.roots],
        "a_basis": [mat(a) for a in frame.a_basis],
        "p_blocks": [[mat(a) for a in blk] for blk in frame.p_blocks],
        "k_blocks": [[mat(a) for a in blk] for blk in frame.k_blocks],
    }
    return json.dumps(doc, sort_keys=True)


def frame_from_json(text: str) -> CartanFrame:
    doc = json.loads(text)
    a_basis = np.array(doc["a_basis"], dtype=float)
    p_blocks = tuple(np.array(b, dtype=float) for b in doc["p_blocks"])
    k_blocks = tuple(np.array(b, dtype=float) for b in doc["k_blocks"])
    basis = np.concatenate([a_basis] + list(p_blocks), axis=0)
    return CartanFrame(
        int(doc["m"]), a_basis, tuple(tuple(x) for x in doc["roots"]), p_blocks, k_blocks, basis
    )


# ---------------------------------------------------------------------------
# Root action check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RootActionReport:
    """Outcome of :func:`verify_root_action`.

    ``violations`` lists ``(root_index, kind, residual)`` for every failed
    check; kinds are ``"bracket"``, ``"pairing"``, ``"gram"``.
    """

    max_residual: float
    gram_residual: float
    violations: tuple
    ok: bool


def _cayley_image(u: np.ndarray, i: int, j: int) -> np.ndarray:
    """``(I - theta)(I + theta)^{-1} u`` for ``u`` in ``k_alpha_ij``.

    ``(I + theta)`` maps ``g_alpha = span(E_ij)`` onto ``k_alpha``; its inverse
    picks the upper entry, and ``(I - theta)`` symmetrizes it.
    """
    X = np.zeros_like(u)
    X[i, j] = u[i, j]
    return X + X.T


def verify_root_action(frame: CartanFrame, samples: int = 8, seed: int = 0, tol: float = 1e-12):
    """Check the bracket identity ``[u, v] = -alpha(v) (I - theta)(I + theta)^{-1} u``.

    The identity is tested for every ``k_alpha`` basis element against the
    ``a`` basis and ``samples`` random elements of ``a``.  The image must also
    coincide with the stored ``p_alpha`` basis element, and the full basis
    must be orthonormal.  Violations are reported, never raised.
    """
    rng = np.random.default_rng(seed)
    vs = list(frame.a_basis) + [frame.a_matrix(rng.standard_normal(frame.r)) for _ in range(samples)]
    violations = []
    worst = 0.0
    for idx, (i, j) in enumerate(frame.roots):
        for u, p in zip(frame.k_blocks[idx], frame.p_blocks[idx]):
            image = _cayley_image(u, i, j)
            bracket_res = 0.0
            for v in vs:
                alpha_v = v[i, i] - v[j, j]
                res = np.linalg.norm(u @ v - v @ u + alpha_v * image)
                bracket_res = max(bracket_res, float(res))
            pair_res = float(np.linalg.norm(image - p))
            worst = max(worst, bracket_res, pair_res)
            if bracket_res > tol:
                violations.append((idx, "bracket", bracket_res))
            if pair_res > tol:
                violations.append((idx, "pairing", pair_res))
    B = frame.basis.reshape(frame.basis.shape[0], -1)
    gram_res = float(np.max(np.abs(B @ B.T - np.eye(B.shape[0]))))
    if gram_res > tol:
        violations.append((-1, "gram", gram_res))
    worst = max(worst, gram_res)
    return RootActionReport(worst, gram_res, tuple(violations), not violations)


# ---------------------------------------------------------------------------
# Chamber vectors
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ChamberVector:
    """A vector of ``a`` with its vanishing-root list.

    Attributes
    ----------
    coords : ndarray, shape (rank,)
        Abstract coordinates (Helmert coordinates for sl(m)).
    system : RootSystem
    vanishing : tuple of int
        Positive-root indices with ``|alpha(v)| <= tol``.
    unit : bool
    tol : float
    """

    coords: np.ndarray
    system: RootSystem
    vanishing: tuple
    unit: bool
    tol: float = SINGULAR_TOL

    @property
    def regular(self) -> bool:
        return not self.vanishing

    def values(self) -> np.ndarray:
        return self.system.values(self.coords)

    def matrix(self, frame: CartanFrame) -> np.ndarray:
        """Traceless diagonal matrix (type A only)."""
        return frame.a_matrix(self.coords)


def chamber_vector(system: RootSystem, coords, tol: float = SINGULAR_TOL) -> ChamberVector:
    """Wrap coordinates in ``a`` as a :class:`ChamberVector`."""
    c = np.array(coords, dtype=float).reshape(system.rank)
    c.setflags(write=False)
    vals = system.values(c)
    vanishing = tuple(int(i) for i in np.flatnonzero(np.abs(vals) <= tol))
    unit = bool(abs(np.linalg.norm(c) - 1.0) <= 1e-12)
    return ChamberVector(c, system, vanishing, unit, tol)


def chamber_vector_from_matrix(frame: CartanFrame, H, tol: float = SINGULAR_TOL) -> ChamberVector:
    return chamber_vector(frame.root_system, frame.a_coords(H), tol)


def chamber_barycenter(frame: CartanFrame) -> ChamberVector:
    """Unit vector along the sum of the positive roots.

    For sl(m) this is ``diag(m-1, m-3, ..., 1-m)`` normalized.
    """
    s = frame.root_system.positive.sum(axis=0)
    return chamber_vector(frame.root_system, s / np.linalg.norm(s))


def _generic_vector(rank: int) -> np.ndarray:
    g = np.array([1.0 / np.sqrt(p) for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)[:rank]])
    return g * (1.0 + 1e-3 * np.arange(rank))


def _chamber_positive(system: RootSystem, v: np.ndarray, tol: float) -> np.ndarray:
    """Positive system of a Weyl chamber whose closure contains ``v``.

    Roots with ``alpha(v) = 0`` are oriented by a fixed generic vector.
    """
    R = system.positive
    vals = R @ v
    tie = R @ _generic_vector(system.rank)
    sign = np.where(np.abs(vals) > tol, np.sign(vals), np.sign(tie))
    return R * sign[:, None]


def maximally_singular_near(v: ChamberVector, rho: float) -> ChamberVector:
    """Most singular chamber-face projection of ``v`` within angle ``rho``.

    Enumerates the faces of a closed Weyl chamber containing ``v`` (subsets
    of simple roots that contain the simple roots already vanishing on ``v``),
    projects ``v`` onto each face's span, discards projections outside the
    closed chamber or farther than ``rho`` in angle, and keeps the face whose
    projection has the most vanishing roots (counted with multiplicity).
    Ties go to the smallest angle, then to the lexicographically first face.

    Parameters
    ----------
    v : ChamberVector
        Unit vector.
    rho : float
        Angular radius, ``0 < rho < 1/2``.
    """
    if not v.unit:
        raise ValueError("v must be a unit vector")
    if not 0.0 < rho < 0.5:
        raise ValueError("rho must lie in (0, 1/2)")
    system, tol = v.system, v.tol
    x = np.asarray(v.coords, dtype=float)
    pos = _chamber_positive(system, x, tol)
    simple = pos[_simple_indices(pos)]
    mult = np.array(system.multiplicities)
    base = set(int(i) for i in np.flatnonzero(np.abs(simple @ x) <= tol))
    others = [i for i in range(len(simple)) if i not in base]

    def score(y):
        return int(mult[np.abs(system.values(y)) <= tol].sum())

    candidates = [(-score(x), 0.0, tuple(sorted(base)), x)]
    for size in range(1, len(others) + 1):
        if len(base) + size >= system.rank:
            break
        for extra in itertools.combinations(others, size):
            J = tuple(sorted(base.union(extra)))
            A = simple[list(J)]
            y = x - A.T @ np.linalg.solve(A @ A.T, A @ x)
            ny = np.linalg.norm(y)
            if ny <= 1e-12:
                continue
            y = y / ny
            if np.any(pos @ y < -tol):
                continue
            ang = float(np.arccos(np.clip(x @ y, -1.0, 1.0)))
            if ang > rho:
                continue
            candidates.append((-score(y), ang, J, y))
    best = min(candidates, key=lambda c: c[:3])[3]
    return chamber_vector(system, best, tol)


def orthogonal_root_sum(frame: CartanFrame, v_star: ChamberVector) -> np.ndarray:
    """Orthonormal basis of ``sum_{alpha(v*) != 0} p_alpha``.

    Returns
    -------
    ndarray, shape (d, m, m)
        The ``p_alpha`` basis matrices of the non-vanishing positive roots.
    """
    van = set(v_star.vanishing)
    mats = [blk for idx, blk in enumerate(frame.p_blocks) if idx not in van]
    if not mats:
        return np.zeros((0, frame.m, frame.m))
    return np.concatenate(mats, axis=0)


def orthogonal_root_indices(frame: CartanFrame, v_star: ChamberVector) -> list:
    """Indices into :attr:`CartanFrame.basis` of :func:`orthogonal_root_sum`."""
    van = set(v_star.vanishing)
    out = []
    for idx, sl in enumerate(frame.block_slices()):
        if idx not in van:
            out.extend(range(sl.start, sl.stop))
    return out


@dataclass(frozen=True)
class SLConstants:
    """Dimension data of ``SL(m, R)/SO(m)``."""

    m: int
    n: int
    r: int
    threshold: int
    splitting_rank: int


def sl_constants(m: int) -> SLConstants:
    """Dimension ``n``, rank ``r``, threshold ``n - r + 2`` and splitting rank."""
    if not isinstance(m, (int, np.integer)) or m < 2:
        raise SizeError(f"m must be an integer >= 2, got {m!r}")
    m = int(m)
    n = m * (m + 1) // 2 - 1
    r = m - 1
    return SLConstants(m, n, r, n - r + 2, m * (m - 1) // 2)
