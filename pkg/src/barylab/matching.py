"""Frame selection on root systems.

Contents: Hall-type matching with multiplicity demands, rooted-subspace
counts ``t_i``, the dimension estimate for sums of root-space blocks, frame
picking in the complement of the flat, an empirical angle-ratio probe, and
the weak eigenvalue matching pipeline.

Indices of vectors and ground-set elements are 0-based throughout.  In the
canonical chart the flat ``F`` is the span of the first ``r`` frame
coordinates and ``F^perp`` the span of the root-space coordinates.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import CapabilityError, InfeasibleFrameError, PreconditionError
from .forms import frame_deviation, is_delta_orthonormal
from .liecore import (
    CartanFrame,
    ChamberVector,
    RootSystem,
    chamber_vector,
    maximally_singular_near,
    orthogonal_root_indices,
)

EXHAUSTIVE_RANK = 4
DEFAULT_RHO = 0.2
DEFAULT_DELTA = 0.05
DEFAULT_C_PRIME = 20.0
ALIGN_TOL = 1e-8


# ---------------------------------------------------------------------------
# Hall matching
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MatchingInstance:
    """Demands ``d_i`` and selectable sets ``B_i`` over a ground set."""

    demands: tuple
    sets: tuple
    ground: tuple = ()

    def __post_init__(self):
        if len(self.demands) != len(self.sets):
            raise PreconditionError("one selectable set per demand")
        if any(int(d) < 1 for d in self.demands):
            raise PreconditionError("demands must be positive")
        if self.ground:
            g = set(self.ground)
            if any(not set(s) <= g for s in self.sets):
                raise PreconditionError("selectable sets must lie in the ground set")

    def deficiency(self, subset) -> int:
        """``sum_{i in A} d_i - |union_{i in A} B_i|`` (positive means violated)."""
        subset = list(subset)
        union = set().union(*(set(self.sets[i]) for i in subset)) if subset else set()
        return sum(int(self.demands[i]) for i in subset) - len(union)


@dataclass(frozen=True)
class FrameSelection:
    """Assignment per vector, or a deficiency witness when no assignment exists."""

    assignment: tuple | None
    deficient: tuple | None

    @property
    def complete(self) -> bool:
        return self.assignment is not None


def hall_matching(instance: MatchingInstance) -> FrameSelection:
    """Assign ``d_i`` distinct elements of ``B_i`` to every vector ``i``.

    Each demand is expanded into unit copies and a maximum bipartite matching
    is grown by augmenting paths.  When some copy stays unmatched, the copies
    reachable by alternating paths from unmatched copies give a deficient
    vector set, which is then shrunk greedily to an inclusion-minimal one.
    """
    copies = [i for i, d in enumerate(instance.demands) for _ in range(int(d))]
    adj = [sorted(instance.sets[i]) for i in copies]
    match_of_elem: dict = {}
    match_of_copy = [None] * len(copies)

    def augment(c, seen):
        for e in adj[c]:
            if e in seen:
                continue
            seen.add(e)
            if e not in match_of_elem or augment(match_of_elem[e], seen):
                match_of_elem[e] = c
                match_of_copy[c] = e
                return True
        return False

    for c in range(len(copies)):
        augment(c, set())

    if all(e is not None for e in match_of_copy):
        assignment = [[] for _ in instance.demands]
        for c, e in enumerate(match_of_copy):
            assignment[copies[c]].append(e)
        return FrameSelection(tuple(tuple(sorted(a)) for a in assignment), None)

    # alternating search from unmatched copies
    reached = set(c for c, e in enumerate(match_of_copy) if e is None)
    frontier = list(reached)
    while frontier:
        nxt = []
        for c in frontier:
            for e in adj[c]:
                c2 = match_of_elem.get(e)
                if c2 is not None and c2 not in reached:
                    reached.add(c2)
                    nxt.append(c2)
        frontier = nxt
    witness = sorted(set(copies[c] for c in reached))
    if instance.deficiency(witness) <= 0:  # pragma: no cover - guarded by theory
        raise AssertionError("alternating search produced no deficient set")
    changed = True
    while changed:
        changed = False
        for i in list(witness):
            trial = [j for j in witness if j != i]
            if trial and instance.deficiency(trial) > 0:
                witness = trial
                changed = True
                break
    return FrameSelection(None, tuple(witness))


def exhaustive_feasible(instance: MatchingInstance) -> bool:
    """Generalized Hall condition checked over every vector subset."""
    k = len(instance.demands)
    for size in range(1, k + 1):
        for sub in itertools.combinations(range(k), size):
            if instance.deficiency(sub) > 0:
                return False
    return True


def check_selection(instance: MatchingInstance, sel: FrameSelection) -> bool:
    """Soundness of an assignment or of a deficiency witness."""
    if sel.complete:
        used = [e for a in sel.assignment for e in a]
        if len(used) != len(set(used)):
            return False
        return all(
            len(a) == int(d) and set(a) <= set(s)
            for a, d, s in zip(sel.assignment, instance.demands, instance.sets)
        )
    return instance.deficiency(sel.deficient) > 0


# ---------------------------------------------------------------------------
# Rooted subspaces and the dimension estimate
# ---------------------------------------------------------------------------


def _in_span(basis: np.ndarray, vecs: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Mask of rows of ``vecs`` lying in the row span of ``basis``."""
    Qb, _ = np.linalg.qr(basis.T)
    resid = vecs - (vecs @ Qb) @ Qb.T
    return np.linalg.norm(resid, axis=1) <= tol


def rooted_subspace_count(rs: RootSystem, i: int) -> int:
    """Largest number of positive roots in an ``i``-dimensional subspace.

    Every maximally rooted subspace is spanned by the roots it contains, so
    it suffices to scan spans of ``i``-subsets of positive roots.
    """
    if rs.rank > EXHAUSTIVE_RANK:
        raise CapabilityError(f"exhaustive mode supports rank <= {EXHAUSTIVE_RANK}")
    if not 0 <= i <= rs.rank:
        raise PreconditionError("0 <= i <= rank required")
    if i == 0:
        return 0
    P = rs.positive
    best = 0
    for sub in itertools.combinations(range(P.shape[0]), i):
        B = P[list(sub)]
        if np.linalg.matrix_rank(B, tol=1e-9) < i:
            continue
        best = max(best, int(_in_span(B, P).sum()))
    return best


def t_table(rs: RootSystem) -> list:
    """``[t_0, ..., t_rank]``."""
    return [rooted_subspace_count(rs, i) for i in range(rs.rank + 1)]


def exclusion_holds(r: int, k: int) -> bool:
    """Whether ``k(2r - k + 1)/2 >= 2k + r - 2``."""
    return k * (2 * r - k + 1) >= 2 * (2 * k + r - 2)


@dataclass(frozen=True)
class DimensionRecord:
    subset: tuple
    dim: int
    required: int
    floor: int
    passes: bool
    floor_ok: bool


@dataclass(frozen=True)
class DimensionEstimate:
    records: tuple
    all_pass: bool
    floor_ok: bool


def _nonvanishing_mask(rs: RootSystem, v, tol: float) -> int:
    vals = rs.values(v)
    bits = 0
    for idx in np.flatnonzero(np.abs(vals) > tol):
        bits |= 1 << int(idx)
    return bits


def dimension_estimate(rs: RootSystem, frame: CartanFrame | None, singular_tuple) -> DimensionEstimate:
    """Dimensions of sums of root-space blocks over every sub-tuple.

    For a sub-tuple of size ``k`` spanning ``V``, the dimension is the number
    of positive roots (with multiplicity) not vanishing on ``V``; it is
    compared with ``2k + r - 2`` and with the floor ``k(2r - k + 1)/2``.

    Parameters
    ----------
    rs : RootSystem
    frame : CartanFrame or None
        When given (type A), block dimensions are read from the frame.
    singular_tuple : sequence of ChamberVector
        Must span the ambient space of ``rs``.
    """
    vecs = [np.asarray(v.coords if isinstance(v, ChamberVector) else v, dtype=float) for v in singular_tuple]
    r = rs.rank
    if len(vecs) > r or np.linalg.matrix_rank(np.array(vecs), tol=1e-9) < r:
        raise PreconditionError("tuple must span the flat")
    if frame is not None:
        mult = [blk.shape[0] for blk in frame.p_blocks]
    else:
        mult = list(rs.multiplicities)
    masks = [_nonvanishing_mask(rs, v, 1e-9) for v in vecs]
    records = []
    for k in range(1, len(vecs) + 1):
        for sub in itertools.combinations(range(len(vecs)), k):
            bits = 0
            for i in sub:
                bits |= masks[i]
            dim = sum(mult[a] for a in range(len(mult)) if bits >> a & 1)
            req = 2 * k + r - 2
            floor = k * (2 * r - k + 1) // 2
            records.append(DimensionRecord(sub, dim, req, floor, dim >= req, dim >= floor))
    return DimensionEstimate(
        tuple(records), all(x.passes for x in records), all(x.floor_ok for x in records)
    )


def type_a_wall_rays(m: int) -> np.ndarray:
    """Unit vectors of ``a`` with exactly two distinct eigenvalues.

    These are the (Weyl images of the) chamber-face rays, i.e. the maximally
    singular directions, one per nonempty proper subset of ``{0..m-1}``.
    """
    from .liecore import _helmert

    hb = _helmert(m)
    rays = []
    for size in range(1, m):
        for sub in itertools.combinations(range(m), size):
            e = np.zeros(m)
            e[list(sub)] = 1.0
            c = hb @ e
            rays.append(c / np.linalg.norm(c))
    return np.array(rays)


def enumerate_wall_tuples(rs: RootSystem, rays: np.ndarray):
    """All spanning ``rank``-tuples (as index tuples) of the given rays."""
    r = rs.rank
    for sub in itertools.combinations(range(rays.shape[0]), r):
        if np.linalg.matrix_rank(rays[list(sub)], tol=1e-9) == r:
            yield sub


def sweep_dimension_estimates(rs: RootSystem, rays: np.ndarray, frame=None):
    """Minimum dimension slack over every spanning tuple of ``rays``.

    Returns ``(n_tuples, n_failing, min_slack, min_floor_slack)`` where slack
    is ``dim - (2k + r - 2)`` minimized over all sub-tuples.  Uses bitmask
    counting (multiplicities are one).
    """
    r = rs.rank
    masks = [_nonvanishing_mask(rs, v, 1e-9) for v in rays]
    count = fails = 0
    min_slack = min_floor = None
    subs = [
        (k, sub) for k in range(1, r + 1) for sub in itertools.combinations(range(r), k)
    ]
    for tup in enumerate_wall_tuples(rs, rays):
        count += 1
        bad = False
        for k, sub in subs:
            bits = 0
            for i in sub:
                bits |= masks[tup[i]]
            dim = bin(bits).count("1")
            s = dim - (2 * k + r - 2)
            f = dim - k * (2 * r - k + 1) // 2
            min_slack = s if min_slack is None else min(min_slack, s)
            min_floor = f if min_floor is None else min(min_floor, f)
            bad = bad or s < 0
        fails += bad
    return count, fails, min_slack, min_floor


# ---------------------------------------------------------------------------
# Frame picking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PickedFrame:
    """Selected root-space basis vectors in frame coordinates.

    ``vectors`` has one unit column per selected basis element; ``owners[j]``
    is the index of the input vector that column serves.
    """

    vectors: np.ndarray
    indices: tuple
    owners: tuple
    v_stars: tuple
    selection: FrameSelection


def pick_orthogonal_frame(frame: CartanFrame, half_frame, rho: float = DEFAULT_RHO,
                          v_stars=None) -> PickedFrame:
    """Choose ``3r - 2`` distinct root-space basis vectors.

    Vector 0 receives ``r`` elements and every other vector two, each taken
    from the root spaces not vanishing on its maximally singular neighbor.

    Parameters
    ----------
    half_frame : array_like, shape (r, r)
        Rows are unit vectors of ``a`` in Helmert coordinates forming a
        1/2-orthonormal frame.
    v_stars : sequence of ChamberVector, optional
        Precomputed singular neighbors.

    Raises
    ------
    InfeasibleFrameError
        If no selection exists; carries the deficient vector set.
    """
    H = np.asarray(half_frame, dtype=float)
    r = frame.r
    if H.shape != (r, r):
        raise PreconditionError("need r vectors of a")
    if not is_delta_orthonormal(H.T, 0.5):
        raise PreconditionError("input must be a 1/2-orthonormal frame")
    rs = frame.root_system
    if v_stars is None:
        v_stars = tuple(maximally_singular_near(chamber_vector(rs, h), rho) for h in H)
    sets = tuple(tuple(orthogonal_root_indices(frame, vs)) for vs in v_stars)
    demands = (r,) + (2,) * (r - 1)
    inst = MatchingInstance(demands, sets, tuple(range(r, frame.n)))
    sel = hall_matching(inst)
    if not sel.complete:
        raise InfeasibleFrameError(
            f"no frame: deficient vectors {sel.deficient}", sel.deficient, sel
        )
    indices, owners = [], []
    for i, a in enumerate(sel.assignment):
        for e in a:
            indices.append(e)
            owners.append(i)
    V = np.eye(frame.n)[:, indices]
    return PickedFrame(V, tuple(indices), tuple(owners), tuple(v_stars), sel)


# ---------------------------------------------------------------------------
# Angles
# ---------------------------------------------------------------------------


def adjoint_action(frame: CartanFrame, h: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Frame coordinates of ``h U h^T`` for ``U`` with coordinates ``c``.

    ``c`` may hold several vectors as columns.
    """
    U = frame.matrix(np.asarray(c).T)
    return frame.coords(h @ U @ h.T).T


def angle_to_flat(frame: CartanFrame, c: np.ndarray) -> np.ndarray:
    """Angle between vectors (columns) and the flat ``F``."""
    c = np.asarray(c, dtype=float)
    c = c / np.linalg.norm(c, axis=0)
    return np.arcsin(np.clip(np.linalg.norm(c[frame.r :], axis=0), 0.0, 1.0))


def angle_to_flat_perp(frame: CartanFrame, c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    c = c / np.linalg.norm(c, axis=0)
    return np.arcsin(np.clip(np.linalg.norm(c[: frame.r], axis=0), 0.0, 1.0))


def _skew_from_roots(frame: CartanFrame, coeffs: np.ndarray) -> np.ndarray:
    out = np.zeros((frame.m, frame.m))
    for c, blk in zip(coeffs, frame.k_blocks):
        out += c * blk[0]
    return out


def _centralizer_sample(frame: CartanFrame, v_star: ChamberVector, rng) -> np.ndarray:
    """Haar element of the identity component of the centralizer of ``v*``."""
    d = np.diagonal(v_star.matrix(frame))
    k0 = np.eye(frame.m)
    used = np.zeros(frame.m, dtype=bool)
    for i in range(frame.m):
        if used[i]:
            continue
        block = np.flatnonzero(np.abs(d - d[i]) <= v_star.tol)
        used[block] = True
        if len(block) > 1:
            Qb, Rb = np.linalg.qr(rng.standard_normal((len(block), len(block))))
            Qb = Qb * np.sign(np.diag(Rb))
            if np.linalg.det(Qb) < 0:
                Qb[:, 0] *= -1
            k0[np.ix_(block, block)] = Qb
    return k0


def _haar(m, rng):
    Q, R = np.linalg.qr(rng.standard_normal((m, m)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] *= -1
    return Q


def sample_rotations(frame: CartanFrame, v_star: ChamberVector, samples: int, seed) -> np.ndarray:
    """Haar samples plus families concentrated near ``I`` and near ``K_{v*}``.

    The stack is ordered: first a third Haar, then near-identity, then
    near-centralizer elements; the first element is the identity.
    """
    rng = np.random.default_rng(seed)
    m, P = frame.m, len(frame.roots)
    out = [np.eye(m)]
    n_haar = samples // 3
    n_id = (samples - n_haar) // 2
    n_cent = samples - n_haar - n_id - 1
    for _ in range(n_haar):
        out.append(_haar(m, rng))
    for _ in range(n_id):
        scale = 10.0 ** rng.uniform(-6, -1)
        out.append(expm(_skew_from_roots(frame, scale * rng.standard_normal(P))))
    for _ in range(max(n_cent, 0)):
        scale = 10.0 ** rng.uniform(-6, -1)
        k0 = _centralizer_sample(frame, v_star, rng)
        out.append(k0 @ expm(_skew_from_roots(frame, scale * rng.standard_normal(P))))
    return np.array(out)


@dataclass(frozen=True)
class ProbeResult:
    sup: float
    argmax: int
    skipped: int
    evaluated: int


def angle_ratios(frame: CartanFrame, hs: np.ndarray, u: np.ndarray, v: np.ndarray,
                 floor: float = 1e-12):
    """Ratios ``angle(h u, F^perp) / angle(h v, F)`` over a stack of rotations.

    Returns the ratio array (``nan`` where the denominator is below ``floor``).
    """
    U = frame.matrix(u)
    V = frame.matrix(v)
    hu = frame.coords(hs @ U @ np.swapaxes(hs, -1, -2)).T
    hv = frame.coords(hs @ V @ np.swapaxes(hs, -1, -2)).T
    num = angle_to_flat_perp(frame, hu)
    den = angle_to_flat(frame, hv)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(den >= floor, num / den, np.nan)
    return ratio


def angle_ratio_probe(frame: CartanFrame, v_star: ChamberVector, u, samples: int = 10000,
                      seed=0, v=None) -> ProbeResult:
    """Empirical supremum of ``angle(h u, F^perp) / angle(h v, F)``.

    Parameters
    ----------
    v_star : ChamberVector
        Maximally singular vector; ``v`` defaults to it.
    u : array_like, shape (n,)
        Unit vector in the sum of root spaces not vanishing on ``v*``.
    v : array_like, shape (r,), optional
        Helmert coordinates of a unit vector of ``a`` near ``v*``.
    """
    u = np.asarray(u, dtype=float)
    allowed = set(orthogonal_root_indices(frame, v_star))
    if any(abs(u[i]) > 1e-12 for i in range(frame.n) if i not in allowed):
        raise PreconditionError("u must lie in the root spaces not vanishing on v*")
    vv = np.asarray(v_star.coords if v is None else v, dtype=float)
    vc = np.concatenate([vv, np.zeros(frame.n - frame.r)])
    hs = sample_rotations(frame, v_star, samples, seed)
    ratio = angle_ratios(frame, hs, u, vc)
    finite = np.isfinite(ratio)
    if not finite.any():
        return ProbeResult(0.0, -1, int((~finite).sum()), 0)
    idx = int(np.nanargmax(ratio))
    return ProbeResult(float(ratio[idx]), idx, int((~finite).sum()), int(finite.sum()))


# ---------------------------------------------------------------------------
# Weak eigenvalue matching
# ---------------------------------------------------------------------------


@dataclass
class WeakMatchingResult:
    """Output frame (columns, frame coordinates) with diagnostics."""

    vectors: np.ndarray
    owners: tuple
    deviation: float
    delta: float
    passes: bool
    alignments: list
    v_stars: tuple
    fallback: tuple
    picked: PickedFrame
    angle_sup: dict = field(default_factory=dict)


def _root_defect(frame: CartanFrame, c: np.ndarray, nonvanishing: list) -> np.ndarray:
    d = np.zeros_like(c)
    d[nonvanishing] = c[nonvanishing]
    return d


def align_to_centralizer_flat(frame: CartanFrame, c: np.ndarray, v_star: ChamberVector,
                              tol: float = ALIGN_TOL, max_iter: int = 30):
    """Small rotation ``k`` with ``k v k^T`` free of the root spaces not vanishing on ``v*``.

    Starts from the first-order solution ``u_alpha = d_alpha / alpha(a)`` on
    each non-vanishing root (``d`` the defect, ``a`` the flat part) and
    repeats the same correction until the defect is below ``tol``.

    Returns
    -------
    k : ndarray, shape (m, m)
    u : ndarray, shape (m, m)
        Antisymmetric generator with ``k = expm(u)``.
    residual : float
    iterations : int
    """
    idx = orthogonal_root_indices(frame, v_star)
    slices = frame.block_slices()
    van = set(v_star.vanishing)
    roots = [a for a in range(len(frame.roots)) if a not in van]
    u = np.zeros((frame.m, frame.m))
    V = frame.matrix(c)
    for it in range(max_iter + 1):
        k = expm(u)
        w = frame.coords(k @ V @ k.T)
        res = float(np.linalg.norm(w[idx]))
        if res <= tol:
            return k, u, res, it
        if it == max_iter:
            break
        a = frame.a_matrix(w[: frame.r])
        alpha = frame.root_values(a)
        for ai in roots:
            if abs(alpha[ai]) < 1e-6:
                raise PreconditionError("alignment failed: root value vanishes on the flat part")
            sl = slices[ai]
            u = u + (w[sl.start] / alpha[ai]) * frame.k_blocks[ai][0]
    raise PreconditionError(f"alignment residual {res:.2e} above {tol:.0e}")


def _block_diagonal_flat(frame: CartanFrame, w: np.ndarray, v_star: ChamberVector) -> np.ndarray:
    """Flat vector reached from ``w`` by the centralizer of ``v*``.

    Eigenvalues of each eigen-block of ``v*`` are placed in the same
    relative order as the diagonal entries of ``w`` in that block.
    """
    W = frame.matrix(w)
    d = np.diagonal(v_star.matrix(frame))
    out = np.diagonal(W).copy()
    used = np.zeros(frame.m, dtype=bool)
    for i in range(frame.m):
        if used[i]:
            continue
        block = np.flatnonzero(np.abs(d - d[i]) <= v_star.tol)
        used[block] = True
        if len(block) > 1:
            ev = np.linalg.eigvalsh(W[np.ix_(block, block)])
            order = np.argsort(np.argsort(np.diagonal(W)[block], kind="stable"), kind="stable")
            out[block] = ev[order]
    return frame.a_coords(np.diag(out))


def _extend_in_flat(frame: CartanFrame, V: np.ndarray) -> np.ndarray:
    """Append unit vectors of ``F`` orthogonal to the flat parts of ``V``."""
    r, k = frame.r, V.shape[1]
    if k == r:
        return V
    P = V[:r]
    Q, _ = np.linalg.qr(np.hstack([P, np.eye(r)]))
    extra = Q[:, k:r]
    ext = np.zeros((frame.n, r - k))
    ext[:r] = extra
    return np.hstack([V, ext])


def weak_eigenvalue_matching(frame: CartanFrame, V, eps: float, rho: float = DEFAULT_RHO,
                             c_prime: float = DEFAULT_C_PRIME, delta: float = DEFAULT_DELTA,
                             h_samples: int = 0, seed=0) -> WeakMatchingResult:
    """Frame of ``2k + r - 2`` vectors matched to an orthonormal ``k``-frame near ``F``.

    Steps: extend to ``r`` vectors inside ``F``; pick a maximally singular
    ``v_i*`` near each flat part; rotate each ``v_i`` into the centralizer
    flat of ``v_i*`` by a small ``k_i``; move into ``F`` inside the
    centralizer; select root-space vectors by Hall matching; rotate them back
    by ``k_i^{-1}``.

    Parameters
    ----------
    V : array_like, shape (n, k)
        Orthonormal columns (frame coordinates) with angle to ``F`` at most
        ``eps``.
    eps : float
        Angle bound; must be below ``delta``.
    c_prime : float
        Configured constant for the output deviation check ``<= c_prime eps``.
    h_samples : int
        If positive, also record empirical angle-ratio suprema per owner.
    """
    V = np.asarray(V, dtype=float)
    r, n = frame.r, frame.n
    k = V.shape[1]
    if not 1 <= k <= r:
        raise PreconditionError("need 1 <= k <= r vectors")
    if np.max(np.abs(V.T @ V - np.eye(k))) > 1e-8:
        raise PreconditionError("input frame must be orthonormal")
    if eps >= delta:
        raise PreconditionError(f"eps {eps} must be below delta {delta}")
    ang = angle_to_flat(frame, V)
    if np.max(ang) > eps * (1 + 1e-9) + 1e-15:
        raise PreconditionError("input frame is farther than eps from the flat")
    W = _extend_in_flat(frame, V)
    rs = frame.root_system
    v_stars, fallback, aligns, flats = [], [], [], []
    for i in range(r):
        a = W[:r, i]
        a = a / np.linalg.norm(a)
        vs = maximally_singular_near(chamber_vector(rs, a), rho)
        fallback.append(bool(vs.regular))
        v_stars.append(vs)
        kk, u, res, its = align_to_centralizer_flat(frame, W[:, i], vs)
        aligns.append({"k": kk, "u": u, "residual": res, "iterations": its})
        w = frame.coords(kk @ frame.matrix(W[:, i]) @ kk.T)
        f = _block_diagonal_flat(frame, w, vs)
        flats.append(f / np.linalg.norm(f))
    picked = pick_orthogonal_frame(frame, np.array(flats), rho, tuple(v_stars))
    cols, owners = [], []
    for j, owner in enumerate(picked.owners):
        if owner >= k:
            continue
        kk = aligns[owner]["k"]
        U = frame.matrix(picked.vectors[:, j])
        cols.append(frame.coords(kk.T @ U @ kk))
        owners.append(owner)
    out = np.array(cols).T
    dev = frame_deviation(out)
    result = WeakMatchingResult(
        out, tuple(owners), dev, c_prime * eps, bool(dev <= c_prime * eps),
        aligns, tuple(v_stars), tuple(fallback), picked,
    )
    if h_samples > 0:
        result.angle_sup = matching_angle_sups(frame, V, result, h_samples, seed)
    return result


def matching_angle_sups(frame: CartanFrame, V: np.ndarray, result: WeakMatchingResult,
                        samples: int, seed) -> dict:
    """Empirical sup of ``angle(h v', F^perp) / angle(h v_i, F)`` per owner ``i``."""
    out = {}
    for i in sorted(set(result.owners)):
        hs = sample_rotations(frame, result.v_stars[i], samples, (seed, i))
        best = 0.0
        for j, owner in enumerate(result.owners):
            if owner != i:
                continue
            ratio = angle_ratios(frame, hs, result.vectors[:, j], V[:, i])
            if np.isfinite(ratio).any():
                best = max(best, float(np.nanmax(ratio)))
        out[i] = best
    return out
